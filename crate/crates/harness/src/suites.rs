//! Seeded invariant suites on random instances and brute-force oracles.

use inviscid_core::field::{Grid2D, ScalarField2D};
use inviscid_core::transport::{
    check_hm1_domination, check_order_w1_w2, w1_dual, wasserstein_exact, wasserstein_sinkhorn, DiscreteMeasure,
    Order, SinkhornConfig, TransportMethod,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const ORDER_SLACK: f64 = 1e-8;
pub const DUALITY_SLACK: f64 = 1e-8;
pub const HM1_TOL: f64 = 0.05;
pub const ORACLE_TOL: f64 = 1e-10;
pub const SINKHORN_REL_TOL: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub name: String,
    pub instances: usize,
    pub failures: usize,
    /// Largest violation measure seen (suite specific, <= 0 is clean).
    pub worst: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }

    fn collect(name: &str, margins: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            instances: margins.len(),
            failures: margins.iter().filter(|&&m| m > 0.0).count(),
            worst: margins.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

fn rng_for(seed: u64, i: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(i as u64);
    r
}

fn random_measure(rng: &mut ChaCha8Rng, k: usize, mass: f64) -> Result<DiscreteMeasure> {
    let pts = (0..k).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
    let s: f64 = raw.iter().sum();
    Ok(DiscreteMeasure::new(pts, raw.iter().map(|w| w * mass / s).collect(), 1.0)?)
}

fn run<F>(instances: usize, f: F) -> Result<Vec<f64>>
where
    F: Fn(usize) -> Result<f64> + Sync + Send,
{
    (0..instances).into_par_iter().map(f).collect()
}

/// `W1 <= sqrt(mass) W2` on random atom clouds of equal mass.
pub fn ordering_suite(instances: usize, seed: u64) -> Result<SuiteReport> {
    let margins = run(instances, |i| {
        let mut rng = rng_for(seed, i);
        let mass = rng.random_range(0.5..2.0);
        let (ka, kb) = (rng.random_range(1..=24), rng.random_range(1..=24));
        let a = random_measure(&mut rng, ka, mass)?;
        let b = random_measure(&mut rng, kb, mass)?;
        Ok(-ORDER_SLACK - check_order_w1_w2(&a, &b)?.slack)
    })?;
    Ok(SuiteReport::collect("ordering", margins))
}

/// The certified 1-Lipschitz dual value never exceeds the primal W1.
pub fn duality_suite(instances: usize, seed: u64) -> Result<SuiteReport> {
    let margins = run(instances, |i| {
        let mut rng = rng_for(seed, i);
        let mass = rng.random_range(0.5..2.0);
        let (ka, kb) = (rng.random_range(1..=24), rng.random_range(1..=24));
        let a = random_measure(&mut rng, ka, mass)?;
        let b = random_measure(&mut rng, kb, mass)?;
        let primal = wasserstein_exact(&a, &b, Order::One)?.0;
        let cert = w1_dual(&a, &b)?;
        Ok(cert.lower_bound - primal - DUALITY_SLACK)
    })?;
    Ok(SuiteReport::collect("duality", margins))
}

fn bump_mixture(rng: &mut ChaCha8Rng, grid: Grid2D) -> Result<ScalarField2D> {
    let k = rng.random_range(1..=3);
    let bumps: Vec<([f64; 2], f64, f64)> = (0..k)
        .map(|_| {
            (
                [rng.random::<f64>(), rng.random::<f64>()],
                rng.random_range(0.05..0.15),
                rng.random_range(0.5..1.5),
            )
        })
        .collect();
    Ok(ScalarField2D::from_fn(grid, |x, y| {
        bumps
            .iter()
            .map(|&(c, s, a)| {
                let d = grid.torus_distance([x, y], c);
                a * (-0.5 * d * d / (s * s)).exp()
            })
            .sum()
    })?)
}

/// `|f - g|_{H^-1} <= max(|f|_inf, |g|_inf)^{1/2} W2(f, g)` through the
/// full field-to-measure pipeline on random bump mixtures.
pub fn hm1_suite(instances: usize, seed: u64, n: usize) -> Result<SuiteReport> {
    let grid = Grid2D::new(n, 1.0)?;
    let margins = run(instances, |i| {
        let mut rng = rng_for(seed, i);
        let f = bump_mixture(&mut rng, grid)?;
        let g = bump_mixture(&mut rng, grid)?;
        let mf: f64 = f.values().iter().sum();
        let mg: f64 = g.values().iter().sum();
        let g = g.scale(mf / mg);
        let r = check_hm1_domination(&f, &g, n * n, &TransportMethod::Exact)?;
        Ok(r.relative_excess - HM1_TOL)
    })?;
    Ok(SuiteReport::collect("hm1_domination", margins))
}

fn torus_d(a: [f64; 2], b: [f64; 2]) -> f64 {
    let w = |x: f64| {
        let r = x.rem_euclid(1.0);
        r.min(1.0 - r)
    };
    w(a[0] - b[0]).hypot(w(a[1] - b[1]))
}

/// Optimal assignment cost `min_sigma mean_i |a_i - b_sigma(i)|^p`, by
/// enumerating all permutations (Heap's algorithm). Unit torus.
pub fn brute_force_assignment(a: &[[f64; 2]], b: &[[f64; 2]], p: i32) -> f64 {
    let k = a.len();
    assert_eq!(k, b.len());
    if k == 0 {
        return 0.0;
    }
    let mut perm: Vec<usize> = (0..k).collect();
    let cost = |perm: &[usize]| -> f64 { (0..k).map(|i| torus_d(a[i], b[perm[i]]).powi(p)).sum() };
    let mut best = cost(&perm);
    let mut c = vec![0usize; k];
    let mut i = 0;
    while i < k {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(cost(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best / k as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleInstance {
    pub a: Vec<[f64; 2]>,
    pub b: Vec<[f64; 2]>,
    pub order: u32,
    pub brute_force: f64,
    pub exact: f64,
}

/// One random equal-weight instance with `k` atoms per side, solved both by
/// enumeration and by the exact solver. Distances are `W_p`, unit mass.
pub fn oracle_instance(k: usize, order: Order, seed: u64) -> Result<OracleInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = |n| -> Vec<[f64; 2]> { (0..n).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect() };
    let a = pts(k);
    let b = pts(k);
    let w = vec![1.0 / k as f64; k];
    let mu = DiscreteMeasure::new(a.clone(), w.clone(), 1.0)?;
    let nu = DiscreteMeasure::new(b.clone(), w, 1.0)?;
    let p = order.exponent();
    let exact = wasserstein_exact(&mu, &nu, order)?.0;
    let brute_force = brute_force_assignment(&a, &b, p as i32).powf(1.0 / p as f64);
    Ok(OracleInstance {
        a,
        b,
        order: p,
        brute_force,
        exact,
    })
}

/// Exact solver against enumeration for every size 1..=8, both orders.
pub fn oracle_suite(per_size: usize, seed: u64) -> Result<SuiteReport> {
    let cases: Vec<(usize, Order, u64)> = (1..=8)
        .flat_map(|k| {
            (0..per_size).flat_map(move |i| {
                [Order::One, Order::Two].map(|o| (k, o, seed.wrapping_add((k * 1000 + i) as u64)))
            })
        })
        .collect();
    let margins = cases
        .par_iter()
        .map(|&(k, o, s)| {
            let inst = oracle_instance(k, o, s)?;
            Ok((inst.exact - inst.brute_force).abs() - ORACLE_TOL)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(SuiteReport::collect("oracle", margins))
}

/// Relative error of the debiased Sinkhorn distance against the exact one
/// on random positive densities on an 8x8 grid.
pub fn sinkhorn_suite(instances: usize, seed: u64, cfg: &SinkhornConfig) -> Result<SuiteReport> {
    let grid = Grid2D::new(8, 1.0)?;
    let measure = |rng: &mut ChaCha8Rng| -> Result<DiscreteMeasure> {
        let pts: Vec<[f64; 2]> = (0..64).map(|k| grid.point(k / 8, k % 8)).collect();
        let raw: Vec<f64> = (0..64).map(|_| rng.random_range(0.05..1.0)).collect();
        let s: f64 = raw.iter().sum();
        Ok(DiscreteMeasure::new(pts, raw.iter().map(|w| w / s).collect(), 1.0)?)
    };
    let margins = run(instances, |i| {
        let mut rng = rng_for(seed, i);
        let a = measure(&mut rng)?;
        let b = measure(&mut rng)?;
        let mut worst = f64::NEG_INFINITY;
        for o in [Order::One, Order::Two] {
            let exact = wasserstein_exact(&a, &b, o)?.0;
            let approx = wasserstein_sinkhorn(&a, &b, o, cfg)?;
            worst = worst.max((approx - exact).abs() / exact - SINKHORN_REL_TOL);
        }
        Ok(worst)
    })?;
    Ok(SuiteReport::collect("sinkhorn", margins))
}
