//! Wasserstein distances between nonnegative measures of equal mass on the
//! torus, sign splitting of vorticity fields, the W1 dual, and the
//! comparison inequalities between W1, W2 and the H^-1 norm.
//!
//! Measures are never normalized: `W_p^p` is the minimal cost over plans
//! whose total mass equals the common mass of the two measures.

mod dual;
mod measure;
mod simplex;
mod sinkhorn;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{hm1_norm, torus_distance, ScalarField2D};

pub use dual::{w1_dual, DualCertificate, Potential};
pub use measure::{
    clip_nonnegative, discretize, field_to_measure, split_signed, DiscreteMeasure, Discretization, SignedSplit,
    MASS_FLOOR,
};
pub use sinkhorn::{wasserstein_sinkhorn, SinkhornConfig};

/// Combined support limit of the exact solver.
pub const EXACT_SUPPORT_LIMIT: usize = 4096;

/// Relative mass mismatch tolerated between the two measures.
pub const MASS_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Order {
    One,
    Two,
}

impl Order {
    pub fn exponent(self) -> u32 {
        match self {
            Order::One => 1,
            Order::Two => 2,
        }
    }
}

impl TryFrom<u8> for Order {
    type Error = String;
    fn try_from(p: u8) -> std::result::Result<Self, String> {
        match p {
            1 => Ok(Order::One),
            2 => Ok(Order::Two),
            _ => Err(format!("only p = 1 and p = 2 are supported, got {p}")),
        }
    }
}

impl From<Order> for u8 {
    fn from(o: Order) -> u8 {
        o.exponent() as u8
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    /// `(source index, target index, mass)` in the indexing of the inputs.
    pub pairs: Vec<(usize, usize, f64)>,
    /// `sum mass * d^p`.
    pub cost: f64,
    pub order: Order,
}

impl TransportPlan {
    pub fn marginals(&self, m: usize, n: usize) -> (Vec<f64>, Vec<f64>) {
        let mut rows = vec![0.0; m];
        let mut cols = vec![0.0; n];
        for &(i, j, w) in &self.pairs {
            rows[i] += w;
            cols[j] += w;
        }
        (rows, cols)
    }
}

/// Returns the common mass, or an error if the masses differ.
pub(crate) fn check_masses(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    if mu.length() != nu.length() {
        return Err(Error::GridMismatch(format!(
            "measures live on tori of side {} and {}",
            mu.length(),
            nu.length()
        )));
    }
    let (a, b) = (mu.total_mass(), nu.total_mass());
    if (a - b).abs() > MASS_TOLERANCE * a.max(b) {
        return Err(Error::MassMismatch { mass_a: a, mass_b: b });
    }
    Ok(a)
}

/// Atoms with positive weight, with their original indices.
fn positive_atoms(m: &DiscreteMeasure) -> Vec<usize> {
    (0..m.len()).filter(|&i| m.weights()[i] > 0.0).collect()
}

pub(crate) fn positive_part(m: &DiscreteMeasure) -> (Vec<[f64; 2]>, Vec<f64>) {
    positive_atoms(m)
        .into_iter()
        .map(|i| (m.points()[i], m.weights()[i]))
        .unzip()
}

pub(crate) fn cost_matrix(length: f64, a: &[[f64; 2]], b: &[[f64; 2]], order: Order) -> Vec<f64> {
    let mut c = Vec::with_capacity(a.len() * b.len());
    for p in a {
        for q in b {
            let d = torus_distance(length, *p, *q);
            c.push(match order {
                Order::One => d,
                Order::Two => d * d,
            });
        }
    }
    c
}

/// Exact optimal transport by network simplex. Returns `W_p` and a plan.
pub fn wasserstein_exact(mu: &DiscreteMeasure, nu: &DiscreteMeasure, order: Order) -> Result<(f64, TransportPlan)> {
    let mass = check_masses(mu, nu)?;
    let ia = positive_atoms(mu);
    let ib = positive_atoms(nu);
    let size = ia.len() + ib.len();
    if size > EXACT_SUPPORT_LIMIT {
        return Err(Error::SupportTooLarge {
            size,
            limit: EXACT_SUPPORT_LIMIT,
        });
    }
    if mass == 0.0 || ia.is_empty() || ib.is_empty() {
        return Ok((0.0, TransportPlan { pairs: Vec::new(), cost: 0.0, order }));
    }
    let a: Vec<f64> = ia.iter().map(|&i| mu.weights()[i]).collect();
    let rescale = mu.total_mass() / nu.total_mass();
    let b: Vec<f64> = ib.iter().map(|&j| nu.weights()[j] * rescale).collect();
    let pa: Vec<[f64; 2]> = ia.iter().map(|&i| mu.points()[i]).collect();
    let pb: Vec<[f64; 2]> = ib.iter().map(|&j| nu.points()[j]).collect();
    let cost = cost_matrix(mu.length(), &pa, &pb, order);
    let max_pivots = 10_000 + 50 * size * size;
    let sol = simplex::solve(&a, &b, &cost, max_pivots)?;
    let n = ib.len();
    let pairs = sol
        .flow
        .iter()
        .enumerate()
        .filter(|(_, f)| **f > 0.0)
        .map(|(e, &f)| (ia[e / n], ib[e % n], f))
        .collect();
    let value = sol.cost.max(0.0);
    Ok((
        value.powf(1.0 / order.exponent() as f64),
        TransportPlan {
            pairs,
            cost: value,
            order,
        },
    ))
}

/// Solver choice for distances between discretized fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum TransportMethod {
    Exact,
    Sinkhorn(SinkhornConfig),
}

impl Default for TransportMethod {
    fn default() -> Self {
        TransportMethod::Exact
    }
}

pub fn wasserstein(mu: &DiscreteMeasure, nu: &DiscreteMeasure, order: Order, method: &TransportMethod) -> Result<f64> {
    match method {
        TransportMethod::Exact => Ok(wasserstein_exact(mu, nu, order)?.0),
        TransportMethod::Sinkhorn(cfg) => wasserstein_sinkhorn(mu, nu, order, cfg),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderReport {
    pub w1: f64,
    pub w2: f64,
    pub mass: f64,
    /// `sqrt(mass) * w2 - w1`; nonnegative when the ordering holds.
    pub slack: f64,
}

impl OrderReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.slack >= -tol
    }
}

/// `W1 <= mass^{1/2} W2` on exact solver output.
pub fn check_order_w1_w2(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<OrderReport> {
    let mass = check_masses(mu, nu)?;
    let (w1, _) = wasserstein_exact(mu, nu, Order::One)?;
    let (w2, _) = wasserstein_exact(mu, nu, Order::Two)?;
    Ok(OrderReport {
        w1,
        w2,
        mass,
        slack: mass.sqrt() * w2 - w1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hm1Report {
    pub hm1: f64,
    pub w2: f64,
    pub linf: f64,
    /// `linf^{1/2} * w2`.
    pub bound: f64,
    /// `hm1 / bound - 1` (negative when the inequality holds strictly).
    pub relative_excess: f64,
}

impl Hm1Report {
    pub fn holds(&self, tol: f64) -> bool {
        self.hm1 <= self.bound * (1.0 + tol)
    }
}

/// `|f - g|_{H^-1} <= max(|f|_inf, |g|_inf)^{1/2} W2(f, g)` for nonnegative
/// densities of equal mass.
pub fn check_hm1_domination(
    f: &ScalarField2D,
    g: &ScalarField2D,
    max_support: usize,
    method: &TransportMethod,
) -> Result<Hm1Report> {
    let diff = f.sub(g)?.mark_mean_zero()?;
    let hm1 = hm1_norm(&diff)?;
    let mu = field_to_measure(f, max_support)?;
    let nu = field_to_measure(g, max_support)?;
    let w2 = wasserstein(&mu, &nu, Order::Two, method)?;
    let linf = f.max_abs().max(g.max_abs());
    let bound = linf.sqrt() * w2;
    let relative_excess = if bound > 0.0 {
        hm1 / bound - 1.0
    } else if hm1 > 0.0 {
        f64::INFINITY
    } else {
        -1.0
    };
    Ok(Hm1Report {
        hm1,
        w2,
        linf,
        bound,
        relative_excess,
    })
}

/// Split-and-sum distance between two signed configurations given by their
/// (equal-mass) sign parts: `W_p(a+, b+) + W_p(a-, b-)`.
pub fn split_sum_distance(
    a: &SignedSplit,
    b: &SignedSplit,
    order: Order,
    max_support: usize,
    method: &TransportMethod,
) -> Result<(f64, f64)> {
    let plus = wasserstein(
        &field_to_measure(&a.plus, max_support)?,
        &field_to_measure(&b.plus, max_support)?,
        order,
        method,
    )?;
    let minus = wasserstein(
        &field_to_measure(&a.minus, max_support)?,
        &field_to_measure(&b.minus, max_support)?,
        order,
        method,
    )?;
    Ok((plus, minus))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn atoms(length: f64, pts: &[[f64; 2]]) -> DiscreteMeasure {
        DiscreteMeasure::new(pts.to_vec(), vec![1.0; pts.len()], length).unwrap()
    }

    #[test]
    fn identical_measures_have_zero_distance() {
        let m = atoms(1.0, &[[0.1, 0.2], [0.5, 0.5], [0.9, 0.3]]);
        for o in [Order::One, Order::Two] {
            let (d, plan) = wasserstein_exact(&m, &m, o).unwrap();
            assert!(d.abs() < 1e-12);
            let (r, c) = plan.marginals(3, 3);
            assert!(r.iter().chain(&c).all(|v| (v - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn two_point_problem() {
        let a = atoms(1.0, &[[0.1, 0.1]]);
        let b = atoms(1.0, &[[0.4, 0.5]]);
        for o in [Order::One, Order::Two] {
            assert!((wasserstein_exact(&a, &b, o).unwrap().0 - 0.5).abs() < 1e-12);
        }
        // Wrap-around distance.
        let c = atoms(1.0, &[[0.95, 0.1]]);
        assert!((wasserstein_exact(&a, &c, Order::One).unwrap().0 - 0.15).abs() < 1e-12);
        let cert = w1_dual(&a, &b).unwrap();
        assert!((cert.lower_bound - 0.5).abs() < 1e-12);
        let mut v = cert.potential.values.clone();
        v.sort_by(f64::total_cmp);
        assert!((v[0] + 0.25).abs() < 1e-12 && (v[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn mass_mismatch_is_rejected() {
        let a = atoms(1.0, &[[0.1, 0.1]]);
        let b = DiscreteMeasure::new(vec![[0.2, 0.2]], vec![2.0], 1.0).unwrap();
        let err = wasserstein_exact(&a, &b, Order::Two).unwrap_err();
        assert!(matches!(err, Error::MassMismatch { .. }));
        assert!(err.to_string().contains("same total mass"));
    }

    #[test]
    fn oversized_support_points_to_sinkhorn() {
        let pts: Vec<[f64; 2]> = (0..2049).map(|i| [i as f64 / 2049.0, 0.0]).collect();
        let m = atoms(1.0, &pts);
        let err = wasserstein_exact(&m, &m, Order::One).unwrap_err();
        assert!(err.to_string().to_lowercase().contains("sinkhorn"));
    }

    #[test]
    fn order_serializes_as_integer() {
        assert_eq!(serde_json::to_string(&Order::Two).unwrap(), "2");
        assert!(serde_json::from_str::<Order>("3").is_err());
    }
}
