//! Paired-particle realization of the coupling between the Euler and the
//! Navier-Stokes vorticity.
//!
//! Each particle carries an inviscid position `X` (advected by `u`) and a
//! viscous position `Y` (advected by `u^nu` plus Brownian noise of
//! intensity `sqrt(2 nu)`). Both start at the same point, so the coupling
//! cost `Q = sum w |X - Y|^2` vanishes at `t = 0`.
//!
//! Noise is a dyadic Brownian path: increments live on a base step
//! `base_dt`, and a time step `dt = m * base_dt` uses the sum of `m` base
//! increments. Runs at `dt` and `dt / 2` therefore see the same path.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::Trajectory;
use crate::field::{biot_savart, Grid2D, ScalarField2D, VectorField2D};
use crate::osgood::rhs;
use crate::transport::{split_signed, DiscreteMeasure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Plus,
    Minus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub weight: f64,
    pub sign: Sign,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingEnsemble {
    pub particles: Vec<Particle>,
    pub rng_seed: u64,
    pub time: f64,
    pub length: f64,
    /// Base noise steps consumed so far.
    pub noise_step: u64,
    /// Signs whose initial part carried no mass.
    pub empty_signs: Vec<Sign>,
}

impl CouplingEnsemble {
    pub fn mass(&self, sign: Sign) -> f64 {
        self.particles.iter().filter(|p| p.sign == sign).map(|p| p.weight).sum()
    }

    /// Histogram of the `X` (inviscid) or `Y` (viscous) marginal of one sign,
    /// binned to the nearest vertex of `grid`.
    pub fn marginal(&self, sign: Sign, viscous: bool, grid: &Grid2D) -> Result<DiscreteMeasure> {
        let n = grid.n();
        let h = grid.spacing();
        let mut w = vec![0.0; n * n];
        for p in self.particles.iter().filter(|p| p.sign == sign) {
            let pos = if viscous { p.y } else { p.x };
            let i = ((grid.wrap(pos[0]) / h).round() as usize) % n;
            let j = ((grid.wrap(pos[1]) / h).round() as usize) % n;
            w[i * n + j] += p.weight;
        }
        let (points, weights): (Vec<_>, Vec<_>) = (0..n * n)
            .filter(|&k| w[k] > 0.0)
            .map(|k| (grid.point(k / n, k % n), w[k]))
            .unzip();
        DiscreteMeasure::new(points, weights, grid.length())
    }

    /// Dump particles as little-endian `f64` records `(x1, x2, y1, y2, w, s)`
    /// behind the magic `IVPARTS\0`.
    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(b"IVPARTS\0")?;
        w.write_all(&(self.particles.len() as u64).to_le_bytes())?;
        for p in &self.particles {
            let s = if p.sign == Sign::Plus { 1.0 } else { -1.0 };
            for v in [p.x[0], p.x[1], p.y[0], p.y[1], p.weight, s] {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }
}

/// Sample `n_particles` diagonal pairs (`Y = X`) from the sign parts of
/// `omega0`, allotted to each sign in proportion to its mass.
///
/// Sampling is systematic over cells (one uniform offset per sign), then
/// uniform inside the cell around the chosen vertex. Every particle of sign
/// `s` carries weight `M_s / n_s`.
pub fn init_coupling(omega0: &ScalarField2D, n_particles: usize, rng_seed: u64) -> Result<CouplingEnsemble> {
    if n_particles == 0 {
        return Err(Error::InvalidParameter("n_particles must be >= 1".into()));
    }
    let grid = *omega0.grid();
    let n = grid.n();
    let h = grid.spacing();
    let area = grid.cell_area();
    let split = split_signed(omega0)?;
    let parts = [(Sign::Plus, &split.plus), (Sign::Minus, &split.minus)];
    let masses: Vec<f64> = parts
        .iter()
        .map(|(_, f)| area * f.values().iter().sum::<f64>())
        .collect();
    let total: f64 = masses.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut particles = Vec::with_capacity(n_particles);
    let mut empty_signs = Vec::new();
    for (s, ((sign, f), &mass)) in parts.iter().zip(&masses).enumerate() {
        if mass <= 0.0 {
            empty_signs.push(*sign);
            continue;
        }
        let count = if s == 0 || masses[0] <= 0.0 {
            ((n_particles as f64 * mass / total).round() as usize).clamp(1, n_particles)
        } else {
            (n_particles - particles.len()).max(1)
        };
        let weight = mass / count as f64;
        let offset: f64 = rand::Rng::random(&mut rng);
        let step = mass / count as f64;
        let mut cell = 0usize;
        let mut cum = area * f.values()[0];
        for k in 0..count {
            let target = (k as f64 + offset) * step;
            while cum <= target && cell + 1 < n * n {
                cell += 1;
                cum += area * f.values()[cell];
            }
            let c = grid.point(cell / n, cell % n);
            let jitter: [f64; 2] = [rand::Rng::random(&mut rng), rand::Rng::random(&mut rng)];
            let x = [
                grid.wrap(c[0] + (jitter[0] - 0.5) * h),
                grid.wrap(c[1] + (jitter[1] - 0.5) * h),
            ];
            particles.push(Particle {
                x,
                y: x,
                weight,
                sign: *sign,
            });
        }
    }
    Ok(CouplingEnsemble {
        particles,
        rng_seed,
        time: 0.0,
        length: grid.length(),
        noise_step: 0,
        empty_signs,
    })
}

/// Counter-based Gaussian increments of a fixed Brownian path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseStream {
    pub seed: u64,
    pub base_dt: f64,
}

impl NoiseStream {
    /// Word stride reserved per base step in each particle's stream.
    const STRIDE: u128 = 256;

    /// Standard 2D Gaussian for `particle` at base step `step`.
    pub fn normal(&self, particle: usize, step: u64) -> [f64; 2] {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(particle as u64);
        rng.set_word_pos(step as u128 * Self::STRIDE);
        [StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)]
    }

    /// Number of base steps in `dt`.
    pub fn steps_in(&self, dt: f64) -> Result<u64> {
        let m = dt / self.base_dt;
        let r = m.round();
        if r < 1.0 || (m - r).abs() > 1e-9 * m {
            return Err(Error::InvalidParameter(format!(
                "dt = {dt} is not a positive multiple of the noise step {}",
                self.base_dt
            )));
        }
        Ok(r as u64)
    }
}

/// One Euler-Maruyama step of the pair dynamics.
pub fn advance_coupling(
    ens: &CouplingEnsemble,
    u: &VectorField2D,
    u_nu: &VectorField2D,
    nu: f64,
    dt: f64,
    noise: &NoiseStream,
) -> Result<CouplingEnsemble> {
    advance_coupling_with_reference(ens, u, 0.0, u_nu, nu, dt, noise)
}

/// As [`advance_coupling`] for a viscous reference: `X` carries the same
/// Brownian increments scaled by `sqrt(2 nu_ref)`.
pub fn advance_coupling_with_reference(
    ens: &CouplingEnsemble,
    u: &VectorField2D,
    nu_ref: f64,
    u_nu: &VectorField2D,
    nu: f64,
    dt: f64,
    noise: &NoiseStream,
) -> Result<CouplingEnsemble> {
    if !(dt > 0.0 && nu >= 0.0 && nu_ref >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need dt > 0 and nu, nu_ref >= 0 (dt {dt}, nu {nu}, nu_ref {nu_ref})"
        )));
    }
    let m = noise.steps_in(dt)?;
    let grid = *u.grid();
    let amp = (2.0 * nu * noise.base_dt).sqrt();
    let amp_ref = (2.0 * nu_ref * noise.base_dt).sqrt();
    let start = ens.noise_step;
    let particles: Vec<Particle> = ens
        .particles
        .par_iter()
        .enumerate()
        .map(|(idx, p)| {
            let ux = u.interpolate(p.x);
            let uy = u_nu.interpolate(p.y);
            let mut b = [0.0, 0.0];
            if nu > 0.0 || nu_ref > 0.0 {
                for k in 0..m {
                    let xi = noise.normal(idx, start + k);
                    b[0] += xi[0];
                    b[1] += xi[1];
                }
            }
            let dw = [amp * b[0], amp * b[1]];
            let x = [p.x[0] + ux[0] * dt + amp_ref * b[0], p.x[1] + ux[1] * dt + amp_ref * b[1]];
            let y = [p.y[0] + uy[0] * dt + dw[0], p.y[1] + uy[1] * dt + dw[1]];
            Particle {
                x: [grid.wrap(x[0]), grid.wrap(x[1])],
                y: [grid.wrap(y[0]), grid.wrap(y[1])],
                ..*p
            }
        })
        .collect();
    if let Some(index) = particles
        .iter()
        .position(|p| !(p.x.iter().chain(&p.y).all(|c| c.is_finite())))
    {
        return Err(Error::ParticleBlowup { index });
    }
    Ok(CouplingEnsemble {
        particles,
        time: ens.time + dt,
        noise_step: start + m,
        ..ens.clone()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QEstimate {
    pub time: f64,
    pub q_plus: f64,
    pub q_minus: f64,
    pub q: f64,
    pub stderr_plus: f64,
    pub stderr_minus: f64,
    pub stderr: f64,
}

/// Weighted sum and leave-one-out jackknife error of `sum w d^2` where the
/// estimator is written as `M * (sum w d^2) / (sum w)`.
fn jackknife(w: &[f64], d2: &[f64]) -> (f64, f64) {
    let n = w.len();
    let sw: f64 = w.iter().sum();
    let swd: f64 = w.iter().zip(d2).map(|(a, b)| a * b).sum();
    if n < 2 || sw <= 0.0 {
        return (swd, 0.0);
    }
    let loo: Vec<f64> = (0..n).map(|i| sw * (swd - w[i] * d2[i]) / (sw - w[i])).collect();
    let mean = loo.iter().sum::<f64>() / n as f64;
    let var = (n - 1) as f64 / n as f64 * loo.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    (swd, var.sqrt())
}

/// `Q_s = sum_{sign = s} w |X - Y|^2` with torus distance.
pub fn estimate_q(ens: &CouplingEnsemble) -> QEstimate {
    let l = ens.length;
    let part = |sign: Sign| {
        let (w, d2): (Vec<f64>, Vec<f64>) = ens
            .particles
            .iter()
            .filter(|p| p.sign == sign)
            .map(|p| {
                let d = crate::field::torus_distance(l, p.x, p.y);
                (p.weight, d * d)
            })
            .unzip();
        jackknife(&w, &d2)
    };
    let (q_plus, stderr_plus) = part(Sign::Plus);
    let (q_minus, stderr_minus) = part(Sign::Minus);
    QEstimate {
        time: ens.time,
        q_plus,
        q_minus,
        q: q_plus + q_minus,
        stderr_plus,
        stderr_minus,
        stderr: stderr_plus.hypot(stderr_minus),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QSeries {
    pub entries: Vec<QEstimate>,
}

impl QSeries {
    pub fn times(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.time).collect()
    }

    pub fn q(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.q).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// CSV with columns `t,q_plus,q_minus,q,stderr`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,q_plus,q_minus,q,stderr")?;
        for e in &self.entries {
            writeln!(w, "{},{},{},{},{}", e.time, e.q_plus, e.q_minus, e.q, e.stderr)?;
        }
        Ok(())
    }
}

/// Velocity fields of a stored trajectory, linearly interpolated in time.
#[derive(Debug, Clone)]
pub struct VelocitySchedule {
    times: Vec<f64>,
    fields: Vec<VectorField2D>,
}

impl VelocitySchedule {
    pub fn new(times: Vec<f64>, fields: Vec<VectorField2D>) -> Result<Self> {
        if times.is_empty() || times.len() != fields.len() {
            return Err(Error::InvalidParameter("velocity schedule needs matching, nonempty lists".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("schedule times must increase".into()));
        }
        Ok(Self { times, fields })
    }

    pub fn from_trajectory(tr: &Trajectory) -> Result<Self> {
        let fields = tr.states.par_iter().map(biot_savart).collect::<Result<Vec<_>>>()?;
        Self::new(tr.times.clone(), fields)
    }

    /// Steady schedule (one field for all times).
    pub fn steady(u: VectorField2D) -> Self {
        Self {
            times: vec![0.0],
            fields: vec![u],
        }
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn at(&self, t: f64) -> Result<VectorField2D> {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            return Ok(self.fields[0].clone());
        }
        if k == self.times.len() {
            return Ok(self.fields[k - 1].clone());
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let s = (t - t0) / (t1 - t0);
        if s <= 1e-12 {
            return Ok(self.fields[k - 1].clone());
        }
        self.fields[k - 1].combine(1.0 - s, &self.fields[k], s)
    }
}

#[derive(Debug, Clone)]
pub struct CouplingRun {
    pub series: QSeries,
    /// Ensembles at the requested snapshot times, in order.
    pub snapshots: Vec<CouplingEnsemble>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingConfig {
    pub nu: f64,
    pub dt: f64,
    pub t_end: f64,
    pub record_every: usize,
}

/// Integrate the pair dynamics to `t_end`, estimating `Q` every
/// `record_every` steps (and at `t = 0` and `t_end`).
pub fn run_coupling(
    ens0: &CouplingEnsemble,
    u: &VelocitySchedule,
    u_nu: &VelocitySchedule,
    cfg: &CouplingConfig,
    noise: &NoiseStream,
    snapshot_times: &[f64],
) -> Result<CouplingRun> {
    let steps = (cfg.t_end / cfg.dt).round() as usize;
    if cfg.record_every == 0 || (steps as f64 * cfg.dt - cfg.t_end).abs() > 1e-9 * cfg.t_end.max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "t_end = {} must be a multiple of dt = {} and record_every >= 1",
            cfg.t_end, cfg.dt
        )));
    }
    let mut ens = ens0.clone();
    let mut series = QSeries::default();
    let mut snapshots = Vec::new();
    let mut pending: Vec<f64> = snapshot_times.to_vec();
    pending.sort_by(f64::total_cmp);
    let mut take_snapshot = |ens: &CouplingEnsemble, pending: &mut Vec<f64>| {
        while let Some(&t) = pending.first() {
            if (t - ens.time).abs() <= 1e-9 * t.max(1.0) {
                snapshots.push(ens.clone());
                pending.remove(0);
            } else {
                break;
            }
        }
    };
    series.entries.push(estimate_q(&ens));
    take_snapshot(&ens, &mut pending);
    for k in 1..=steps {
        let t = (k - 1) as f64 * cfg.dt;
        let a = u.at(t)?;
        let b = u_nu.at(t)?;
        ens = advance_coupling(&ens, &a, &b, cfg.nu, cfg.dt, noise)?;
        ens.time = k as f64 * cfg.dt;
        if k % cfg.record_every == 0 || k == steps {
            series.entries.push(estimate_q(&ens));
        }
        take_snapshot(&ens, &mut pending);
    }
    if let Some(t) = pending.first() {
        return Err(Error::InvalidParameter(format!("snapshot time {t} is not on the step grid")));
    }
    Ok(CouplingRun { series, snapshots })
}

/// Moving-average window used before differentiating `Q`.
pub const LEMMA1_WINDOW: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Report {
    /// `max (dQ/dt) / R(Q)` over the smoothed series, clamped at 0.
    pub c_fit: f64,
    /// Time at which the maximum is attained.
    pub t_max: f64,
    pub window: usize,
    /// Smoothed series decreases by more than twice its standard error.
    pub inconclusive: bool,
    pub entries: usize,
}

/// Fit the smallest constant `C` with `dQ/dt <= C (Q (1 + log(1 + 1/Q)) + nu)`
/// along a series.
pub fn check_lemma1(series: &QSeries, nu: f64) -> Result<Lemma1Report> {
    let n = series.len();
    if n < 10 {
        return Err(Error::InvalidParameter(format!("check_lemma1 needs >= 10 entries, got {n}")));
    }
    let half = LEMMA1_WINDOW / 2;
    let t: Vec<f64> = series.times();
    let q: Vec<f64> = series.q();
    let se: Vec<f64> = series.entries.iter().map(|e| e.stderr).collect();
    let smooth = |v: &[f64]| -> Vec<f64> {
        (half..n - half)
            .map(|i| v[i - half..=i + half].iter().sum::<f64>() / LEMMA1_WINDOW as f64)
            .collect()
    };
    let qs = smooth(&q);
    let ts = &t[half..n - half];
    let ses = smooth(&se);
    let mut c_fit = 0.0_f64;
    let mut t_max = ts[0];
    let mut inconclusive = false;
    for i in 1..qs.len() - 1 {
        let dq = (qs[i + 1] - qs[i - 1]) / (ts[i + 1] - ts[i - 1]);
        if qs[i + 1] - qs[i - 1] < -2.0 * ses[i] && ses[i] > 0.0 {
            inconclusive = true;
        }
        let r = rhs(qs[i].max(0.0), nu, 1.0)?;
        if r > 0.0 && dq / r > c_fit {
            c_fit = dq / r;
            t_max = ts[i];
        }
    }
    Ok(Lemma1Report {
        c_fit,
        t_max,
        window: LEMMA1_WINDOW,
        inconclusive,
        entries: n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderStability {
    pub c_fits: Vec<f64>,
    /// `max / min` of the fitted constants.
    pub ratio: f64,
    pub stable: bool,
}

/// The growth constant should not depend on viscosity: fitted constants
/// across a viscosity ladder should agree within a factor of 2.
pub fn lemma1_ladder(reports: &[Lemma1Report]) -> LadderStability {
    let c_fits: Vec<f64> = reports.iter().map(|r| r.c_fit).collect();
    let max = c_fits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = c_fits.iter().cloned().fold(f64::INFINITY, f64::min);
    let ratio = if min > 0.0 { max / min } else { f64::INFINITY };
    LadderStability {
        stable: ratio.is_finite() && ratio < 2.0,
        c_fits,
        ratio,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair_ensemble(sep: &[f64]) -> CouplingEnsemble {
        CouplingEnsemble {
            particles: sep
                .iter()
                .map(|&s| Particle {
                    x: [0.5, 0.5],
                    y: [0.5 + s, 0.5],
                    weight: 1.0,
                    sign: Sign::Plus,
                })
                .collect(),
            rng_seed: 0,
            time: 0.0,
            length: 1.0,
            noise_step: 0,
            empty_signs: vec![Sign::Minus],
        }
    }

    #[test]
    fn q_of_hand_built_pairs() {
        let e = estimate_q(&pair_ensemble(&[0.1, 0.2]));
        assert!((e.q - 0.05).abs() < 1e-15);
        assert_eq!(e.q_minus, 0.0);
    }

    #[test]
    fn noise_is_counter_based() {
        let s = NoiseStream { seed: 4, base_dt: 0.01 };
        assert_eq!(s.normal(3, 17), s.normal(3, 17));
        assert_ne!(s.normal(3, 17), s.normal(4, 17));
        assert_ne!(s.normal(3, 17), s.normal(3, 18));
        assert!(s.steps_in(0.015).is_err());
        assert_eq!(s.steps_in(0.04).unwrap(), 4);
    }

    #[test]
    fn schedule_interpolates_linearly() {
        let g = Grid2D::new(8, 1.0).unwrap();
        let a = VectorField2D::from_fn(g, |_, _| [1.0, 0.0]).unwrap();
        let b = VectorField2D::from_fn(g, |_, _| [3.0, 2.0]).unwrap();
        let s = VelocitySchedule::new(vec![0.0, 1.0], vec![a, b]).unwrap();
        assert_eq!(s.at(0.25).unwrap().interpolate([0.3, 0.3]), [1.5, 0.5]);
        assert_eq!(s.at(5.0).unwrap().interpolate([0.3, 0.3]), [3.0, 2.0]);
    }

    #[test]
    fn flat_series_gives_zero_constant() {
        let series = QSeries {
            entries: (0..12)
                .map(|k| QEstimate {
                    time: k as f64 * 0.1,
                    q_plus: 0.3,
                    q_minus: 0.0,
                    q: 0.3,
                    stderr_plus: 0.0,
                    stderr_minus: 0.0,
                    stderr: 0.0,
                })
                .collect(),
        };
        let r = check_lemma1(&series, 1e-3).unwrap();
        assert_eq!(r.c_fit, 0.0);
        assert!(!r.inconclusive);
        assert!(check_lemma1(&QSeries { entries: series.entries[..5].to_vec() }, 1e-3).is_err());
    }
}
