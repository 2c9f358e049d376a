use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_masses, cost_matrix, positive_part, DiscreteMeasure, Order};
use crate::error::{Error, Result};

/// Entropic regularization settings. `epsilon` is relative to `diam^p`,
/// where `diam = L / sqrt(2)` is the torus diameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinkhornConfig {
    pub epsilon: f64,
    pub max_iter: usize,
    pub tol: f64,
    /// Geometric decrease factor of the epsilon-scaling schedule.
    #[serde(default = "default_decay")]
    pub decay: f64,
}

fn default_decay() -> f64 {
    0.5
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            epsilon: 2e-4,
            max_iter: 50_000,
            tol: 1e-6,
            decay: 0.5,
        }
    }
}

/// Alternating sweeps between stall checks.
const STALL_WINDOW: usize = 200;
/// A window that shrinks the violation by less than this factor counts as stalled.
const STALL_RATIO: f64 = 0.5;
const NEWTON_MAX_STEPS: usize = 100;
/// Dense Newton systems are only formed up to this many potentials.
const NEWTON_MAX_VARS: usize = 2048;

fn log_sum_exp(it: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = it.collect();
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Regularized cost `OT_eps(a, b)` for probability vectors, as the value of
/// the dual objective at convergence.
fn entropic_cost(a: &[f64], b: &[f64], cost: &[f64], cfg: &SinkhornConfig, scale: f64) -> Result<f64> {
    let m = a.len();
    let n = b.len();
    let log_a: Vec<f64> = a.iter().map(|x| x.ln()).collect();
    let log_b: Vec<f64> = b.iter().map(|x| x.ln()).collect();
    let mut f = vec![0.0; m];
    let mut g = vec![0.0; n];
    let target = cfg.epsilon * scale;
    let mut eps = scale.max(target);
    let mut iterations = 0;
    loop {
        let last = eps <= target;
        let tol = if last { cfg.tol } else { cfg.tol.sqrt() };
        let mut window_start = f64::INFINITY;
        loop {
            iterations += 1;
            f.par_iter_mut().enumerate().for_each(|(i, fi)| {
                *fi = -eps * log_sum_exp((0..n).map(|j| (g[j] - cost[i * n + j]) / eps + log_b[j]));
            });
            g.par_iter_mut().enumerate().for_each(|(j, gj)| {
                *gj = -eps * log_sum_exp((0..m).map(|i| (f[i] - cost[i * n + j]) / eps + log_a[i]));
            });
            // Columns are exact after the g update; measure row violation.
            let violation = row_violation(a, &log_a, &log_b, &f, &g, cost, eps);
            if violation < tol {
                break;
            }
            if iterations >= cfg.max_iter {
                return Err(Error::SinkhornNotConverged { iterations, violation });
            }
            if iterations % STALL_WINDOW == 0 {
                if violation > STALL_RATIO * window_start && m + n <= NEWTON_MAX_VARS {
                    iterations += newton_steps(a, b, &log_a, &log_b, cost, eps, tol, &mut f, &mut g);
                }
                window_start = violation;
            }
        }
        if last {
            break;
        }
        eps = (eps * cfg.decay).max(target);
    }
    Ok(dot(a, &f) + dot(b, &g))
}

/// `OT_eps(a, a)` with the symmetric (averaged) fixed-point iteration.
fn entropic_self_cost(a: &[f64], cost: &[f64], cfg: &SinkhornConfig, scale: f64) -> Result<f64> {
    let m = a.len();
    let log_a: Vec<f64> = a.iter().map(|x| x.ln()).collect();
    let mut f = vec![0.0; m];
    let mut next = vec![0.0; m];
    let target = cfg.epsilon * scale;
    let mut eps = scale.max(target);
    let mut iterations = 0;
    loop {
        let last = eps <= target;
        let tol = if last { cfg.tol } else { cfg.tol.sqrt() };
        loop {
            iterations += 1;
            next.par_iter_mut().enumerate().for_each(|(i, fi)| {
                let t = -eps * log_sum_exp((0..m).map(|j| (f[j] - cost[i * m + j]) / eps + log_a[j]));
                *fi = 0.5 * (f[i] + t);
            });
            std::mem::swap(&mut f, &mut next);
            let violation = row_violation(a, &log_a, &log_a, &f, &f, cost, eps);
            if violation < tol {
                break;
            }
            if iterations >= cfg.max_iter {
                return Err(Error::SinkhornNotConverged { iterations, violation });
            }
        }
        if last {
            break;
        }
        eps = (eps * cfg.decay).max(target);
    }
    Ok(2.0 * dot(a, &f))
}

fn plan(log_a: &[f64], log_b: &[f64], f: &[f64], g: &[f64], cost: &[f64], eps: f64) -> DMatrix<f64> {
    let n = g.len();
    DMatrix::from_fn(f.len(), n, |i, j| {
        ((f[i] + g[j] - cost[i * n + j]) / eps + log_a[i] + log_b[j]).exp()
    })
}

/// Dual objective without its constant term.
fn dual_value(a: &[f64], b: &[f64], f: &[f64], g: &[f64], p: &DMatrix<f64>, eps: f64) -> f64 {
    dot(a, f) + dot(b, g) - eps * p.sum()
}

/// Damped Newton ascent on the entropic dual, used once alternating sweeps
/// stall. Sharp kernels split into nearly decoupled blocks whose relative
/// potential shift alternating sweeps only recover at a rate set by the
/// tiny cross-block plan entries; the Hessian sees that coupling directly.
/// Returns the number of steps taken.
#[allow(clippy::too_many_arguments)]
fn newton_steps(
    a: &[f64],
    b: &[f64],
    log_a: &[f64],
    log_b: &[f64],
    cost: &[f64],
    eps: f64,
    tol: f64,
    f: &mut [f64],
    g: &mut [f64],
) -> usize {
    let (m, n) = (a.len(), b.len());
    let mut p = plan(log_a, log_b, f, g, cost, eps);
    let mut value = dual_value(a, b, f, g, &p, eps);
    for step in 1..=NEWTON_MAX_STEPS {
        let rows = p.column_sum();
        let cols = p.row_sum();
        let mut resid = DVector::zeros(m + n);
        for i in 0..m {
            resid[i] = a[i] - rows[i];
        }
        for j in 0..n {
            resid[m + j] = b[j] - cols[j];
        }
        if resid.iter().map(|r| r.abs()).sum::<f64>() < 0.1 * tol {
            return step - 1;
        }
        // Negative Hessian times eps; the constant shift (1, -1) is its null
        // space, removed by a small ridge.
        let mut h = DMatrix::zeros(m + n, m + n);
        h.view_mut((0, m), (m, n)).copy_from(&p);
        h.view_mut((m, 0), (n, m)).copy_from(&p.transpose());
        let ridge = 1e-12 * rows.max().max(cols.max());
        for i in 0..m {
            h[(i, i)] = rows[i] + ridge;
        }
        for j in 0..n {
            h[(m + j, m + j)] = cols[j] + ridge;
        }
        let Some(chol) = h.cholesky() else {
            return step;
        };
        let dir = chol.solve(&resid) * eps;
        let slope = resid.dot(&dir);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let nf: Vec<f64> = (0..m).map(|i| f[i] + t * dir[i]).collect();
            let ng: Vec<f64> = (0..n).map(|j| g[j] + t * dir[m + j]).collect();
            let np = plan(log_a, log_b, &nf, &ng, cost, eps);
            let nv = dual_value(a, b, &nf, &ng, &np, eps);
            if nv.is_finite() && nv >= value + 1e-4 * t * slope {
                f.copy_from_slice(&nf);
                g.copy_from_slice(&ng);
                p = np;
                value = nv;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return step;
        }
    }
    NEWTON_MAX_STEPS
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn row_violation(a: &[f64], log_a: &[f64], log_b: &[f64], f: &[f64], g: &[f64], cost: &[f64], eps: f64) -> f64 {
    let n = g.len();
    (0..a.len())
        .into_par_iter()
        .map(|i| {
            let row: f64 = (0..n)
                .map(|j| ((f[i] + g[j] - cost[i * n + j]) / eps + log_a[i] + log_b[j]).exp())
                .sum();
            (row - a[i]).abs()
        })
        .collect::<Vec<_>>()
        .iter()
        .sum()
}

/// Debiased entropic transport distance (Sinkhorn divergence)
/// `S = OT(a,b) - OT(a,a)/2 - OT(b,b)/2`, scaled by the common mass and
/// returned as `S^(1/p)`.
pub fn wasserstein_sinkhorn(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    order: Order,
    cfg: &SinkhornConfig,
) -> Result<f64> {
    if !(cfg.epsilon > 0.0 && cfg.decay > 0.0 && cfg.decay < 1.0 && cfg.tol > 0.0) {
        return Err(Error::InvalidParameter(format!("invalid sinkhorn settings {cfg:?}")));
    }
    let mass = check_masses(mu, nu)?;
    if mass == 0.0 {
        return Ok(0.0);
    }
    let (pa, wa) = positive_part(mu);
    let (pb, wb) = positive_part(nu);
    let a: Vec<f64> = wa.iter().map(|w| w / mu.total_mass()).collect();
    let b: Vec<f64> = wb.iter().map(|w| w / nu.total_mass()).collect();
    let p = order.exponent();
    let length = mu.length();
    let scale = (length / std::f64::consts::SQRT_2).powi(p as i32);
    let ab = entropic_cost(&a, &b, &cost_matrix(length, &pa, &pb, order), cfg, scale)?;
    let aa = entropic_self_cost(&a, &cost_matrix(length, &pa, &pa, order), cfg, scale)?;
    let bb = entropic_self_cost(&b, &cost_matrix(length, &pb, &pb, order), cfg, scale)?;
    let s = (ab - 0.5 * aa - 0.5 * bb).max(0.0) * mass;
    Ok(s.powf(1.0 / p as f64))
}
