use inviscid_core::osgood::ols;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Regress against `log(nu / |log nu|)` instead of `log nu`.
    pub transformed: bool,
    pub bootstrap: usize,
    pub seed: u64,
    pub level: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            transformed: false,
            bootstrap: 2000,
            seed: 0,
            level: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub p: f64,
    pub intercept: f64,
    pub ci: [f64; 2],
    pub r2: f64,
    pub used: usize,
    /// Rows dropped because their error was not positive.
    pub dropped: usize,
    pub transformed: bool,
}

pub fn abscissa(nu: f64, transformed: bool) -> f64 {
    if transformed {
        (nu / nu.ln().abs()).ln()
    } else {
        nu.ln()
    }
}

/// Least-squares exponent of `err ~ nu^p` over `(nu, err)` rows sharing one
/// evaluation time, with a residual-bootstrap percentile interval.
pub fn fit_rate(rows: &[(f64, f64)], opts: &FitOptions) -> Result<RateFit> {
    if let Some(&(nu, _)) = rows.iter().find(|r| !(r.0 > 0.0 && r.0 < 1.0)) {
        return Err(HarnessError::Fit(format!("viscosity {nu} outside (0, 1)")));
    }
    let kept: Vec<(f64, f64)> = rows.iter().copied().filter(|r| r.1 > 0.0 && r.1.is_finite()).collect();
    let dropped = rows.len() - kept.len();
    if kept.len() < 4 {
        return Err(HarnessError::Fit(format!(
            "need >= 4 rows with positive error, have {} ({dropped} dropped)",
            kept.len()
        )));
    }
    let (lo, hi) = kept
        .iter()
        .fold((f64::INFINITY, 0.0_f64), |(lo, hi), r| (lo.min(r.0), hi.max(r.0)));
    if (hi / lo).log10() < 1.0 - 1e-9 {
        return Err(HarnessError::Fit(format!("rows span less than a decade in nu ({lo:e}..{hi:e})")));
    }
    if !(opts.level > 0.0 && opts.level < 1.0) {
        return Err(HarnessError::Fit(format!("confidence level {} outside (0, 1)", opts.level)));
    }
    let x: Vec<f64> = kept.iter().map(|r| abscissa(r.0, opts.transformed)).collect();
    let y: Vec<f64> = kept.iter().map(|r| r.1.ln()).collect();
    let fit = ols(&x, &y)?;
    let ci = bootstrap_interval(&x, &y, fit.slope, fit.intercept, opts)?;
    Ok(RateFit {
        p: fit.slope,
        intercept: fit.intercept,
        ci,
        r2: fit.r2,
        used: kept.len(),
        dropped,
        transformed: opts.transformed,
    })
}

/// Standard error of an OLS slope.
fn slope_stderr(x: &[f64], y: &[f64], slope: f64, intercept: f64) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mean).powi(2)).sum();
    let ssr: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    (ssr / (n - 2.0) / sxx).sqrt()
}

/// Studentized residual bootstrap: resample residuals, refit, and invert the
/// quantiles of `(p* - p) / se*` around the fitted slope.
fn bootstrap_interval(x: &[f64], y: &[f64], slope: f64, intercept: f64, opts: &FitOptions) -> Result<[f64; 2]> {
    let n = x.len();
    let se = slope_stderr(x, y, slope, intercept);
    if opts.bootstrap == 0 || se == 0.0 || !se.is_finite() {
        return Ok([slope, slope]);
    }
    let resid: Vec<f64> = x.iter().zip(y).map(|(a, b)| b - intercept - slope * a).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut stats = Vec::with_capacity(opts.bootstrap);
    let mut yb = vec![0.0; n];
    for _ in 0..opts.bootstrap {
        for (i, v) in yb.iter_mut().enumerate() {
            *v = intercept + slope * x[i] + resid[rng.random_range(0..n)];
        }
        let f = ols(x, &yb)?;
        let se_b = slope_stderr(x, &yb, f.slope, f.intercept);
        if se_b > 0.0 {
            stats.push((f.slope - slope) / se_b);
        }
    }
    if stats.is_empty() {
        return Ok([slope, slope]);
    }
    stats.sort_by(f64::total_cmp);
    let alpha = 0.5 * (1.0 - opts.level);
    Ok([
        slope - quantile(&stats, 1.0 - alpha) * se,
        slope - quantile(&stats, alpha) * se,
    ])
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    } else {
        sorted[i]
    }
}
