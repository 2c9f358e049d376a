//! The log-Lipschitz differential inequality
//! `dQ/dt <= C (Q (1 + log(1 + 1/Q)) + nu)` and the rates it implies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `C (q (1 + log(1 + 1/q)) + nu)`; equals `C nu` at `q = 0`.
pub fn rhs(q: f64, nu: f64, c: f64) -> Result<f64> {
    if !(q >= 0.0) {
        return Err(Error::InvalidParameter(format!("rhs needs q >= 0, got {q}")));
    }
    let s = if q == 0.0 { 0.0 } else { q * (1.0 + (1.0 / q).ln_1p()) };
    Ok(c * (s + nu))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OsgoodParams {
    pub c: f64,
    pub nu: f64,
    pub q0: f64,
}

impl OsgoodParams {
    pub fn new(c: f64, nu: f64, q0: f64) -> Result<Self> {
        if !(c > 0.0 && nu >= 0.0 && q0 >= 0.0 && c.is_finite() && nu.is_finite() && q0.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "need C > 0, nu >= 0, q0 >= 0 (C {c}, nu {nu}, q0 {q0})"
            )));
        }
        Ok(Self { c, nu, q0 })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub times: Vec<f64>,
    pub q: Vec<f64>,
    /// Whether `nu t` was added to the solution.
    pub floored: bool,
}

impl Envelope {
    pub fn final_value(&self) -> f64 {
        *self.q.last().unwrap()
    }

    /// CSV with columns `t,q`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,q")?;
        for (t, q) in self.times.iter().zip(&self.q) {
            writeln!(w, "{t},{q}")?;
        }
        Ok(())
    }
}

// Dormand-Prince 5(4) tableau (autonomous form, so the nodes are unused).
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const RTOL: f64 = 1e-11;
const ATOL: f64 = 1e-300;

/// Adaptive DP45 for the scalar ODE `y' = f(y)` from `t0` to `t1`.
fn dp45(f: &dyn Fn(f64) -> f64, y0: f64, t0: f64, t1: f64, h0: f64) -> Result<(f64, f64)> {
    let mut t = t0;
    let mut y = y0;
    let mut h = h0.min(t1 - t0);
    let h_min = 1e-14 * (t1.abs() + 1.0);
    let mut k1 = f(y);
    while t < t1 {
        if t + h > t1 {
            h = t1 - t;
        }
        let k2 = f((y + h * A21 * k1).max(0.0));
        let k3 = f((y + h * (A31 * k1 + A32 * k2)).max(0.0));
        let k4 = f((y + h * (A41 * k1 + A42 * k2 + A43 * k3)).max(0.0));
        let k5 = f((y + h * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4)).max(0.0));
        let k6 = f((y + h * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5)).max(0.0));
        let y_new = y + h * (B1 * k1 + B3 * k3 + B4 * k4 + B5 * k5 + B6 * k6);
        let k7 = f(y_new.max(0.0));
        let err = (h * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7)).abs();
        let scale = ATOL + RTOL * y.abs().max(y_new.abs()).max(h * k1.abs());
        let ratio = err / scale;
        if ratio <= 1.0 || h <= h_min {
            if !y_new.is_finite() {
                return Err(Error::StepSize { t });
            }
            t += h;
            y = y_new;
            k1 = k7;
        }
        let factor = if ratio == 0.0 { 5.0 } else { (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
        if h < h_min {
            if ratio > 1.0 {
                return Err(Error::StepSize { t });
            }
            h = h_min;
        }
    }
    Ok((y, h))
}

/// Solve `dQ/dt = rhs(Q)` with `Q(0) = q0` adaptively, reporting the
/// solution every `dt` up to `t_end`. With `floor` the curve `Q + nu t` is
/// returned instead, which obeys the same inequality with `nu` added to the
/// right-hand side.
pub fn integrate_envelope(p: &OsgoodParams, t_end: f64, dt: f64, floor: bool) -> Result<Envelope> {
    if !(t_end > 0.0 && dt > 0.0) {
        return Err(Error::InvalidParameter("t_end and dt must be positive".into()));
    }
    let steps = (t_end / dt).ceil() as usize;
    let f = |q: f64| rhs(q.max(0.0), p.nu, p.c).unwrap_or(f64::NAN);
    let mut times = Vec::with_capacity(steps + 1);
    let mut q = Vec::with_capacity(steps + 1);
    times.push(0.0);
    q.push(p.q0);
    let mut y = p.q0;
    let mut h = dt.min(1e-6);
    for k in 1..=steps {
        let t0 = (k - 1) as f64 * dt;
        let t1 = (k as f64 * dt).min(t_end);
        if p.nu == 0.0 && y == 0.0 {
            // Equilibrium; the non-Lipschitz branch is not selected.
        } else {
            let (ny, nh) = dp45(&f, y, t0, t1, h)?;
            y = ny;
            h = nh.max(1e-12);
        }
        times.push(t1);
        q.push(y);
    }
    if floor {
        for (qv, t) in q.iter_mut().zip(&times) {
            *qv += p.nu * t;
        }
    }
    Ok(Envelope { times, q, floored: floor })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossover {
    /// Root of `t (1 + log(1 + 1/(nu t))) = 1`.
    pub t1: f64,
    /// `1 / log(1/nu)`.
    pub asymptotic: f64,
    /// `|t1 (1 + log(1 + 1/(nu t1))) - 1|`.
    pub residual: f64,
}

/// Crossover time between the viscous and the log-Lipschitz regimes, by
/// bisection on `[nu, 1]`.
pub fn crossover_time(nu: f64) -> Result<Crossover> {
    if !(nu > 0.0 && nu < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "crossover time needs 0 < nu < 1 (asymptotic regime), got {nu}"
        )));
    }
    // Dimensionless form of `nu t (1 + log(1 + 1/(nu t))) = nu`.
    let phi = |t: f64| t * (1.0 + (1.0 / (nu * t)).ln_1p()) - 1.0;
    let (mut lo, mut hi) = (nu, 1.0);
    if phi(lo) > 0.0 {
        return Err(Error::InvalidParameter(format!("no crossover in [nu, 1] for nu = {nu}")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if phi(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-16 * hi {
            break;
        }
    }
    let t1 = 0.5 * (lo + hi);
    Ok(Crossover {
        t1,
        asymptotic: 1.0 / (1.0 / nu).ln(),
        residual: phi(t1).abs(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    ShortTime,
    FixedTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePrediction {
    pub regime: Regime,
    pub value: f64,
    pub t1: f64,
    /// False when the short-time form is requested beyond `t1`.
    pub valid: bool,
}

/// `sqrt(nu t)` (short time) or `(nu / |log nu|)^{exp(-C t)/2}` (fixed time).
pub fn theorem_rate(t: f64, nu: f64, c: f64, regime: Regime) -> Result<RatePrediction> {
    if !(nu > 0.0 && nu < 1.0 && t >= 0.0) {
        return Err(Error::InvalidParameter(format!("need nu in (0,1) and t >= 0 (nu {nu}, t {t})")));
    }
    let t1 = crossover_time(nu)?.t1;
    let (value, valid) = match regime {
        Regime::ShortTime => ((nu * t).sqrt(), t <= t1),
        Regime::FixedTime => ((nu / nu.ln().abs()).powf(0.5 * (-c * t).exp()), true),
    };
    Ok(RatePrediction {
        regime,
        value,
        t1,
        valid,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares `y = intercept + slope x`.
pub fn ols(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return Err(Error::InvalidParameter(format!("ols needs >= 2 matching points, got {n}")));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("ols needs distinct x values".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = b - intercept - slope * a;
            r * r
        })
        .sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(LinearFit { slope, intercept, r2 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedTimeFit {
    pub t: f64,
    pub nus: Vec<f64>,
    pub envelope: Vec<f64>,
    /// Fit of `log Q` against `log(nu / |log nu|)`.
    pub fit: LinearFit,
    /// `-log(slope) / t`, the effective constant `C'`.
    pub c_prime: f64,
    /// `exp(intercept)`.
    pub k: f64,
}

/// Integrate the envelope (with `q0 = 0`) for each viscosity and fit the
/// fixed-time form `Q(t) = K (nu / |log nu|)^{exp(-C' t)}`.
pub fn fit_fixed_time(c: f64, t: f64, nus: &[f64], dt: f64) -> Result<FixedTimeFit> {
    let mut envelope = Vec::with_capacity(nus.len());
    for &nu in nus {
        let p = OsgoodParams::new(c, nu, 0.0)?;
        envelope.push(integrate_envelope(&p, t, dt, false)?.final_value());
    }
    let x: Vec<f64> = nus.iter().map(|&nu| (nu / nu.ln().abs()).ln()).collect();
    let y: Vec<f64> = envelope.iter().map(|q| q.ln()).collect();
    let fit = ols(&x, &y)?;
    Ok(FixedTimeFit {
        t,
        nus: nus.to_vec(),
        envelope,
        c_prime: -fit.slope.ln() / t,
        k: fit.intercept.exp(),
        fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rhs_values() {
        assert_eq!(rhs(0.0, 0.3, 2.0).unwrap(), 0.6);
        assert!((rhs(1.0, 0.0, 1.0).unwrap() - (1.0 + 2f64.ln())).abs() < 1e-15);
        assert!(rhs(-1e-3, 0.0, 1.0).is_err());
    }

    #[test]
    fn rhs_is_increasing() {
        let mut last = rhs(0.0, 1e-4, 1.0).unwrap();
        for k in 1..20_000 {
            let q = 1e-12 * 1.0015_f64.powi(k);
            let r = rhs(q, 1e-4, 1.0).unwrap();
            assert!(r > last, "q = {q}");
            last = r;
        }
    }

    #[test]
    fn zero_equilibrium() {
        let e = integrate_envelope(&OsgoodParams::new(1.0, 0.0, 0.0).unwrap(), 1.0, 0.1, false).unwrap();
        assert!(e.q.iter().all(|&q| q == 0.0));
    }

    #[test]
    fn crossover_contract() {
        for nu in [1e-8, 1e-6, 1e-4] {
            let c = crossover_time(nu).unwrap();
            assert!(c.residual <= 1e-10, "{c:?}");
            let s = c.t1 * (1.0 / nu).ln();
            assert!((0.5..=2.0).contains(&s), "nu {nu}: {s}");
        }
        assert!(crossover_time(1.0).is_err());
        assert!(crossover_time(1e-6).unwrap().t1 < crossover_time(1e-4).unwrap().t1);
    }

    #[test]
    fn theorem_rate_identities() {
        let nu = 1e-4;
        let r0 = theorem_rate(0.0, nu, 1.3, Regime::FixedTime).unwrap().value;
        assert!((r0 - (nu / nu.ln().abs()).sqrt()).abs() < 1e-15);
        let t = 0.7;
        let rt = theorem_rate(t, nu, 1.3, Regime::FixedTime).unwrap().value;
        assert!((rt - r0.powf((-1.3 * t).exp())).abs() < 1e-14);
        let a = theorem_rate(0.01, 1e-4, 1.0, Regime::ShortTime).unwrap();
        let b = theorem_rate(0.01, 4e-4, 1.0, Regime::ShortTime).unwrap();
        assert!((b.value / a.value - 2.0).abs() < 1e-12);
        assert!(!theorem_rate(5.0, 1e-4, 1.0, Regime::ShortTime).unwrap().valid);
    }

    #[test]
    fn ols_exact_line() {
        let f = ols(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-15 && (f.intercept - 1.0).abs() < 1e-15);
        assert!((f.r2 - 1.0).abs() < 1e-15);
    }
}
