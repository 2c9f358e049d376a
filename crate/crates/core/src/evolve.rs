//! Pseudo-spectral integration of the 2D vorticity equation
//! `w_t + u . grad w = nu lap w`, `u = grad^perp lap^{-1} w`.
//!
//! Time stepping is classical RK4 on the nonlinear term with the diffusion
//! folded into an integrating factor `exp(-nu |k|^2 t)`, so the viscous
//! part is exact. `nu = 0` is the Euler equation.
//!
//! A solver can also carry the positive part `w_+` of the initial datum as a
//! passive tracer advected (and diffused) by the same velocity. Its negative
//! counterpart is `w_+ - w`, so the split evolution of both signs costs one
//! extra scalar.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::spectral::{dealias_mask, fft2_inplace, fft2_real, ifft2_real, wavenumber_squared};
use crate::field::{norms, velocity_from_spectrum, Grid2D, NormReport, ScalarField2D, VectorField2D};

/// Advective CFL limit `dt max|u| / h`.
pub const CFL_LIMIT: f64 = 0.5;

/// Euler runs are restricted to `t_end * |w0|_inf <= EULER_HORIZON`.
pub const EULER_HORIZON: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub nu: f64,
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "default_true")]
    pub dealias: bool,
    #[serde(default = "default_one")]
    pub record_every: usize,
    /// Evolve the positive part of the datum alongside the vorticity.
    #[serde(default)]
    pub track_split: bool,
}

fn default_true() -> bool {
    true
}

fn default_one() -> usize {
    1
}

impl SolverConfig {
    pub fn new(nu: f64, dt: f64, t_end: f64) -> Self {
        Self {
            nu,
            dt,
            t_end,
            dealias: true,
            record_every: 1,
            track_split: false,
        }
    }

    pub fn is_euler(&self) -> bool {
        self.nu == 0.0
    }

    fn validate(&self) -> Result<()> {
        if !(self.nu >= 0.0 && self.nu.is_finite()) {
            return Err(Error::InvalidParameter(format!("nu = {} must be >= 0", self.nu)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt = {} must be > 0", self.dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidParameter(format!("t_end = {} must be >= 0", self.t_end)));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidParameter("record_every must be >= 1".into()));
        }
        Ok(())
    }

    /// Number of steps; `t_end` must be an integer multiple of `dt`.
    pub fn steps(&self) -> Result<usize> {
        self.validate()?;
        let s = self.t_end / self.dt;
        let k = s.round();
        if (s - k).abs() > 1e-9 * s.max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "t_end = {} is not a multiple of dt = {}",
                self.t_end, self.dt
            )));
        }
        Ok(k as usize)
    }
}

/// Spectral state: vorticity and, optionally, the positive-part tracer.
#[derive(Debug, Clone)]
pub struct SpectralState {
    pub omega: Vec<Complex64>,
    pub plus: Option<Vec<Complex64>>,
}

/// Reusable stepping machinery for one grid and one `(nu, dt)` pair.
pub struct Solver {
    grid: Grid2D,
    cfg: SolverConfig,
    mask: Vec<bool>,
    kd1: Vec<f64>,
    kd2: Vec<f64>,
    decay_full: Vec<f64>,
    decay_half: Vec<f64>,
}

impl Solver {
    pub fn new(grid: Grid2D, cfg: &SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let n = grid.n();
        let mask = if cfg.dealias {
            dealias_mask(&grid)
        } else {
            vec![true; n * n]
        };
        let k_sq = wavenumber_squared(&grid);
        let decay_full = k_sq.iter().map(|k| (-cfg.nu * k * cfg.dt).exp()).collect();
        let decay_half = k_sq.iter().map(|k| (-0.5 * cfg.nu * k * cfg.dt).exp()).collect();
        let kd1 = (0..n).map(|i| grid.derivative_wavenumber(i)).collect();
        let kd2 = (0..n).map(|j| grid.derivative_wavenumber(j)).collect();
        Ok(Self {
            grid,
            cfg: cfg.clone(),
            mask,
            kd1,
            kd2,
            decay_full,
            decay_half,
        })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    /// Initial spectral state. The zero mode of the vorticity is set to
    /// exactly zero so that the mean stays zero for the whole run.
    pub fn init(&self, omega: &ScalarField2D, plus: Option<&ScalarField2D>) -> Result<SpectralState> {
        if omega.grid() != &self.grid {
            return Err(Error::GridMismatch("initial vorticity grid".into()));
        }
        omega.require_mean_zero()?;
        let mut w = fft2_real(&self.grid, omega.values());
        w[0] = Complex64::new(0.0, 0.0);
        let plus = plus.map(|p| fft2_real(&self.grid, p.values()));
        Ok(SpectralState { omega: w, plus })
    }

    fn masked(&self, v: &[Complex64]) -> Vec<Complex64> {
        v.iter()
            .zip(&self.mask)
            .map(|(c, &m)| if m { *c } else { Complex64::new(0.0, 0.0) })
            .collect()
    }

    fn physical(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        let n = self.grid.n();
        fft2_inplace(&mut spec, n, true);
        let inv = 1.0 / (n * n) as f64;
        spec.into_iter().map(|c| c.re * inv).collect()
    }

    fn gradient(&self, v: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.grid.n();
        let mut gx = vec![Complex64::new(0.0, 0.0); n * n];
        let mut gy = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for j in 0..n {
                let idx = i * n + j;
                let iv = Complex64::new(-v[idx].im, v[idx].re);
                gx[idx] = iv * self.kd1[i];
                gy[idx] = iv * self.kd2[j];
            }
        }
        (self.physical(gx), self.physical(gy))
    }

    /// `-(u . grad f)^`, dealiased, with the zero mode removed.
    fn advection(&self, u1: &[f64], u2: &[f64], f_hat_masked: &[Complex64]) -> Vec<Complex64> {
        let n = self.grid.n();
        let (gx, gy) = self.gradient(f_hat_masked);
        let mut prod: Vec<Complex64> = (0..n * n)
            .map(|k| Complex64::new(-(u1[k] * gx[k] + u2[k] * gy[k]), 0.0))
            .collect();
        fft2_inplace(&mut prod, n, false);
        for (c, &m) in prod.iter_mut().zip(&self.mask) {
            if !m {
                *c = Complex64::new(0.0, 0.0);
            }
        }
        prod[0] = Complex64::new(0.0, 0.0);
        prod
    }

    /// Velocity (physical) of the dealiased vorticity spectrum.
    fn velocity(&self, w_masked: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
        let (a, b) = velocity_from_spectrum(&self.grid, w_masked);
        (self.physical(a), self.physical(b))
    }

    fn rhs(&self, s: &SpectralState) -> SpectralState {
        let wm = self.masked(&s.omega);
        let (u1, u2) = self.velocity(&wm);
        let omega = self.advection(&u1, &u2, &wm);
        let plus = s.plus.as_ref().map(|p| self.advection(&u1, &u2, &self.masked(p)));
        SpectralState { omega, plus }
    }

    /// Full-spectrum velocity of the current state, used for the CFL check.
    pub fn velocity_of(&self, s: &SpectralState) -> Result<VectorField2D> {
        let (a, b) = velocity_from_spectrum(&self.grid, &s.omega);
        VectorField2D::new(self.grid, self.physical(a), self.physical(b))
    }

    fn courant(&self, s: &SpectralState, step: usize) -> Result<()> {
        let u = self.velocity_of(s).map_err(|_| Error::Blowup { step })?;
        let max_velocity = u.max_speed();
        let courant = self.cfg.dt * max_velocity / self.grid.spacing();
        if courant > CFL_LIMIT {
            return Err(Error::Cfl {
                step,
                courant,
                limit: CFL_LIMIT,
                max_velocity,
            });
        }
        Ok(())
    }

    /// One integrating-factor RK4 step. `step` is only used in diagnostics.
    pub fn advance(&self, s: &SpectralState, step: usize) -> Result<SpectralState> {
        self.courant(s, step)?;
        let dt = self.cfg.dt;
        let e = &self.decay_full;
        let e2 = &self.decay_half;

        // Linear combinations applied field-by-field to omega and the tracer.
        let combine = |f: &dyn Fn(&[Complex64], Option<&[Complex64]>, &[Complex64], usize) -> Complex64,
                       base: &SpectralState,
                       k: &SpectralState,
                       extra: Option<&SpectralState>| {
            let mk = |b: &[Complex64], kv: &[Complex64], ex: Option<&[Complex64]>| -> Vec<Complex64> {
                (0..b.len()).map(|i| f(kv, ex, b, i)).collect()
            };
            SpectralState {
                omega: mk(&base.omega, &k.omega, extra.map(|x| x.omega.as_slice())),
                plus: base.plus.as_ref().map(|bp| {
                    mk(
                        bp,
                        k.plus.as_ref().unwrap(),
                        extra.map(|x| x.plus.as_ref().unwrap().as_slice()),
                    )
                }),
            }
        };

        let a = self.rhs(s);
        let sa = combine(&|k, _, b, i| e2[i] * (b[i] + k[i] * (0.5 * dt)), s, &a, None);
        let bb = self.rhs(&sa);
        let sb = combine(&|k, _, b, i| e2[i] * b[i] + k[i] * (0.5 * dt), s, &bb, None);
        let c = self.rhs(&sb);
        let sc = combine(&|k, _, b, i| e[i] * b[i] + e2[i] * k[i] * dt, s, &c, None);
        let d = self.rhs(&sc);

        let finish = |base: &[Complex64], a: &[Complex64], b: &[Complex64], c: &[Complex64], d: &[Complex64]| {
            (0..base.len())
                .map(|i| {
                    e[i] * base[i]
                        + (e[i] * a[i] + (b[i] + c[i]) * (2.0 * e2[i]) + d[i]) * (dt / 6.0)
                })
                .collect::<Vec<_>>()
        };
        let omega = finish(&s.omega, &a.omega, &bb.omega, &c.omega, &d.omega);
        let plus = s.plus.as_ref().map(|p| {
            finish(
                p,
                a.plus.as_ref().unwrap(),
                bb.plus.as_ref().unwrap(),
                c.plus.as_ref().unwrap(),
                d.plus.as_ref().unwrap(),
            )
        });
        let ok = |v: &[Complex64]| v.iter().all(|z| z.re.is_finite() && z.im.is_finite());
        if !ok(&omega) || plus.as_deref().is_some_and(|p| !ok(p)) {
            return Err(Error::Blowup { step });
        }
        Ok(SpectralState { omega, plus })
    }

    /// Physical vorticity of a state, flagged mean-zero.
    pub fn omega_field(&self, s: &SpectralState) -> ScalarField2D {
        let values = ifft2_real(&self.grid, s.omega.clone());
        let mut f = ScalarField2D::from_parts(self.grid, values, Some(s.omega.clone()));
        f.set_mean_zero_flag(true);
        f
    }

    pub fn plus_field(&self, s: &SpectralState) -> Option<ScalarField2D> {
        s.plus
            .as_ref()
            .map(|p| ScalarField2D::from_parts(self.grid, ifft2_real(&self.grid, p.clone()), Some(p.clone())))
    }
}

/// One time step of the vorticity equation.
pub fn step(omega: &ScalarField2D, cfg: &SolverConfig) -> Result<ScalarField2D> {
    let solver = Solver::new(*omega.grid(), cfg)?;
    let s = solver.init(omega, None)?;
    let next = solver.advance(&s, 0)?;
    Ok(solver.omega_field(&next))
}

/// One RK4 step of the passive equation `f_t + u . grad f = 0` with the
/// velocity frozen at `u`.
pub fn step_passive(f: &ScalarField2D, u: &VectorField2D, dt: f64, dealias: bool) -> Result<ScalarField2D> {
    if f.grid() != u.grid() {
        return Err(Error::GridMismatch("tracer and velocity grids differ".into()));
    }
    let mut cfg = SolverConfig::new(0.0, dt, dt);
    cfg.dealias = dealias;
    let solver = Solver::new(*f.grid(), &cfg)?;
    let f_hat = fft2_real(f.grid(), f.values());
    let rhs = |v: &[Complex64]| -> Vec<Complex64> {
        let mut out = solver.advection(u.u1(), u.u2(), &solver.masked(v));
        // Keep the tracer mean: the zero mode of u . grad f vanishes anyway.
        out[0] = Complex64::new(0.0, 0.0);
        out
    };
    let axpy = |x: &[Complex64], k: &[Complex64], a: f64| -> Vec<Complex64> {
        x.iter().zip(k).map(|(p, q)| p + q * a).collect()
    };
    let k1 = rhs(&f_hat);
    let k2 = rhs(&axpy(&f_hat, &k1, 0.5 * dt));
    let k3 = rhs(&axpy(&f_hat, &k2, 0.5 * dt));
    let k4 = rhs(&axpy(&f_hat, &k3, dt));
    let next: Vec<Complex64> = (0..f_hat.len())
        .map(|i| f_hat[i] + (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (dt / 6.0))
        .collect();
    ScalarField2D::new(*f.grid(), ifft2_real(f.grid(), next))
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<ScalarField2D>,
    /// Positive-part tracer snapshots, present when `track_split` was set.
    pub plus: Option<Vec<ScalarField2D>>,
    pub config: SolverConfig,
    pub monitors: Vec<NormReport>,
    /// `sqrt(nu t_end) >= h`; always true for Euler runs.
    pub resolved: bool,
}

impl Trajectory {
    pub fn final_state(&self) -> &ScalarField2D {
        self.states.last().expect("trajectory has at least one snapshot")
    }

    /// Index of the snapshot at time `t` (within `1e-9` relative).
    pub fn index_of_time(&self, t: f64) -> Option<usize> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-9 * t.abs().max(1e-12))
    }

    /// Negative-part snapshot `w_+ - w`.
    pub fn minus(&self, idx: usize) -> Option<ScalarField2D> {
        let p = self.plus.as_ref()?.get(idx)?;
        p.sub(&self.states[idx]).ok()
    }

    /// Monitor series as CSV with columns `t,l1,l2,linf,hm1`.
    pub fn write_monitor_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,l1,l2,linf,hm1")?;
        for (t, m) in self.times.iter().zip(&self.monitors) {
            let hm1 = m.hm1.map(|v| v.to_string()).unwrap_or_default();
            writeln!(w, "{},{},{},{},{}", t, m.l1, m.l2, m.linf, hm1)?;
        }
        Ok(())
    }
}

/// Integrate from `omega0` to `cfg.t_end`, recording every `record_every`
/// steps and at the final time.
pub fn run(omega0: &ScalarField2D, cfg: &SolverConfig) -> Result<Trajectory> {
    run_with_split(omega0, None, cfg)
}

/// As [`run`], additionally carrying `plus0` (normally `max(w0, 0)`) as a
/// tracer when `cfg.track_split` is set.
pub fn run_with_split(
    omega0: &ScalarField2D,
    plus0: Option<&ScalarField2D>,
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    let steps = cfg.steps()?;
    let grid = *omega0.grid();
    if cfg.is_euler() && cfg.t_end * omega0.max_abs() > EULER_HORIZON {
        return Err(Error::InvalidParameter(format!(
            "Euler horizon exceeded: t_end * |w0|_inf = {} > {EULER_HORIZON}",
            cfg.t_end * omega0.max_abs()
        )));
    }
    let split0 = if cfg.track_split {
        Some(match plus0 {
            Some(p) => p.clone(),
            None => omega0.map(|v| v.max(0.0))?,
        })
    } else {
        None
    };
    let solver = Solver::new(grid, cfg)?;
    let mut state = solver.init(omega0, split0.as_ref())?;

    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut plus = cfg.track_split.then(Vec::new);
    let mut monitors = Vec::new();
    let mut record = |k: usize, s: &SpectralState| -> Result<()> {
        let w = solver.omega_field(s);
        monitors.push(norms(&w)?);
        times.push(k as f64 * cfg.dt);
        states.push(w);
        if let (Some(list), Some(p)) = (plus.as_mut(), solver.plus_field(s)) {
            list.push(p);
        }
        Ok(())
    };
    record(0, &state)?;
    for k in 1..=steps {
        state = solver.advance(&state, k)?;
        if k % cfg.record_every == 0 || k == steps {
            record(k, &state)?;
        }
    }
    let resolved = cfg.is_euler() || (cfg.nu * cfg.t_end).sqrt() >= grid.spacing();
    Ok(Trajectory {
        times,
        states,
        plus,
        config: cfg.clone(),
        monitors,
        resolved,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AprioriViolation {
    pub index: usize,
    pub time: f64,
    pub quantity: String,
    pub value: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AprioriReport {
    /// Worst `|w(t)|_1 / |w0|_1 - 1` (signed for viscous runs, absolute for Euler).
    pub l1_margin: f64,
    pub linf_margin: f64,
    pub violations: Vec<AprioriViolation>,
    pub tolerance: f64,
}

impl AprioriReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check the L1/Linf a-priori bounds along a trajectory: non-increase for
/// viscous runs, conservation for Euler runs, both up to relative `tol`.
pub fn check_apriori(tr: &Trajectory, tol: f64) -> Result<AprioriReport> {
    if tr.monitors.len() < 2 {
        return Err(Error::InvalidParameter("trajectory needs at least 2 snapshots".into()));
    }
    let m0 = tr.monitors[0];
    let euler = tr.config.is_euler();
    let mut report = AprioriReport {
        l1_margin: if euler { 0.0 } else { f64::NEG_INFINITY },
        linf_margin: if euler { 0.0 } else { f64::NEG_INFINITY },
        violations: Vec::new(),
        tolerance: tol,
    };
    for (idx, m) in tr.monitors.iter().enumerate().skip(1) {
        for (name, value, bound, margin) in [
            ("l1", m.l1, m0.l1, &mut report.l1_margin),
            ("linf", m.linf, m0.linf, &mut report.linf_margin),
        ] {
            let rel = if bound > 0.0 { value / bound - 1.0 } else { value };
            let (score, bad) = if euler {
                (rel.abs(), rel.abs() > tol)
            } else {
                (rel, rel > tol)
            };
            *margin = margin.max(score);
            if bad {
                report.violations.push(AprioriViolation {
                    index: idx,
                    time: tr.times[idx],
                    quantity: name.to_string(),
                    value,
                    bound,
                });
            }
        }
    }
    Ok(report)
}
