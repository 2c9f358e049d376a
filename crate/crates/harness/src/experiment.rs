use inviscid_core::coupling::{
    advance_coupling_with_reference, check_lemma1, estimate_q, init_coupling, lemma1_ladder, LadderStability,
    Lemma1Report, NoiseStream, QEstimate, QSeries,
};
use inviscid_core::evolve::{Solver, SolverConfig, SpectralState};
use inviscid_core::field::{biot_savart, hm1_norm, make_initial_data, Grid2D, ScalarField2D, VectorField2D};
use inviscid_core::osgood::{crossover_time, Regime};
use inviscid_core::transport::{clip_nonnegative, discretize, wasserstein, Order, TransportMethod};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Schedule};
use crate::error::{HarnessError, Result};
use crate::fit::{fit_rate, FitOptions, RateFit};

/// Relative tolerance of `|u^nu - u|_2 = |w^nu - w|_{H^-1}`.
pub const ISOMETRY_TOL: f64 = 1e-8;
/// Combined solver tolerance for the W1 and H^-1 bounds by the W2 sum.
pub const CHAIN_TOL: f64 = 0.05;
/// Monte Carlo allowance, in standard errors, for `(W2 sum)^2 <= Q`.
pub const MC_SIGMAS: f64 = 3.0;
/// Reference discretization error allowed relative to the smallest
/// velocity error of the ladder.
pub const TRUST_FRACTION: f64 = 0.1;

pub const FIT_METRICS: [&str; 4] = ["err_l2_velocity", "w1_vorticity", "w2_split_sum", "q_estimate"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainChecks {
    pub hm1_isometry: bool,
    pub w1_bound: bool,
    pub hm1_bound: bool,
    /// `(W2+ + W2-)^2 <= Q` up to Monte Carlo and binning error.
    pub q_bound: bool,
    /// `W2±^2 <= Q±` separately.
    pub q_bound_per_sign: bool,
}

impl ChainChecks {
    pub fn all(&self) -> bool {
        self.hm1_isometry && self.w1_bound && self.hm1_bound && self.q_bound && self.q_bound_per_sign
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub nu: f64,
    pub t: f64,
    pub regime: Regime,
    pub err_l2_velocity: f64,
    pub hm1_vorticity: f64,
    pub w1_vorticity: f64,
    pub w1_plus: f64,
    pub w1_minus: f64,
    pub w2_split_sum: f64,
    pub w2_plus: f64,
    pub w2_minus: f64,
    pub q_estimate: f64,
    pub q_plus: f64,
    pub q_minus: f64,
    pub q_stderr: f64,
    /// W2 allowance for grid binning and support pruning.
    pub binning_tol: f64,
    pub clipped_mass: f64,
    pub chain: ChainChecks,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegSummary {
    pub nu: f64,
    /// `sqrt(nu t_max) >= spacing`.
    pub resolved: bool,
    pub lemma1: Option<Lemma1Report>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegFailure {
    pub nu: f64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustReport {
    pub times: Vec<f64>,
    /// `|u_n - u_2n|_2` of the reference at each evaluation time.
    pub discretization_error: Vec<f64>,
    /// Smallest velocity error over the ladder at each time.
    pub min_velocity_error: Vec<Option<f64>>,
    pub trusted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesFit {
    pub metric: String,
    pub t: f64,
    pub transformed: bool,
    pub fit: Option<RateFit>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTrace {
    pub nu: f64,
    pub series: QSeries,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSeries {
    pub rows: Vec<RateRow>,
    pub fits: Vec<SeriesFit>,
    pub legs: Vec<LegSummary>,
    pub q_traces: Vec<QTrace>,
    pub failures: Vec<LegFailure>,
    pub trust: Option<TrustReport>,
    pub lemma1_ladder: Option<LadderStability>,
    pub schedule: Option<Schedule>,
    pub warnings: Vec<String>,
}

impl RateSeries {
    pub fn empty() -> Self {
        Self {
            rows: Vec::new(),
            fits: Vec::new(),
            legs: Vec::new(),
            q_traces: Vec::new(),
            failures: Vec::new(),
            trust: None,
            lemma1_ladder: None,
            schedule: None,
            warnings: Vec::new(),
        }
    }

    pub fn chain_violations(&self) -> usize {
        self.rows.iter().filter(|r| !r.chain.all()).count()
    }

    pub fn fit_for(&self, metric: &str, t: f64, transformed: bool) -> Option<&RateFit> {
        self.fits
            .iter()
            .find(|f| f.metric == metric && f.transformed == transformed && (f.t - t).abs() <= 1e-12 * t.max(1.0))
            .and_then(|f| f.fit.as_ref())
    }
}

pub fn metric_value(row: &RateRow, metric: &str) -> Option<f64> {
    Some(match metric {
        "err_l2_velocity" => row.err_l2_velocity,
        "hm1_vorticity" => row.hm1_vorticity,
        "w1_vorticity" => row.w1_vorticity,
        "w2_split_sum" => row.w2_split_sum,
        "q_estimate" => row.q_estimate,
        _ => return None,
    })
}

/// Reference fields at one evaluation time.
struct Snapshot {
    omega: ScalarField2D,
    plus: ScalarField2D,
    velocity: VectorField2D,
}

struct Reference {
    snapshots: Vec<Snapshot>,
    /// Velocity at every coupling step (time `j * dt * step_multiple`).
    coupling_velocity: Vec<VectorField2D>,
}

fn solver_for(grid: Grid2D, nu: f64, sched: &Schedule, dealias: bool) -> Result<Solver> {
    let mut sc = SolverConfig::new(nu, sched.dt, sched.t_end());
    sc.dealias = dealias;
    sc.track_split = true;
    Ok(Solver::new(grid, &sc)?)
}

/// Integrate to the last evaluation step, calling `visit` at step 0 and
/// after every step.
fn integrate(
    omega0: &ScalarField2D,
    nu: f64,
    sched: &Schedule,
    dealias: bool,
    mut visit: impl FnMut(usize, &Solver, &SpectralState) -> Result<()>,
) -> Result<()> {
    let solver = solver_for(*omega0.grid(), nu, sched, dealias)?;
    let plus0 = omega0.map(|v| v.max(0.0))?;
    let mut state = solver.init(omega0, Some(&plus0))?;
    visit(0, &solver, &state)?;
    for k in 1..=sched.total_steps {
        state = solver.advance(&state, k)?;
        visit(k, &solver, &state)?;
    }
    Ok(())
}

fn snapshot(solver: &Solver, s: &SpectralState) -> Result<Snapshot> {
    Ok(Snapshot {
        omega: solver.omega_field(s),
        plus: solver.plus_field(s).expect("split tracking enabled"),
        velocity: solver.velocity_of(s)?,
    })
}

fn run_reference(cfg: &ExperimentConfig, omega0: &ScalarField2D, sched: &Schedule) -> Result<Reference> {
    let mut snapshots = Vec::new();
    let mut coupling_velocity = Vec::new();
    integrate(omega0, cfg.reference_nu, sched, cfg.solver.dealias, |k, solver, s| {
        let eval = sched.steps.contains(&k);
        let coupled = k % sched.step_multiple == 0 && k < sched.total_steps;
        if eval || coupled {
            let snap = snapshot(solver, s)?;
            if coupled {
                coupling_velocity.push(snap.velocity.clone());
            }
            if eval {
                snapshots.push(snap);
            }
        }
        Ok(())
    })?;
    Ok(Reference {
        snapshots,
        coupling_velocity,
    })
}

/// Reference velocity on the doubled grid, sampled back on the base grid.
fn doubled_reference_velocity(cfg: &ExperimentConfig, sched: &Schedule) -> Result<Vec<VectorField2D>> {
    let base = cfg.grid()?;
    let fine = Grid2D::new(2 * base.n(), base.length())?;
    let omega0 = make_initial_data(fine, &cfg.initial_data)?.field;
    let mut out = Vec::new();
    integrate(&omega0, cfg.reference_nu, sched, cfg.solver.dealias, |k, solver, s| {
        if sched.steps.contains(&k) {
            let u = solver.velocity_of(s)?;
            let n = base.n();
            let sub = |v: &[f64]| -> Vec<f64> {
                (0..n)
                    .flat_map(|i| (0..n).map(move |j| (i, j)))
                    .map(|(i, j)| v[fine.index(2 * i, 2 * j)])
                    .collect()
            };
            out.push(VectorField2D::new(base, sub(u.u1()), sub(u.u2()))?);
        }
        Ok(())
    })?;
    Ok(out)
}

struct SignDistances {
    w1: f64,
    w2: f64,
    /// W2 perturbation from pruning both measures.
    pruning: f64,
    mass: f64,
}

fn sign_distances(
    a: &ScalarField2D,
    b: &ScalarField2D,
    coarsen: usize,
    max_support: usize,
    method: &TransportMethod,
) -> Result<(SignDistances, f64)> {
    let (a, ca) = clip_nonnegative(a)?;
    let (b, cb) = clip_nonnegative(b)?;
    let da = discretize(&a.coarsen(coarsen)?, max_support)?;
    let db = discretize(&b.coarsen(coarsen)?, max_support)?;
    let mass = da.measure.total_mass();
    let (w1, w2) = if mass > 0.0 {
        (
            wasserstein(&da.measure, &db.measure, Order::One, method)?,
            wasserstein(&da.measure, &db.measure, Order::Two, method)?,
        )
    } else {
        (0.0, 0.0)
    };
    Ok((
        SignDistances {
            w1,
            w2,
            pruning: da.w2_bound + db.w2_bound,
            mass,
        },
        ca + cb,
    ))
}

struct LegFields<'a> {
    omega: &'a ScalarField2D,
    plus: &'a ScalarField2D,
}

#[allow(clippy::too_many_arguments)]
fn evaluate(
    cfg: &ExperimentConfig,
    sched: &Schedule,
    nu: f64,
    t: f64,
    reference: &Snapshot,
    leg: LegFields<'_>,
    q: &QEstimate,
) -> Result<RateRow> {
    let method = cfg.transport.method();
    let diff = leg.omega.sub(&reference.omega)?.remove_mean();
    let err_l2_velocity = biot_savart(&diff)?.l2_norm();
    let hm1_vorticity = hm1_norm(&diff)?;

    let minus_leg = leg.plus.sub(leg.omega)?;
    let minus_ref = reference.plus.sub(&reference.omega)?;
    let (plus, clip_p) = sign_distances(leg.plus, &reference.plus, cfg.transport.coarsen, cfg.transport.max_support, &method)?;
    let (minus, clip_m) = sign_distances(&minus_leg, &minus_ref, cfg.transport.coarsen, cfg.transport.max_support, &method)?;

    let w1_vorticity = plus.w1 + minus.w1;
    let w2_split_sum = plus.w2 + minus.w2;
    // Nearest-vertex binning moves mass by at most h_c / sqrt(2) per measure.
    let h_c = cfg.grid()?.spacing() * cfg.transport.coarsen as f64;
    let bin = |d: &SignDistances| std::f64::consts::SQRT_2 * h_c * d.mass.sqrt() + d.pruning;
    let binning_tol = bin(&plus) + bin(&minus);

    // Absolute: Nyquist-line content has H^-1 mass but no real velocity.
    let hm1_isometry = (err_l2_velocity - hm1_vorticity).abs() <= ISOMETRY_TOL;
    let w1_bound = w1_vorticity <= (1.0 + CHAIN_TOL) * sched.l1.sqrt() * w2_split_sum + 1e-14;
    let hm1_bound = hm1_vorticity <= (1.0 + CHAIN_TOL) * sched.linf.sqrt() * w2_split_sum + 1e-14;
    let q_bound = w2_split_sum <= (q.q + MC_SIGMAS * q.stderr).sqrt() + binning_tol;
    let q_bound_per_sign = plus.w2 <= (q.q_plus + MC_SIGMAS * q.stderr_plus).sqrt() + bin(&plus)
        && minus.w2 <= (q.q_minus + MC_SIGMAS * q.stderr_minus).sqrt() + bin(&minus);

    let regime = if t * sched.linf < crossover_time(nu)?.t1 {
        Regime::ShortTime
    } else {
        Regime::FixedTime
    };
    Ok(RateRow {
        nu,
        t,
        regime,
        err_l2_velocity,
        hm1_vorticity,
        w1_vorticity,
        w1_plus: plus.w1,
        w1_minus: minus.w1,
        w2_split_sum,
        w2_plus: plus.w2,
        w2_minus: minus.w2,
        q_estimate: q.q,
        q_plus: q.q_plus,
        q_minus: q.q_minus,
        q_stderr: q.stderr,
        binning_tol,
        clipped_mass: clip_p + clip_m,
        chain: ChainChecks {
            hm1_isometry,
            w1_bound,
            hm1_bound,
            q_bound,
            q_bound_per_sign,
        },
    })
}

struct LegResult {
    rows: Vec<RateRow>,
    series: QSeries,
    resolved: bool,
}

fn run_leg(
    cfg: &ExperimentConfig,
    sched: &Schedule,
    omega0: &ScalarField2D,
    reference: &Reference,
    nu: f64,
) -> Result<LegResult> {
    let m = sched.step_multiple;
    let dt_c = sched.dt * m as f64;
    let noise = NoiseStream {
        seed: cfg.seed.wrapping_add(1),
        base_dt: dt_c,
    };
    let mut ens = init_coupling(omega0, cfg.coupling.particles, cfg.seed)?;
    let mut series = QSeries::default();
    series.entries.push(estimate_q(&ens));
    let mut rows = Vec::new();
    let mut u_prev: Option<VectorField2D> = None;
    integrate(omega0, nu, sched, cfg.solver.dealias, |k, solver, s| {
        if k > 0 && k % m == 0 {
            let j = k / m;
            let u_nu = u_prev.as_ref().expect("velocity recorded at previous coupling step");
            ens = advance_coupling_with_reference(
                &ens,
                &reference.coupling_velocity[j - 1],
                cfg.reference_nu,
                u_nu,
                nu,
                dt_c,
                &noise,
            )?;
            ens.time = j as f64 * dt_c;
            series.entries.push(estimate_q(&ens));
        }
        let eval = sched.steps.iter().position(|&e| e == k);
        let coupled = k % m == 0 && k < sched.total_steps;
        if eval.is_none() && !coupled {
            return Ok(());
        }
        let velocity = solver.velocity_of(s)?;
        if let Some(idx) = eval {
            let omega = solver.omega_field(s);
            let plus = solver.plus_field(s).expect("split tracking enabled");
            let q = series.entries.last().expect("series starts at t = 0");
            rows.push(evaluate(
                cfg,
                sched,
                nu,
                sched.times[idx],
                &reference.snapshots[idx],
                LegFields {
                    omega: &omega,
                    plus: &plus,
                },
                q,
            )?);
        }
        if coupled {
            u_prev = Some(velocity);
        }
        Ok(())
    })?;
    let spacing = omega0.grid().spacing();
    Ok(LegResult {
        rows,
        series,
        resolved: (nu * sched.t_end()).sqrt() >= spacing,
    })
}

/// Fit every metric at every evaluation time over the surviving rows.
pub fn fit_series(rows: &[RateRow], times: &[f64], seed: u64) -> Vec<SeriesFit> {
    let mut fits = Vec::new();
    for &t in times {
        let at_t: Vec<&RateRow> = rows.iter().filter(|r| r.t == t).collect();
        let mut push = |metric: &str, transformed: bool| {
            let pts: Vec<(f64, f64)> = at_t
                .iter()
                .map(|r| (r.nu, metric_value(r, metric).expect("known metric")))
                .collect();
            let opts = FitOptions {
                transformed,
                seed,
                ..Default::default()
            };
            let (fit, error) = match fit_rate(&pts, &opts) {
                Ok(f) => (Some(f), None),
                Err(e) => (None, Some(e.to_string())),
            };
            fits.push(SeriesFit {
                metric: metric.to_string(),
                t,
                transformed,
                fit,
                error,
            });
        };
        for metric in FIT_METRICS {
            push(metric, false);
        }
        push("err_l2_velocity", true);
    }
    fits
}

/// Run the reference and every viscosity leg, evaluate the metrics at the
/// scheduled times and fit rates. A failing leg is recorded and skipped.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RateSeries> {
    let sched = cfg.schedule()?;
    let grid = cfg.grid()?;
    let omega0 = make_initial_data(grid, &cfg.initial_data)?.field;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;

    let (reference, doubled) = pool.install(|| {
        rayon::join(
            || run_reference(cfg, &omega0, &sched),
            || cfg.checks.trust_check.then(|| doubled_reference_velocity(cfg, &sched)),
        )
    });
    let reference = reference?;
    let doubled = doubled.transpose()?;

    let results: Vec<(f64, Result<LegResult>)> = pool.install(|| {
        cfg.nu_ladder
            .par_iter()
            .map(|&nu| (nu, run_leg(cfg, &sched, &omega0, &reference, nu)))
            .collect()
    });

    let mut series = RateSeries::empty();
    for (nu, res) in results {
        match res {
            Ok(leg) => {
                let lemma1 = match check_lemma1(&leg.series, nu) {
                    Ok(r) => Some(r),
                    Err(e) => {
                        series.warnings.push(format!("nu = {nu}: growth-constant check skipped: {e}"));
                        None
                    }
                };
                if !leg.resolved {
                    series.warnings.push(format!("nu = {nu}: viscous scale below grid spacing"));
                }
                series.rows.extend(leg.rows);
                series.legs.push(LegSummary {
                    nu,
                    resolved: leg.resolved,
                    lemma1,
                });
                series.q_traces.push(QTrace { nu, series: leg.series });
            }
            Err(e) => series.failures.push(LegFailure {
                nu,
                error: e.to_string(),
            }),
        }
    }
    let reports: Vec<Lemma1Report> = series.legs.iter().filter_map(|l| l.lemma1.clone()).collect();
    if reports.len() >= 2 {
        series.lemma1_ladder = Some(lemma1_ladder(&reports));
    }

    if let Some(fine) = doubled {
        let mut trust = TrustReport {
            times: sched.times.clone(),
            discretization_error: Vec::new(),
            min_velocity_error: Vec::new(),
            trusted: true,
        };
        for (idx, &t) in sched.times.iter().enumerate() {
            let d = reference.snapshots[idx].velocity.sub(&fine[idx])?.l2_norm();
            let min = series
                .rows
                .iter()
                .filter(|r| r.t == t)
                .map(|r| r.err_l2_velocity)
                .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v))));
            if let Some(m) = min {
                if m > 0.0 && d > TRUST_FRACTION * m {
                    trust.trusted = false;
                }
            }
            trust.discretization_error.push(d);
            trust.min_velocity_error.push(min);
        }
        if !trust.trusted {
            series
                .warnings
                .push("reference discretization error exceeds 10% of the smallest velocity error".into());
        }
        series.trust = Some(trust);
    }

    series.fits = fit_series(&series.rows, &sched.times, cfg.seed.wrapping_add(2));
    for f in &series.fits {
        if let Some(fit) = &f.fit {
            if fit.dropped > 0 {
                series
                    .warnings
                    .push(format!("{} at t = {}: {} zero rows dropped", f.metric, f.t, fit.dropped));
            }
        }
    }
    series.schedule = Some(sched);
    Ok(series)
}
