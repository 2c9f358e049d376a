use std::fs;
use std::path::{Path, PathBuf};

use inviscid_core::coupling::{LadderStability, Lemma1Report};
use inviscid_core::osgood::Regime;
use inviscid_core::transport::MASS_TOLERANCE;
use serde::Serialize;

use crate::config::{ExperimentConfig, Schedule};
use crate::error::{HarnessError, Result};
use crate::experiment::{
    LegFailure, RateRow, RateSeries, SeriesFit, TrustReport, CHAIN_TOL, ISOMETRY_TOL, MC_SIGMAS, TRUST_FRACTION,
};

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

pub const RATES_HEADER: [&str; 22] = [
    "nu",
    "t",
    "regime",
    "err_l2_velocity",
    "hm1_vorticity",
    "w1_vorticity",
    "w1_plus",
    "w1_minus",
    "w2_split_sum",
    "w2_plus",
    "w2_minus",
    "q_estimate",
    "q_plus",
    "q_minus",
    "q_stderr",
    "binning_tol",
    "clipped_mass",
    "chain_hm1_isometry",
    "chain_w1_bound",
    "chain_hm1_bound",
    "chain_q_bound",
    "chain_q_bound_per_sign",
];

#[derive(Debug, Serialize)]
struct Versions {
    core: &'static str,
    harness: &'static str,
}

#[derive(Debug, Serialize)]
struct Seeds {
    coupling_init: u64,
    noise: u64,
    bootstrap: u64,
}

#[derive(Debug, Serialize)]
struct Tolerances {
    isometry: f64,
    chain: f64,
    mc_sigmas: f64,
    trust_fraction: f64,
    mass: f64,
}

#[derive(Debug, Serialize)]
struct RegimeFlag {
    nu: f64,
    t: f64,
    regime: Regime,
}

#[derive(Debug, Serialize)]
struct Flags {
    trusted: Option<bool>,
    underresolved_override: bool,
    unresolved_legs: Vec<f64>,
    chain_violations: usize,
}

#[derive(Debug, Serialize)]
struct LegLemma<'a> {
    nu: f64,
    report: Option<&'a Lemma1Report>,
}

#[derive(Debug, Serialize)]
struct Lemma1Summary<'a> {
    legs: Vec<LegLemma<'a>>,
    ladder: Option<&'a LadderStability>,
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    schema_version: u32,
    name: &'a str,
    stamp: String,
    config_hash: String,
    empty: bool,
    versions: Versions,
    seeds: Seeds,
    tolerances: Tolerances,
    schedule: Option<&'a Schedule>,
    fits: &'a [SeriesFit],
    regimes: Vec<RegimeFlag>,
    flags: Flags,
    trust: Option<&'a TrustReport>,
    lemma1: Lemma1Summary<'a>,
    failures: &'a [LegFailure],
    warnings: &'a [String],
}

fn regime_name(r: Regime) -> &'static str {
    match r {
        Regime::ShortTime => "short_time",
        Regime::FixedTime => "fixed_time",
    }
}

fn sorted_rows(series: &RateSeries) -> Vec<&RateRow> {
    let mut rows: Vec<&RateRow> = series.rows.iter().collect();
    rows.sort_by(|a, b| a.t.total_cmp(&b.t).then(b.nu.total_cmp(&a.nu)));
    rows
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| csv_err(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> HarnessError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => HarnessError::io(path, io),
        other => HarnessError::io(path, std::io::Error::other(format!("{other:?}"))),
    }
}

pub fn write_rates_csv(series: &RateSeries, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(RATES_HEADER).map_err(|e| csv_err(path, e))?;
    for r in sorted_rows(series) {
        let nums = [
            r.err_l2_velocity,
            r.hm1_vorticity,
            r.w1_vorticity,
            r.w1_plus,
            r.w1_minus,
            r.w2_split_sum,
            r.w2_plus,
            r.w2_minus,
            r.q_estimate,
            r.q_plus,
            r.q_minus,
            r.q_stderr,
            r.binning_tol,
            r.clipped_mass,
        ];
        let mut rec = vec![r.nu.to_string(), r.t.to_string(), regime_name(r.regime).to_string()];
        rec.extend(nums.iter().map(|v| v.to_string()));
        let c = &r.chain;
        for flag in [c.hm1_isometry, c.w1_bound, c.hm1_bound, c.q_bound, c.q_bound_per_sign] {
            rec.push(flag.to_string());
        }
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

fn write_fits_csv(series: &RateSeries, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "metric",
        "t",
        "transformed",
        "p",
        "intercept",
        "ci_low",
        "ci_high",
        "r2",
        "used",
        "dropped",
        "error",
    ])
    .map_err(|e| csv_err(path, e))?;
    for f in &series.fits {
        let mut rec = vec![f.metric.clone(), f.t.to_string(), f.transformed.to_string()];
        match &f.fit {
            Some(fit) => rec.extend([
                fit.p.to_string(),
                fit.intercept.to_string(),
                fit.ci[0].to_string(),
                fit.ci[1].to_string(),
                fit.r2.to_string(),
                fit.used.to_string(),
                fit.dropped.to_string(),
                String::new(),
            ]),
            None => {
                rec.extend(std::iter::repeat_n(String::new(), 7));
                rec.push(f.error.clone().unwrap_or_default());
            }
        }
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

fn write_q_csv(series: &RateSeries, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["nu", "t", "q_plus", "q_minus", "q", "stderr"])
        .map_err(|e| csv_err(path, e))?;
    for trace in &series.q_traces {
        for e in &trace.series.entries {
            w.write_record([
                trace.nu.to_string(),
                e.time.to_string(),
                e.q_plus.to_string(),
                e.q_minus.to_string(),
                e.q.to_string(),
                e.stderr.to_string(),
            ])
            .map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

fn log10_or_nan(v: f64) -> String {
    if v > 0.0 {
        v.log10().to_string()
    } else {
        "nan".into()
    }
}

fn write_plot_data(series: &RateSeries, path: &Path) -> Result<()> {
    let mut text = String::from("# t nu log10_nu log10_err_l2_velocity log10_w1_vorticity log10_w2_split_sum log10_q_estimate\n");
    for r in sorted_rows(series) {
        text.push_str(&format!(
            "{} {} {} {} {} {} {}\n",
            r.t,
            r.nu,
            r.nu.log10(),
            log10_or_nan(r.err_l2_velocity),
            log10_or_nan(r.w1_vorticity),
            log10_or_nan(r.w2_split_sum),
            log10_or_nan(r.q_estimate)
        ));
    }
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

pub fn summary_json(series: &RateSeries, cfg: &ExperimentConfig) -> Result<String> {
    let summary = Summary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        name: &cfg.name,
        stamp: cfg.stamp(),
        config_hash: cfg.hash(),
        empty: series.rows.is_empty(),
        versions: Versions {
            core: inviscid_core::VERSION,
            harness: env!("CARGO_PKG_VERSION"),
        },
        seeds: Seeds {
            coupling_init: cfg.seed,
            noise: cfg.seed.wrapping_add(1),
            bootstrap: cfg.seed.wrapping_add(2),
        },
        tolerances: Tolerances {
            isometry: ISOMETRY_TOL,
            chain: CHAIN_TOL,
            mc_sigmas: MC_SIGMAS,
            trust_fraction: TRUST_FRACTION,
            mass: MASS_TOLERANCE,
        },
        schedule: series.schedule.as_ref(),
        fits: &series.fits,
        regimes: sorted_rows(series)
            .iter()
            .map(|r| RegimeFlag {
                nu: r.nu,
                t: r.t,
                regime: r.regime,
            })
            .collect(),
        flags: Flags {
            trusted: series.trust.as_ref().map(|t| t.trusted),
            underresolved_override: series.schedule.as_ref().is_some_and(|s| s.underresolved_override),
            unresolved_legs: series.legs.iter().filter(|l| !l.resolved).map(|l| l.nu).collect(),
            chain_violations: series.chain_violations(),
        },
        trust: series.trust.as_ref(),
        lemma1: Lemma1Summary {
            legs: series
                .legs
                .iter()
                .map(|l| LegLemma {
                    nu: l.nu,
                    report: l.lemma1.as_ref(),
                })
                .collect(),
            ladder: series.lemma1_ladder.as_ref(),
        },
        failures: &series.failures,
        warnings: &series.warnings,
    };
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    Ok(text)
}

/// Write the report into `<output_dir>/<name>-<hash>` and return that path.
/// Output depends only on the series and the config.
pub fn emit_report(series: &RateSeries, cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = cfg.output_dir.join(cfg.stamp());
    fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    write_rates_csv(series, &dir.join("rates.csv"))?;
    write_fits_csv(series, &dir.join("fits.csv"))?;
    write_q_csv(series, &dir.join("q_series.csv"))?;
    write_plot_data(series, &dir.join("loglog.dat"))?;
    let summary = dir.join("summary.json");
    fs::write(&summary, summary_json(series, cfg)?).map_err(|e| HarnessError::io(&summary, e))?;
    let resolved = dir.join("config.toml");
    fs::write(&resolved, cfg.to_toml()).map_err(|e| HarnessError::io(&resolved, e))?;
    Ok(dir)
}

/// `(nu, t, value)` triples of one metric from a rates CSV.
pub fn read_rates_csv(path: &Path, metric: &str) -> Result<Vec<(f64, f64, f64)>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let headers = r.headers().map_err(|e| csv_err(path, e))?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| HarnessError::Parse {
            path: path.to_path_buf(),
            message: format!("missing column '{name}'"),
        })
    };
    let (i_nu, i_t, i_v) = (col("nu")?, col("t")?, col(metric)?);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let num = |i: usize| {
            rec.get(i).unwrap_or("").parse::<f64>().map_err(|e| HarnessError::Parse {
                path: path.to_path_buf(),
                message: format!("line {}: {e}", rec.position().map_or(0, |p| p.line())),
            })
        };
        out.push((num(i_nu)?, num(i_t)?, num(i_v)?));
    }
    Ok(out)
}
