use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use inviscid_core::transport::{Order, SinkhornConfig};
use inviscid_harness::experiment::FIT_METRICS;
use inviscid_harness::report::read_rates_csv;
use inviscid_harness::suites::{self, SuiteReport};
use inviscid_harness::{emit_report, fit_rate, run_experiment, ExperimentConfig, FitOptions, HarnessError};

#[derive(Parser)]
#[command(name = "inviscid", version, about = "Inviscid-limit rate experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a config file and write its report.
    Run {
        config: PathBuf,
        /// Override a config value, e.g. `--set grid.n=128`.
        #[arg(long = "set", value_name = "PATH=VALUE")]
        overrides: Vec<String>,
    },
    /// Fit exponents from a rates CSV.
    Fit {
        csv: PathBuf,
        #[arg(long, default_value = "err_l2_velocity")]
        metric: String,
        /// Regress against log(nu / |log nu|).
        #[arg(long)]
        transformed: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run seeded invariant suites.
    Check {
        #[arg(long, value_enum, default_value_t = Suite::All)]
        suite: Suite,
        #[arg(long, default_value_t = 200)]
        instances: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Solve one small equal-weight instance by enumeration and by the
    /// exact solver.
    Oracle {
        #[arg(long, default_value_t = 6)]
        atoms: usize,
        #[arg(long, default_value_t = 2)]
        order: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Suite {
    Ordering,
    Hm1,
    Duality,
    Oracle,
    Sinkhorn,
    All,
}

fn print_suite(r: &SuiteReport) {
    println!(
        "{:<16} {:>5} instances  {:>3} failures  worst margin {:e}  {}",
        r.name,
        r.instances,
        r.failures,
        r.worst,
        if r.passed() { "ok" } else { "FAIL" }
    );
}

fn run_suites(suite: Suite, instances: usize, seed: u64) -> Result<bool, HarnessError> {
    let mut reports = Vec::new();
    let want = |s: Suite| suite == s || suite == Suite::All;
    if want(Suite::Ordering) {
        reports.push(suites::ordering_suite(instances, seed)?);
    }
    if want(Suite::Hm1) {
        reports.push(suites::hm1_suite(instances, seed, 32)?);
    }
    if want(Suite::Duality) {
        reports.push(suites::duality_suite(instances, seed)?);
    }
    if want(Suite::Oracle) {
        reports.push(suites::oracle_suite(instances.div_ceil(8).max(1), seed)?);
    }
    if want(Suite::Sinkhorn) {
        reports.push(suites::sinkhorn_suite(instances, seed, &SinkhornConfig::default())?);
    }
    reports.iter().for_each(print_suite);
    Ok(reports.iter().all(SuiteReport::passed))
}

fn run(cli: Cli) -> Result<ExitCode, HarnessError> {
    match cli.command {
        Command::Run { config, overrides } => {
            let cfg = ExperimentConfig::load(&config, &overrides)?;
            let series = run_experiment(&cfg)?;
            let dir = emit_report(&series, &cfg)?;
            for w in &series.warnings {
                eprintln!("warning: {w}");
            }
            for f in &series.failures {
                eprintln!("leg nu = {} failed: {}", f.nu, f.error);
            }
            println!("{}", dir.display());
            let violations = series.chain_violations();
            if violations > 0 || !series.failures.is_empty() {
                eprintln!("{violations} rows violate the metric chain");
                return Ok(ExitCode::from(1));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Fit {
            csv,
            metric,
            transformed,
            seed,
        } => {
            if !FIT_METRICS.contains(&metric.as_str()) && metric != "hm1_vorticity" {
                return Err(HarnessError::Config(format!("unknown metric '{metric}'")));
            }
            let rows = read_rates_csv(&csv, &metric)?;
            let mut times: Vec<f64> = rows.iter().map(|r| r.1).collect();
            times.sort_by(f64::total_cmp);
            times.dedup();
            println!("t,p,intercept,ci_low,ci_high,r2,used,dropped");
            let opts = FitOptions {
                transformed,
                seed,
                ..Default::default()
            };
            for t in times {
                let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.1 == t).map(|r| (r.0, r.2)).collect();
                match fit_rate(&pts, &opts) {
                    Ok(f) => {
                        if f.dropped > 0 {
                            eprintln!("warning: t = {t}: {} rows with zero error dropped", f.dropped);
                        }
                        println!(
                            "{t},{},{},{},{},{},{},{}",
                            f.p, f.intercept, f.ci[0], f.ci[1], f.r2, f.used, f.dropped
                        );
                    }
                    Err(e) => eprintln!("t = {t}: {e}"),
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Check { suite, instances, seed } => Ok(if run_suites(suite, instances, seed)? {
            ExitCode::SUCCESS
        } else {
            ExitCode::from(1)
        }),
        Command::Oracle { atoms, order, seed } => {
            if !(1..=9).contains(&atoms) {
                return Err(HarnessError::Config(format!("oracle supports 1..=9 atoms, got {atoms}")));
            }
            let order = match order {
                1 => Order::One,
                2 => Order::Two,
                o => return Err(HarnessError::Config(format!("order must be 1 or 2, got {o}"))),
            };
            let inst = suites::oracle_instance(atoms, order, seed)?;
            println!("{}", serde_json::to_string_pretty(&inst)?);
            Ok(if (inst.exact - inst.brute_force).abs() <= suites::ORACLE_TOL {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
