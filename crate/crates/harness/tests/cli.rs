use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn inviscid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_inviscid")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn shipped() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/short_time.toml")
}

fn small_overrides(out: &Path) -> Vec<String> {
    [
        "grid.n=32",
        "initial_data.edge_width=0.04",
        "nu_ladder=[8e-3, 2e-3]",
        "coupling.particles=200",
        "transport.coarsen=2",
        "times.values=[0.1, 0.2]",
        "checks.allow_underresolved=true",
    ]
    .iter()
    .map(|s| s.to_string())
    .chain([format!("output_dir=\"{}\"", out.display())])
    .collect()
}

fn run_args<'a>(config: &'a str, overrides: &'a [String]) -> Vec<&'a str> {
    let mut args = vec!["run", config];
    for o in overrides {
        args.extend(["--set", o.as_str()]);
    }
    args
}

#[test]
fn run_writes_stamped_directory() {
    let out = tempfile::tempdir().unwrap();
    let config = shipped().display().to_string();
    let overrides = small_overrides(out.path());
    let o = inviscid(&run_args(&config, &overrides));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let dir = PathBuf::from(String::from_utf8(o.stdout).unwrap().trim());
    assert!(dir.starts_with(out.path()));
    assert!(dir.file_name().unwrap().to_str().unwrap().starts_with("short_time-"));
    assert!(dir.join("rates.csv").is_file());

    let fit = inviscid(&["fit", dir.join("rates.csv").to_str().unwrap()]);
    assert_eq!(code(&fit), 0);
    let stdout = String::from_utf8(fit.stdout).unwrap();
    assert!(stdout.starts_with("t,p,intercept"));
}

#[test]
fn configuration_errors_exit_2() {
    let out = tempfile::tempdir().unwrap();
    let config = shipped().display().to_string();
    for bad in [
        "nu_ladder=[1e-3, 2e-3]",
        "grid.bogus=1",
        "transport.method=\"simplex\"",
        "times.values=[0.1, 0.1]",
        "nu_ladder",
    ] {
        let mut overrides = small_overrides(out.path());
        overrides.push(bad.into());
        let o = inviscid(&run_args(&config, &overrides));
        assert_eq!(code(&o), 2, "{bad}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let garbage = out.path().join("broken.toml");
    std::fs::write(&garbage, "name = [").unwrap();
    assert_eq!(code(&inviscid(&["run", garbage.to_str().unwrap()])), 2);
    assert_eq!(code(&inviscid(&["run"])), 2);
    assert_eq!(code(&inviscid(&["check", "--suite", "nope"])), 2);
    assert_eq!(code(&inviscid(&["oracle", "--atoms", "12"])), 2);
}

#[test]
fn solver_failure_exits_1() {
    let out = tempfile::tempdir().unwrap();
    let config = shipped().display().to_string();
    let mut overrides = small_overrides(out.path());
    overrides.extend(["solver.dt=0.2".to_string(), "times.values=[0.4]".to_string(), "times.relative=false".to_string()]);
    let o = inviscid(&run_args(&config, &overrides));
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn check_and_oracle_verbs() {
    let o = inviscid(&["check", "--suite", "ordering", "--instances", "20", "--seed", "4"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8(o.stdout).unwrap().contains("ordering"));
    let o = inviscid(&["oracle", "--atoms", "5", "--order", "1", "--seed", "9"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["exact"].as_f64().unwrap() - v["brute_force"].as_f64().unwrap()).abs() < 1e-10);
}
