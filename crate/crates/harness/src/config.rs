use std::path::{Path, PathBuf};

use inviscid_core::evolve::EULER_HORIZON;
use inviscid_core::field::{make_initial_data, Grid2D, InitialDataKind};
use inviscid_core::transport::{SinkhornConfig, TransportMethod};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Worker threads for the viscosity legs.
    #[serde(default = "default_workers")]
    pub workers: usize,
    pub initial_data: InitialDataKind,
    pub grid: GridConfig,
    /// Strictly decreasing viscosities in (0, 1).
    pub nu_ladder: Vec<f64>,
    /// Viscosity of the shared reference run; 0 gives Euler.
    #[serde(default)]
    pub reference_nu: f64,
    pub times: TimesConfig,
    pub solver: SolverSettings,
    pub coupling: CouplingSettings,
    pub transport: TransportSettings,
    #[serde(default)]
    pub checks: CheckSettings,
}

fn default_workers() -> usize {
    4
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimesConfig {
    pub values: Vec<f64>,
    /// Values are in units of `1 / |w0|_inf`.
    #[serde(default)]
    pub relative: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    pub dt: f64,
    #[serde(default = "yes")]
    pub dealias: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSettings {
    pub particles: usize,
    /// Coupling step in solver steps.
    #[serde(default = "one")]
    pub step_multiple: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    Exact,
    Sinkhorn,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportSettings {
    pub method: MethodName,
    #[serde(default)]
    pub sinkhorn: SinkhornConfig,
    /// Block-average factor applied to fields before discretization.
    #[serde(default = "one")]
    pub coarsen: usize,
    pub max_support: usize,
}

impl TransportSettings {
    pub fn method(&self) -> TransportMethod {
        match self.method {
            MethodName::Exact => TransportMethod::Exact,
            MethodName::Sinkhorn => TransportMethod::Sinkhorn(self.sinkhorn),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSettings {
    /// Run even when `sqrt(min nu * max t)` is below the grid spacing.
    #[serde(default)]
    pub allow_underresolved: bool,
    /// Estimate the reference discretization error by grid doubling.
    #[serde(default = "yes")]
    pub trust_check: bool,
}

impl Default for CheckSettings {
    fn default() -> Self {
        Self {
            allow_underresolved: false,
            trust_check: true,
        }
    }
}

/// Evaluation schedule after rounding to the coupling step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub times: Vec<f64>,
    pub steps: Vec<usize>,
    pub total_steps: usize,
    pub step_multiple: usize,
    pub dt: f64,
    pub linf: f64,
    pub l1: f64,
    /// Resolved-scale check failed but was explicitly overridden.
    pub underresolved_override: bool,
}

impl Schedule {
    pub fn t_end(&self) -> f64 {
        self.total_steps as f64 * self.dt
    }
}

fn cfg_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, path: &Path) -> Result<Self> {
        let value: toml::Table = text.parse().map_err(|e: toml::de::Error| HarnessError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_table(value, path)
    }

    fn from_table(table: toml::Table, path: &Path) -> Result<Self> {
        toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| HarnessError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Load a config file and apply `path=value` overrides; override values
    /// are parsed as TOML and fall back to plain strings.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| HarnessError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg = Self::from_table(table, path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn grid(&self) -> Result<Grid2D> {
        Grid2D::new(self.grid.n, self.grid.length).map_err(|e| cfg_err(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule().map(|_| ())
    }

    /// Validate and build the evaluation schedule. Times are rounded to the
    /// nearest multiple of the coupling step (at least zero).
    pub fn schedule(&self) -> Result<Schedule> {
        let grid = self.grid()?;
        let nus = &self.nu_ladder;
        if nus.is_empty() {
            return Err(cfg_err("nu_ladder is empty"));
        }
        if let Some(nu) = nus.iter().find(|&&v| !(v > 0.0 && v < 1.0)) {
            return Err(cfg_err(format!("nu_ladder entries must lie in (0, 1), got {nu}")));
        }
        if nus.windows(2).any(|w| w[1] >= w[0]) {
            return Err(cfg_err("nu_ladder must be strictly decreasing"));
        }
        if !(self.reference_nu >= 0.0 && self.reference_nu < 1.0) {
            return Err(cfg_err(format!("reference_nu must lie in [0, 1), got {}", self.reference_nu)));
        }
        let dt = self.solver.dt;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(cfg_err(format!("solver.dt must be positive, got {dt}")));
        }
        if self.coupling.particles == 0 || self.coupling.step_multiple == 0 {
            return Err(cfg_err("coupling.particles and coupling.step_multiple must be >= 1"));
        }
        let t = &self.transport;
        if t.coarsen == 0 || !t.coarsen.is_power_of_two() || grid.n() / t.coarsen < 8 {
            return Err(cfg_err(format!("transport.coarsen = {} invalid for n = {}", t.coarsen, grid.n())));
        }
        if t.max_support == 0 {
            return Err(cfg_err("transport.max_support must be >= 1"));
        }
        if self.workers == 0 {
            return Err(cfg_err("workers must be >= 1"));
        }
        let init = make_initial_data(grid, &self.initial_data).map_err(|e| cfg_err(e.to_string()))?;
        let linf = init.meta.linf;
        if self.times.values.is_empty() {
            return Err(cfg_err("times.values is empty"));
        }
        if self.times.relative && linf == 0.0 {
            return Err(cfg_err("relative times need a nonzero initial vorticity"));
        }
        let quantum = dt * self.coupling.step_multiple as f64;
        let mut times = Vec::new();
        let mut steps = Vec::new();
        for &v in &self.times.values {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(cfg_err(format!("evaluation times must be >= 0, got {v}")));
            }
            let t = if self.times.relative { v / linf } else { v };
            let k = (t / quantum).round() as usize;
            let s = k * self.coupling.step_multiple;
            if steps.contains(&s) {
                return Err(cfg_err(format!("evaluation time {v} coincides with another after rounding to dt")));
            }
            steps.push(s);
            times.push(s as f64 * dt);
        }
        let mut order: Vec<usize> = (0..steps.len()).collect();
        order.sort_by_key(|&i| steps[i]);
        let steps: Vec<usize> = order.iter().map(|&i| steps[i]).collect();
        let times: Vec<f64> = order.iter().map(|&i| times[i]).collect();
        let total_steps = *steps.last().unwrap();
        let t_max = total_steps as f64 * dt;
        if self.reference_nu == 0.0 && t_max * linf > EULER_HORIZON {
            return Err(cfg_err(format!(
                "Euler horizon exceeded: t_max * |w0|_inf = {} > {EULER_HORIZON}",
                t_max * linf
            )));
        }
        let nu_min = *nus.last().unwrap();
        let resolved = (nu_min * t_max).sqrt() >= grid.spacing();
        if !resolved && !self.checks.allow_underresolved {
            return Err(cfg_err(format!(
                "resolved-scale check failed: sqrt(min nu * max t) = {:e} < spacing {:e}; set checks.allow_underresolved to override",
                (nu_min * t_max).sqrt(),
                grid.spacing()
            )));
        }
        Ok(Schedule {
            times,
            steps,
            total_steps,
            step_multiple: self.coupling.step_multiple,
            dt,
            linf,
            l1: init.meta.l1,
            underresolved_override: !resolved,
        })
    }

    /// SHA-256 of the settings that determine the results (everything but
    /// the output directory and the worker count).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c.workers = 1;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Run directory name, stamped by the config hash.
    pub fn stamp(&self) -> String {
        format!("{}-{}", self.name, &self.hash()[..12])
    }
}

/// Apply one `a.b.c=value` override to a parsed config table.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| cfg_err(format!("override '{spec}' is not of the form path=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(cfg_err(format!("bad override path '{path}'")));
    }
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let mut node = table;
    for k in &keys[..keys.len() - 1] {
        let entry = node
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| cfg_err(format!("override path '{path}': '{k}' is not a table")))?;
    }
    node.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
name = "t"
seed = 1
output_dir = "out"
nu_ladder = [1e-2, 5e-3]

[initial_data]
kind = "taylor_green"
amplitude = 1.0

[grid]
n = 16
length = 1.0

[times]
values = [0.5, 1.0]

[solver]
dt = 0.01

[coupling]
particles = 100

[transport]
method = "exact"
max_support = 256
"#;

    fn parse(text: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml_str(text, Path::new("inline")).unwrap()
    }

    #[test]
    fn overrides_set_nested_values() {
        let mut t: toml::Table = BASE.parse().unwrap();
        apply_override(&mut t, "grid.n=32").unwrap();
        apply_override(&mut t, "transport.method=sinkhorn").unwrap();
        apply_override(&mut t, "nu_ladder=[0.1, 0.01]").unwrap();
        let c = ExperimentConfig::from_table(t, Path::new("x")).unwrap();
        assert_eq!(c.grid.n, 32);
        assert_eq!(c.transport.method, MethodName::Sinkhorn);
        assert_eq!(c.nu_ladder, vec![0.1, 0.01]);
        assert!(matches!(
            apply_override(&mut BASE.parse().unwrap(), "novalue"),
            Err(HarnessError::Config(_))
        ));
    }

    #[test]
    fn ladder_must_decrease() {
        let mut c = parse(BASE);
        c.schedule().unwrap();
        c.nu_ladder = vec![1e-3, 1e-2];
        assert!(c.validate().is_err());
        c.nu_ladder = vec![1.5];
        assert!(c.validate().is_err());
    }

    #[test]
    fn times_round_to_coupling_step() {
        let mut c = parse(BASE);
        c.coupling.step_multiple = 3;
        c.times.values = vec![0.1, 0.5];
        c.checks.allow_underresolved = true;
        let s = c.schedule().unwrap();
        assert_eq!(s.steps, vec![9, 51]);
        assert!((s.times[1] - 0.51).abs() < 1e-12);
    }

    #[test]
    fn underresolved_needs_override() {
        let mut c = parse(BASE);
        c.nu_ladder = vec![1e-6];
        assert!(matches!(c.validate(), Err(HarnessError::Config(_))));
        c.checks.allow_underresolved = true;
        assert!(c.schedule().unwrap().underresolved_override);
    }

    #[test]
    fn hash_ignores_output_location() {
        let a = parse(BASE);
        let mut b = a.clone();
        b.output_dir = "elsewhere".into();
        b.workers = 7;
        assert_eq!(a.hash(), b.hash());
        b.seed = 2;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{BASE}\n[extra]\nfoo = 1\n");
        assert!(ExperimentConfig::from_toml_str(&text, Path::new("x")).is_err());
    }
}
