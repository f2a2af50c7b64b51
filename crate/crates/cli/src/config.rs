//! Experiment configuration: strict JSON, validated per mode.

use std::fmt;
use std::path::Path;

use lossmesh_core::sim::ProbeSampling;
use lossmesh_core::{ServiceDistribution, ServiceKind};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Fixedpoint,
    OdeExp,
    OdePhase,
    OdeHetero,
    Simulate,
    Insensitivity,
    Transient,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Fixedpoint => "fixedpoint",
            Mode::OdeExp => "ode_exp",
            Mode::OdePhase => "ode_phase",
            Mode::OdeHetero => "ode_hetero",
            Mode::Simulate => "simulate",
            Mode::Insensitivity => "insensitivity",
            Mode::Transient => "transient",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeteroConfig {
    pub gamma: Vec<f64>,
    pub capacity: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// Arrival rate per server.
    pub lambda: f64,
    #[serde(default = "one")]
    pub mu: f64,
    #[serde(default)]
    pub capacity: Option<usize>,
    pub d: u32,
    /// Service law; exponential with rate `mu` when absent.
    #[serde(default)]
    pub service: Option<ServiceDistribution>,
    /// Laws compared in `insensitivity` mode.
    #[serde(default)]
    pub services: Vec<ServiceDistribution>,
    #[serde(default)]
    pub hetero: Option<HeteroConfig>,
}

fn default_n_servers() -> Vec<usize> {
    vec![10_000]
}
fn default_t_total() -> f64 {
    2000.0
}
fn default_replications() -> u64 {
    20
}
fn default_batches() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_n_servers")]
    pub n_servers: Vec<usize>,
    #[serde(default = "default_t_total")]
    pub t_total: f64,
    /// Half of `t_total` when absent.
    #[serde(default)]
    pub t_warmup: Option<f64>,
    #[serde(default = "default_replications")]
    pub replications: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sampling: ProbeSampling,
    #[serde(default = "default_batches")]
    pub batches: usize,
    /// Take age snapshots every five mean service times after warm-up.
    #[serde(default)]
    pub age_snapshots: bool,
    /// Trace times for `transient`; `0, 0.25, …, 10` when empty.
    #[serde(default)]
    pub sample_times: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_servers: default_n_servers(),
            t_total: default_t_total(),
            t_warmup: None,
            replications: default_replications(),
            seed: 0,
            sampling: ProbeSampling::default(),
            batches: default_batches(),
            age_snapshots: false,
            sample_times: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn warmup(&self) -> f64 {
        self.t_warmup.unwrap_or(self.t_total / 2.0)
    }

    pub fn trace_times(&self) -> Vec<f64> {
        if self.sample_times.is_empty() {
            (0..=40).map(|i| i as f64 * 0.25).collect()
        } else {
            self.sample_times.clone()
        }
    }
}

fn default_t_ode() -> f64 {
    200.0
}
fn default_tolerance() -> f64 {
    1e-13
}
fn default_out_every() -> usize {
    1000
}
fn default_initial_points() -> Vec<u64> {
    vec![1, 2, 3, 4]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsConfig {
    /// RK4 step; `1e-3` divided by the fastest service rate when absent.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "default_t_ode")]
    pub t_ode: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_out_every")]
    pub out_every: usize,
    /// Seeds of the random initial points in `ode_phase`.
    #[serde(default = "default_initial_points")]
    pub initial_points: Vec<u64>,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        Self {
            dt: None,
            t_ode: default_t_ode(),
            tolerance: default_tolerance(),
            out_every: default_out_every(),
            initial_points: default_initial_points(),
        }
    }
}

fn default_dir() -> String {
    "out".into()
}
fn default_y_grid() -> Vec<f64> {
    vec![std::f64::consts::LN_2, 1.0, 2.0]
}
fn default_abs_tol() -> f64 {
    0.02
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: String,
    #[serde(default = "default_y_grid")]
    pub y_grid: Vec<f64>,
    /// Also emit every phase-state coordinate in `ode_phase`.
    #[serde(default)]
    pub full_state: bool,
    /// Absolute tolerance of model/estimate comparisons.
    #[serde(default = "default_abs_tol")]
    pub abs_tol: f64,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            y_grid: default_y_grid(),
            full_state: false,
            abs_tol: default_abs_tol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub system: SystemConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub numerics: NumericsConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn bad(field: &str, msg: impl fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

impl ExperimentConfig {
    /// Parses and validates a JSON document.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let mut de = serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let inner = e.inner();
            CliError::Config(format!(
                "{}: {} (line {}, column {})",
                e.path(),
                inner,
                inner.line(),
                inner.column()
            ))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical JSON form; `from_json(to_json(c)) == c`.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of the compact canonical form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(&Sha256::digest(&bytes)[..8])
    }

    pub fn capacity(&self) -> Result<usize, CliError> {
        self.system
            .capacity
            .ok_or_else(|| bad("system.capacity", format!("required in {} mode", self.mode)))
    }

    /// The configured service law, defaulting to exponential(μ).
    pub fn service(&self) -> ServiceDistribution {
        self.system
            .service
            .clone()
            .unwrap_or_else(|| ServiceDistribution::exponential(self.system.mu).expect("validated mu"))
    }

    /// RK4 step for an ODE whose fastest rate is `rate`.
    pub fn dt(&self, rate: f64) -> f64 {
        self.numerics.dt.unwrap_or(1e-3 / rate)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let s = &self.system;
        if !(s.lambda.is_finite() && s.lambda > 0.0) {
            return Err(bad("system.lambda", "must be positive"));
        }
        if !(s.mu.is_finite() && s.mu > 0.0) {
            return Err(bad("system.mu", "must be positive"));
        }
        if s.d == 0 {
            return Err(bad("system.d", "must be at least 1"));
        }
        if s.capacity == Some(0) {
            return Err(bad("system.capacity", "must be at least 1"));
        }
        let check_mean = |field: &str, dist: &ServiceDistribution| {
            dist.check_mean(1.0 / s.mu)
                .map_err(|_| bad(field, format!("mean {} differs from 1/mu = {}", dist.mean(), 1.0 / s.mu)))
        };
        if let Some(dist) = &s.service {
            check_mean("system.service", dist)?;
        }
        for (i, dist) in s.services.iter().enumerate() {
            check_mean(&format!("system.services[{i}]"), dist)?;
        }
        if let Some(h) = &s.hetero {
            if h.gamma.is_empty() || h.gamma.len() != h.capacity.len() {
                return Err(bad("system.hetero.gamma", "needs one fraction per capacity"));
            }
            if h.gamma.iter().any(|g| !(g.is_finite() && *g > 0.0))
                || (h.gamma.iter().sum::<f64>() - 1.0).abs() > 1e-12
            {
                return Err(bad("system.hetero.gamma", "must be positive and sum to 1"));
            }
            if h.capacity[0] == 0 || h.capacity.windows(2).any(|w| w[1] < w[0]) {
                return Err(bad("system.hetero.capacity", "must be positive and nondecreasing"));
            }
        }
        let r = &self.run;
        if r.n_servers.is_empty() || r.n_servers.contains(&0) {
            return Err(bad("run.n_servers", "need at least one positive cluster size"));
        }
        if !(r.t_total.is_finite() && r.t_total > 0.0) {
            return Err(bad("run.t_total", "must be positive"));
        }
        if !(r.warmup() >= 0.0 && r.warmup() < r.t_total) {
            return Err(bad("run.t_warmup", "must lie in [0, t_total)"));
        }
        if r.replications == 0 {
            return Err(bad("run.replications", "must be at least 1"));
        }
        if r.batches < 2 {
            return Err(bad("run.batches", "need at least 2"));
        }
        if r.sample_times.windows(2).any(|w| w[1] <= w[0]) || r.sample_times.iter().any(|t| *t < 0.0) {
            return Err(bad("run.sample_times", "must be nonnegative and increasing"));
        }
        let n = &self.numerics;
        if let Some(dt) = n.dt {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(bad("numerics.dt", "must be positive"));
            }
        }
        if !(n.t_ode.is_finite() && n.t_ode > 0.0) {
            return Err(bad("numerics.t_ode", "must be positive"));
        }
        if !(n.tolerance.is_finite() && n.tolerance > 0.0) {
            return Err(bad("numerics.tolerance", "must be positive"));
        }
        if n.out_every == 0 {
            return Err(bad("numerics.out_every", "must be at least 1"));
        }
        if self.output.y_grid.iter().any(|y| y.is_nan() || *y < 0.0) {
            return Err(bad("output.y_grid", "ages must be nonnegative"));
        }
        match self.mode {
            Mode::Fixedpoint | Mode::OdeExp | Mode::Transient => {
                self.capacity()?;
            }
            Mode::Simulate => {
                if s.hetero.is_none() {
                    self.capacity()?;
                }
            }
            Mode::OdePhase => {
                self.capacity()?;
                match s.service.as_ref().map(ServiceDistribution::kind) {
                    Some(ServiceKind::MixedErlang { .. }) => {}
                    _ => return Err(bad("system.service", "ode_phase needs a mixed_erlang service")),
                }
                if n.initial_points.is_empty() {
                    return Err(bad("numerics.initial_points", "need at least one seed"));
                }
            }
            Mode::OdeHetero => {
                if s.hetero.is_none() {
                    return Err(bad("system.hetero", "required in ode_hetero mode"));
                }
            }
            Mode::Insensitivity => {
                self.capacity()?;
                if s.services.is_empty() {
                    return Err(bad("system.services", "required in insensitivity mode"));
                }
            }
        }
        Ok(())
    }
}

/// Reads, parses and validates a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    ExperimentConfig::from_json(&text)
}

/// Writes the canonical form of `cfg` to `path`.
pub fn write_config(cfg: &ExperimentConfig, path: &Path) -> Result<(), CliError> {
    std::fs::write(path, cfg.to_json()).map_err(|e| CliError::Engine(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"mode":"fixedpoint","system":{"lambda":1,"mu":1,"capacity":5,"d":2}}"#;

    #[test]
    fn minimal_fixedpoint() {
        let cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.mode, Mode::Fixedpoint);
        assert_eq!(cfg.capacity().unwrap(), 5);
        assert_eq!(cfg.run, RunConfig::default());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = ExperimentConfig::from_json(MINIMAL).unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.run.seed = 7;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn canonical_round_trip() {
        let a = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(ExperimentConfig::from_json(&a.to_json()).unwrap(), a);
    }
}
