//! Run configuration: JSON with a schema version, unknown keys rejected.

use std::path::Path;

use flatnf_core::lattice::TorusMetric;
use flatnf_core::polyalg::ParamSchedule;
use flatnf_core::simulator::Scheme;
use serde::{Deserialize, Serialize};

pub const SCHEMA: u32 = 1;

/// Configuration problem tied to a named field.
#[derive(Debug)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config field `{}`: {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

pub fn field_error(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { field: field.into(), message: message.into() }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum MetricSpec {
    /// "square" (identity, dimension from `dim`) or "admissible".
    Preset(String),
    Explicit {
        #[serde(rename = "G")]
        g: Vec<Vec<f64>>,
        #[serde(default = "default_tau_star")]
        tau_star: f64,
    },
}

fn default_tau_star() -> f64 {
    1.0
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum GammaSpec {
    Value(f64),
    /// "auto": γ = ε^{1/30}.
    Mode(String),
}

/// One coefficient of a homogeneous polynomial, given as its multi-vector.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExtraTerm {
    pub vectors: Vec<Vec<i64>>,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialData {
    /// Random amplitudes ∝ ⟨n⟩^{−s−1} with uniform phases, scaled to ε.
    Random,
    /// Equal amplitudes on the listed sites, scaled to ε.
    Sites { sites: Vec<Vec<i64>>, phases: Vec<f64> },
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ModelSpec {
    /// ½Σλ²|u|² − f′(0)/4Σ|u|⁴ plus extras.
    Hlo,
    /// Full cubic NLS on the ball.
    Nls,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(rename = "T", default = "default_t")]
    pub t_end: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default = "default_model")]
    pub model: ModelSpec,
    #[serde(default = "default_initial")]
    pub initial: InitialData,
}

fn default_t() -> f64 {
    100.0
}
fn default_dt() -> f64 {
    0.01
}
fn default_stride() -> usize {
    100
}
fn default_scheme() -> Scheme {
    Scheme::Yoshida4
}
fn default_model() -> ModelSpec {
    ModelSpec::Nls
}
fn default_initial() -> InitialData {
    InitialData::Random
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            t_end: default_t(),
            dt: default_dt(),
            stride: default_stride(),
            scheme: default_scheme(),
            model: default_model(),
            initial: default_initial(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    pub metric: MetricSpec,
    /// Dimension for the "square" preset.
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(rename = "M", default = "default_m")]
    pub m: f64,
    #[serde(default = "default_s")]
    pub s: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_r")]
    pub r: u32,
    #[serde(default = "default_degree_cap")]
    pub degree_cap: u32,
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_gamma")]
    pub gamma: GammaSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_fprime0")]
    pub fprime0: f64,
    #[serde(default = "default_c_eps")]
    pub c_eps: f64,
    #[serde(default = "default_kappa_steps")]
    pub kappa_steps: u32,
    #[serde(default = "default_work_margin")]
    pub work_margin: u32,
    /// Modulation parameters for the normal form; sampled from the ball
    /// when absent.
    #[serde(default)]
    pub xi: Option<Vec<f64>>,
    /// Tail terms of degree ≥ 6 added to the Hamiltonian.
    #[serde(default)]
    pub extras: Vec<ExtraTerm>,
    #[serde(default)]
    pub simulation: SimulationConfig,
}

fn default_m() -> f64 {
    4.0
}
fn default_s() -> f64 {
    1.0
}
fn default_epsilon() -> f64 {
    0.05
}
fn default_r() -> u32 {
    1
}
fn default_degree_cap() -> u32 {
    8
}
fn default_delta() -> f64 {
    0.25
}
fn default_gamma() -> GammaSpec {
    GammaSpec::Mode("auto".into())
}
fn default_fprime0() -> f64 {
    -1.0
}
fn default_c_eps() -> f64 {
    40.0
}
fn default_kappa_steps() -> u32 {
    6
}
fn default_work_margin() -> u32 {
    4
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| {
            let msg = e.to_string();
            // serde names unknown and missing fields in its message
            let field = extract_field(&msg).unwrap_or_else(|| "<document>".into());
            field_error(&field, msg)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| field_error("--config", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema != SCHEMA {
            return Err(field_error("schema", format!("unsupported schema {}, expected {SCHEMA}", self.schema)));
        }
        self.metric()?;
        check(self.m >= 1.0 && self.m.is_finite(), "M", format!("must be a finite real >= 1, got {}", self.m))?;
        check(self.s > 0.0 && self.s.is_finite(), "s", format!("must be > 0, got {}", self.s))?;
        check(self.epsilon > 0.0 && self.epsilon < 1.0, "epsilon", format!("must lie in (0,1), got {}", self.epsilon))?;
        check(self.r >= 1, "r", "must be >= 1".to_string())?;
        check(self.degree_cap >= 4 && self.degree_cap % 2 == 0, "degree_cap", format!("must be even and >= 4, got {}", self.degree_cap))?;
        if let Some(k) = self.kappa {
            check(k >= 0.0 && !k.is_nan(), "kappa", format!("must be >= 0, got {k}"))?;
        }
        check(self.delta > 0.0 && self.delta < 1.0, "delta", format!("must lie in (0,1), got {}", self.delta))?;
        self.gamma()?;
        check(self.fprime0.is_finite(), "fprime0", "must be finite".to_string())?;
        check(self.c_eps >= 0.0, "c_eps", "must be >= 0".to_string())?;
        check(self.kappa_steps >= 1, "kappa_steps", "must be >= 1".to_string())?;
        if let Some(xi) = &self.xi {
            check(xi.iter().all(|x| x.is_finite() && *x >= 0.0), "xi", "entries must be finite and >= 0".to_string())?;
        }
        for (i, t) in self.extras.iter().enumerate() {
            let n = t.vectors.len();
            check(n >= 6 && n % 2 == 0, &format!("extras[{i}].vectors"), format!("need an even count >= 6, got {n}"))?;
        }
        let sim = &self.simulation;
        check(sim.t_end >= 0.0 && sim.t_end.is_finite(), "simulation.T", format!("must be >= 0, got {}", sim.t_end))?;
        check(sim.dt > 0.0 && sim.dt.is_finite(), "simulation.dt", format!("must be > 0, got {}", sim.dt))?;
        check(sim.stride >= 1, "simulation.stride", "must be >= 1".to_string())?;
        if let InitialData::Sites { sites, phases } = &sim.initial {
            check(!sites.is_empty() && sites.len() == phases.len(), "simulation.initial", "need one phase per site".to_string())?;
        }
        Ok(())
    }

    pub fn metric(&self) -> Result<TorusMetric, ConfigError> {
        match &self.metric {
            MetricSpec::Preset(name) => match name.as_str() {
                "admissible" => Ok(TorusMetric::admissible_example()),
                "square" => {
                    let d = self.dim.ok_or_else(|| field_error("dim", "required with the \"square\" preset"))?;
                    check(d >= 1, "dim", "must be >= 1".to_string())?;
                    Ok(TorusMetric::square(d))
                }
                other => Err(field_error("metric", format!("unknown preset {other:?}; use \"square\", \"admissible\" or {{\"G\": ...}}"))),
            },
            MetricSpec::Explicit { g, tau_star } => {
                TorusMetric::new(g.clone(), *tau_star).map_err(|e| field_error("metric", e.to_string()))
            }
        }
    }

    pub fn gamma(&self) -> Result<f64, ConfigError> {
        match &self.gamma {
            GammaSpec::Value(g) if *g > 0.0 && g.is_finite() => Ok(*g),
            GammaSpec::Value(g) => Err(field_error("gamma", format!("must be > 0, got {g}"))),
            GammaSpec::Mode(m) if m == "auto" => Ok(self.epsilon.powf(1.0 / 30.0)),
            GammaSpec::Mode(m) => Err(field_error("gamma", format!("expected a number or \"auto\", got {m:?}"))),
        }
    }

    pub fn schedule(&self) -> Result<ParamSchedule, ConfigError> {
        ParamSchedule::new(self.epsilon, self.s, self.r)
            .map(|s| s.with_degree_cap(self.degree_cap).with_c_eps(self.c_eps))
            .map_err(|e| field_error("epsilon", e.to_string()))
    }
}

fn check(ok: bool, field: &str, message: String) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(field_error(field, message))
    }
}

fn extract_field(msg: &str) -> Option<String> {
    let start = msg.find('`')? + 1;
    let len = msg[start..].find('`')?;
    Some(msg[start..start + len].to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = RunConfig::from_json(r#"{"schema": 1, "metric": "admissible"}"#).unwrap();
        assert_eq!(c.m, 4.0);
        assert_eq!(c.degree_cap, 8);
        assert!((c.gamma().unwrap() - 0.05f64.powf(1.0 / 30.0)).abs() < 1e-15);
        assert_eq!(c.simulation, SimulationConfig::default());
    }

    #[test]
    fn explicit_metric_round_trips() {
        let c = RunConfig::from_json(r#"{"schema": 1, "metric": {"G": [[1, 0], [0, 1]], "tau_star": 2}, "M": 3}"#).unwrap();
        assert_eq!(c.metric().unwrap().dim(), 2);
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), c);
    }

    #[test]
    fn errors_name_the_field() {
        let e = RunConfig::from_json(r#"{"schema": 1, "metric": "admissible", "bogus": 3}"#).unwrap_err();
        assert_eq!(e.field, "bogus");
        let e = RunConfig::from_json(r#"{"schema": 1, "metric": "admissible", "epsilon": 2}"#).unwrap_err();
        assert_eq!(e.field, "epsilon");
        let e = RunConfig::from_json(r#"{"schema": 2, "metric": "admissible"}"#).unwrap_err();
        assert_eq!(e.field, "schema");
        let e = RunConfig::from_json(r#"{"schema": 1, "metric": "square"}"#).unwrap_err();
        assert_eq!(e.field, "dim");
        let e = RunConfig::from_json(r#"{"schema": 1, "metric": {"G": [[1, 2], [2, 1]]}}"#).unwrap_err();
        assert_eq!(e.field, "metric");
        let e = RunConfig::from_json(r#"{"schema": 1, "metric": "admissible", "gamma": "often"}"#).unwrap_err();
        assert_eq!(e.field, "gamma");
        let e = RunConfig::from_json(r#"{"schema": 1, "metric": "admissible", "simulation": {"dt": -1}}"#).unwrap_err();
        assert_eq!(e.field, "simulation.dt");
        assert!(RunConfig::from_json("{not json").is_err());
    }
}
