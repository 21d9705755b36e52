//! Experiment configuration files (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{AggregatorKind, DEFAULT_CAGRAD_C, DEFAULT_DWA_TEMPERATURE};
use crate::linalg::Vector;
use crate::metrics::{MetricTable, TaskSpec};
use crate::nash::NashConfig;
use crate::optimizer::{OptimizerConfig, StepRule, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
use crate::problems::{self, Problem, ProblemError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    Toy,
    Quadratics { tasks: usize, dim: usize, cond: f64, seed: u64 },
}

impl ProblemSpec {
    pub fn build(&self) -> Result<Box<dyn Problem>, ConfigError> {
        Ok(match *self {
            ProblemSpec::Toy => Box::new(problems::ToyProblem::new()),
            ProblemSpec::Quadratics { tasks, dim, cond, seed } => {
                Box::new(problems::random_quadratics(tasks, dim, cond, seed)?)
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedInits {
    Toy5,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitSpec {
    Named(NamedInits),
    /// Uniform draws from the problem's domain box.
    Random { random: usize },
    Explicit(Vec<Vec<f64>>),
}

/// Step rule as written in a file; a theorem rule without `lipschitz` takes
/// the problem's exact constant or, failing that, a sampled estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepRuleSpec {
    Theorem {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lipschitz: Option<f64>,
    },
    Fixed {
        lr: f64,
    },
    Adam {
        lr: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        beta1: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        beta2: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eps: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSpec {
    pub step_rule: StepRuleSpec,
    pub max_steps: usize,
    #[serde(default = "one")]
    pub weight_update_every: usize,
    #[serde(default = "default_tol")]
    pub stationarity_tol: f64,
    #[serde(default = "hundred")]
    pub stationarity_check_every: usize,
    #[serde(default = "one")]
    pub record_every: usize,
}

fn one() -> usize {
    1
}
fn hundred() -> usize {
    100
}
fn default_tol() -> f64 {
    1e-8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregatorParams {
    #[serde(default = "default_cagrad_c")]
    pub cagrad_c: f64,
    #[serde(default = "default_dwa_temperature")]
    pub dwa_temperature: f64,
}

fn default_cagrad_c() -> f64 {
    DEFAULT_CAGRAD_C
}
fn default_dwa_temperature() -> f64 {
    DEFAULT_DWA_TEMPERATURE
}

impl Default for AggregatorParams {
    fn default() -> Self {
        AggregatorParams {
            cagrad_c: DEFAULT_CAGRAD_C,
            dwa_temperature: DEFAULT_DWA_TEMPERATURE,
        }
    }
}

/// Overrides for the bargaining solver; omitted keys keep their defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NashSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ccp_max_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subproblem_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_k_threshold: Option<f64>,
}

impl NashSpec {
    fn resolve(&self) -> NashConfig {
        let d = NashConfig::default();
        NashConfig {
            ccp_max_iters: self.ccp_max_iters.unwrap_or(d.ccp_max_iters),
            residual_tol: self.residual_tol.unwrap_or(d.residual_tol),
            subproblem_tol: self.subproblem_tol.unwrap_or(d.subproblem_tol),
            sigma_k_threshold: self.sigma_k_threshold.unwrap_or(d.sigma_k_threshold),
            ..d
        }
    }
}

/// Per-task reference values turning final losses into a metric table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSpec {
    pub baseline: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub task_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSpec {
    pub weight_update_every: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub aggregators: Vec<String>,
    pub inits: InitSpec,
    pub optimizer: OptimizerSpec,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub emit_plots: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub params: AggregatorParams,
    #[serde(default, skip_serializing_if = "is_default")]
    pub nash: NashSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bench: Option<BenchSpec>,
}

fn is_default(n: &NashSpec) -> bool {
    *n == NashSpec::default()
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks everything that can be checked without running.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let kinds = self.aggregator_kinds()?;
        let problem = self.problem.build()?;
        self.initial_points(problem.as_ref())?;
        let step_rule = self.step_rule(problem.as_ref())?;
        for kind in &kinds {
            self.optimizer_config(step_rule)
                .validate(kind)
                .map_err(|e| invalid("optimizer", e.to_string()))?;
        }
        if let Some(m) = &self.metrics {
            if m.baseline.len() != problem.num_tasks() {
                return Err(invalid(
                    "metrics.baseline",
                    format!("{} values for {} tasks", m.baseline.len(), problem.num_tasks()),
                ));
            }
            if !m.task_names.is_empty() && m.task_names.len() != problem.num_tasks() {
                return Err(invalid("metrics.task_names", "one name per task required"));
            }
        }
        if let Some(b) = &self.bench {
            if b.weight_update_every.is_empty() || b.weight_update_every.contains(&0) {
                return Err(invalid("bench.weight_update_every", "needs one or more values >= 1"));
            }
            self.optimizer_config(step_rule)
                .validate(&AggregatorKind::Nash)
                .map_err(|e| invalid("optimizer", e.to_string()))?;
        }
        Ok(())
    }

    pub fn aggregator_kinds(&self) -> Result<Vec<AggregatorKind>, ConfigError> {
        if self.aggregators.is_empty() {
            return Err(invalid("aggregators", "at least one aggregator is required"));
        }
        let mut out = Vec::with_capacity(self.aggregators.len());
        for name in &self.aggregators {
            let kind = match name.parse::<AggregatorKind>().map_err(|e| invalid("aggregators", e.to_string()))? {
                AggregatorKind::CaGrad { .. } => AggregatorKind::CaGrad { c: self.params.cagrad_c },
                AggregatorKind::Dwa { .. } => AggregatorKind::Dwa {
                    temperature: self.params.dwa_temperature,
                },
                k => k,
            };
            kind.validate().map_err(|e| invalid("params", e.to_string()))?;
            if out.contains(&kind) {
                return Err(invalid("aggregators", format!("{name:?} listed twice")));
            }
            out.push(kind);
        }
        Ok(out)
    }

    pub fn initial_points(&self, problem: &dyn Problem) -> Result<Vec<Vector>, ConfigError> {
        let pts = match &self.inits {
            InitSpec::Named(NamedInits::Toy5) => {
                if self.problem != ProblemSpec::Toy {
                    return Err(invalid("inits", "\"toy5\" applies to the toy problem only"));
                }
                problems::toy_inits()
            }
            InitSpec::Random { random } => {
                use rand::SeedableRng;
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(self.seed ^ 0x1A17_5EED);
                let b = problem.domain();
                (0..*random).map(|_| b.sample(&mut rng)).collect()
            }
            InitSpec::Explicit(list) => list.iter().map(|p| Vector::from(p.clone())).collect(),
        };
        if pts.is_empty() {
            return Err(invalid("inits", "at least one initial point is required"));
        }
        for (i, p) in pts.iter().enumerate() {
            if p.len() != problem.dim() {
                return Err(invalid(
                    "inits",
                    format!("point {i} has dimension {}, problem has {}", p.len(), problem.dim()),
                ));
            }
            if !p.is_finite() {
                return Err(invalid("inits", format!("point {i} is not finite")));
            }
        }
        Ok(pts)
    }

    pub fn step_rule(&self, problem: &dyn Problem) -> Result<StepRule, ConfigError> {
        Ok(match self.optimizer.step_rule {
            StepRuleSpec::Theorem { lipschitz } => StepRule::Theorem {
                lipschitz: match lipschitz.or_else(|| problem.lipschitz()) {
                    Some(l) => l,
                    None if self.problem == ProblemSpec::Toy => problems::toy_lipschitz_estimate(),
                    None => return Err(invalid("optimizer.step_rule.lipschitz", "required for this problem")),
                },
            },
            StepRuleSpec::Fixed { lr } => StepRule::Fixed { lr },
            StepRuleSpec::Adam { lr, beta1, beta2, eps } => StepRule::Adam {
                lr,
                beta1: beta1.unwrap_or(ADAM_BETA1),
                beta2: beta2.unwrap_or(ADAM_BETA2),
                eps: eps.unwrap_or(ADAM_EPS),
            },
        })
    }

    pub fn optimizer_config(&self, step_rule: StepRule) -> OptimizerConfig {
        let o = &self.optimizer;
        OptimizerConfig {
            step_rule,
            max_steps: o.max_steps,
            weight_update_every: o.weight_update_every,
            stationarity_tol: o.stationarity_tol,
            stationarity_check_every: o.stationarity_check_every,
            record_every: o.record_every,
            seed: self.seed,
            nash: self.nash.resolve(),
        }
    }

    /// Empty metric table for the configured baseline, if any.
    pub fn metric_table(&self) -> Option<MetricTable> {
        let m = self.metrics.as_ref()?;
        let tasks = (0..m.baseline.len())
            .map(|i| TaskSpec::new(m.task_names.get(i).cloned().unwrap_or_else(|| format!("loss_{i}")), false))
            .collect();
        MetricTable::new(tasks, m.baseline.clone()).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = r#"
        aggregators = ["nash", "ls", "cagrad"]
        inits = "toy5"
        output_dir = "out/toy"
        emit_plots = true

        [problem]
        kind = "toy"

        [optimizer]
        max_steps = 35000
        step_rule = { kind = "adam", lr = 1e-3 }

        [params]
        cagrad_c = 0.5
    "#;

    #[test]
    fn parses_toy_config() {
        let c = ExperimentConfig::from_toml(TOY).unwrap();
        assert_eq!(c.inits, InitSpec::Named(NamedInits::Toy5));
        let kinds = c.aggregator_kinds().unwrap();
        assert_eq!(kinds[2], AggregatorKind::CaGrad { c: 0.5 });
        assert_eq!(c.optimizer.weight_update_every, 1);
        let p = c.problem.build().unwrap();
        assert_eq!(c.initial_points(p.as_ref()).unwrap().len(), 5);
        assert_eq!(c.step_rule(p.as_ref()).unwrap(), StepRule::adam(1e-3));
    }

    #[test]
    fn round_trips() {
        let c = ExperimentConfig::from_toml(TOY).unwrap();
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);

        let q = r#"
            aggregators = ["nash"]
            inits = [[0.0, 1.0, 2.0], [1.5, -1.0, 0.25]]
            output_dir = "q"
            seed = 7
            [problem]
            kind = "quadratics"
            tasks = 2
            dim = 3
            cond = 10.0
            seed = 1
            [optimizer]
            max_steps = 10
            step_rule = { kind = "theorem" }
            [nash]
            ccp_max_iters = 5
            [metrics]
            baseline = [1.0, 2.0]
            [bench]
            weight_update_every = [1, 5]
        "#;
        let c = ExperimentConfig::from_toml(q).unwrap();
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn rejects_unknown_keys() {
        let typo = TOY.replace("emit_plots", "emit_plot");
        assert!(matches!(ExperimentConfig::from_toml(&typo), Err(ConfigError::Parse(_))));
        let nested = TOY.replace("cagrad_c", "cagrad_cc");
        assert!(ExperimentConfig::from_toml(&nested).is_err());
    }

    #[test]
    fn empty_aggregators_names_field() {
        let c = TOY.replace(r#"["nash", "ls", "cagrad"]"#, "[]");
        let err = ExperimentConfig::from_toml(&c).unwrap_err();
        assert!(err.to_string().contains("aggregators"), "{err}");
    }

    #[test]
    fn theorem_rule_needs_nash() {
        let c = TOY.replace(r#"{ kind = "adam", lr = 1e-3 }"#, r#"{ kind = "theorem" }"#);
        let err = ExperimentConfig::from_toml(&c).unwrap_err();
        assert!(err.to_string().contains("optimizer"), "{err}");
    }

    #[test]
    fn toy5_inits_only_for_toy() {
        let c = r#"
            aggregators = ["ls"]
            inits = "toy5"
            output_dir = "x"
            [problem]
            kind = "quadratics"
            tasks = 2
            dim = 4
            cond = 3.0
            seed = 0
            [optimizer]
            max_steps = 1
            step_rule = { kind = "fixed", lr = 0.1 }
        "#;
        let err = ExperimentConfig::from_toml(c).unwrap_err();
        assert!(err.to_string().contains("inits"), "{err}");
        let ok = c.replace(r#""toy5""#, "{ random = 3 }");
        let cfg = ExperimentConfig::from_toml(&ok).unwrap();
        let p = cfg.problem.build().unwrap();
        assert_eq!(cfg.initial_points(p.as_ref()).unwrap().len(), 3);
    }
}
