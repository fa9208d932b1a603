//! Experiment configuration: TOML (or JSON) documents mapping onto
//! [`ExperimentConfig`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backend::{BiasLaw, MissModel};
use crate::error::{Error, Result};
use crate::types::{hump_shape, ExposureProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Random,
    Warmup,
    Bipartite,
    Optimum,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Random => "random",
            Method::Warmup => "warmup",
            Method::Bipartite => "bipartite",
            Method::Optimum => "optimum",
        }
    }
}

/// Whether arrangements use the exposure profile or plain
/// relevance-descending order (the ablation baseline).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assembly {
    #[default]
    ExposureAware,
    RelevanceDescending,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetNode {
    Fixed(usize),
    Named(String),
}

impl Default for TargetNode {
    fn default() -> Self {
        TargetNode::Named("random".into())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum TaskSpec {
    Graph {
        n_nodes: usize,
        p_edge: f64,
        #[serde(default)]
        target: TargetNode,
        /// Optional input-size sweep (node counts); defaults to `n_nodes`.
        #[serde(default)]
        sizes: Vec<usize>,
    },
    Table {
        csv: PathBuf,
        predicate: String,
        sample_rows: usize,
        /// Optional input-size sweep (sample sizes); defaults to `sample_rows`.
        #[serde(default)]
        sizes: Vec<usize>,
    },
    /// The fixed ten-edge demonstration graph, identical in every run.
    ExampleGraph,
}

impl TaskSpec {
    pub fn sizes(&self) -> Vec<usize> {
        match self {
            TaskSpec::Graph { n_nodes, sizes, .. } => {
                if sizes.is_empty() {
                    vec![*n_nodes]
                } else {
                    sizes.clone()
                }
            }
            TaskSpec::Table {
                sample_rows, sizes, ..
            } => {
                if sizes.is_empty() {
                    vec![*sample_rows]
                } else {
                    sizes.clone()
                }
            }
            TaskSpec::ExampleGraph => vec![10],
        }
    }
}

fn default_timeout() -> u64 {
    30_000
}

fn default_parallelism() -> usize {
    1
}

fn default_sim_profile() -> String {
    "uniform".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetSpec {
    /// `simulated` or `http`.
    pub kind: String,
    /// Ground-truth retention shape of the simulated target:
    /// `uniform`, `inverse_rank`, `hump` or `perfect`.
    #[serde(default = "default_sim_profile")]
    pub profile: String,
    #[serde(default)]
    pub base_url: Option<String>,
    #[serde(default)]
    pub model_id: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
}

fn default_bias() -> String {
    "log_uniform:0.5,2".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HelperSpec {
    pub kind: String,
    /// `none` or `log_uniform:<lo>,<hi>`.
    #[serde(default = "default_bias")]
    pub bias: String,
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default)]
    pub miss_rate: f64,
    #[serde(default)]
    pub base_url: Option<String>,
    #[serde(default)]
    pub model_id: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
}

impl Default for HelperSpec {
    fn default() -> Self {
        HelperSpec {
            kind: "simulated".into(),
            bias: default_bias(),
            noise_std: 0.0,
            miss_rate: 0.0,
            base_url: None,
            model_id: None,
            timeout_ms: default_timeout(),
            parallelism: default_parallelism(),
        }
    }
}

fn default_m() -> usize {
    5
}

fn default_sigma() -> usize {
    4
}

fn default_tol() -> f64 {
    crate::relevance::DEFAULT_TOL
}

fn default_max_iter() -> usize {
    crate::relevance::DEFAULT_MAX_ITER
}

fn default_rerank_profile() -> String {
    "inverse_rank".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RerankSpec {
    /// `uniform`, `inverse_rank`, `hump`, or a path to a profile JSON.
    #[serde(default = "default_rerank_profile")]
    pub exposure_profile: String,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_sigma")]
    pub sigma: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

impl Default for RerankSpec {
    fn default() -> Self {
        RerankSpec {
            exposure_profile: default_rerank_profile(),
            m: default_m(),
            sigma: default_sigma(),
            tol: default_tol(),
            max_iter: default_max_iter(),
        }
    }
}

fn default_schema_version() -> u32 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub runs: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    #[serde(default)]
    pub assembly: Assembly,
    /// Worker bound for running cells; an execution knob, not part of the
    /// experiment, so it is never echoed into reports.
    #[serde(default = "default_parallelism", skip_serializing)]
    pub parallelism: usize,
    pub task: TaskSpec,
    pub target: TargetSpec,
    #[serde(default)]
    pub helper: HelperSpec,
    #[serde(default)]
    pub rerank: RerankSpec,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("methods must be non-empty".into()));
        }
        Ok(())
    }

    /// Load from TOML, or JSON when the extension is `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let body =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let cfg: ExperimentConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&body)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&body).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn parse_bias_law(spec: &str) -> Result<BiasLaw> {
    if spec == "none" {
        return Ok(BiasLaw::Constant(1.0));
    }
    if let Some(range) = spec.strip_prefix("log_uniform:") {
        let (lo, hi) = range
            .split_once(',')
            .ok_or_else(|| Error::Config(format!("bad bias spec {spec:?}")))?;
        let (lo, hi) = (
            lo.trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("bad bias bound: {e}")))?,
            hi.trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("bad bias bound: {e}")))?,
        );
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::Config(format!("bias bounds {lo}, {hi} invalid")));
        }
        return Ok(BiasLaw::LogUniform { lo, hi });
    }
    Err(Error::Config(format!("unknown bias law {spec:?}")))
}

/// Ground-truth retention values for a simulated backend. Bernoulli truths
/// are retention probabilities; the reciprocal-error model works on an
/// arbitrary positive scale and is kept small so probed errors stay above
/// the error floor.
pub fn exposure_truth_shape(shape: &str, len: usize, model: MissModel) -> Result<Vec<f64>> {
    let base: Vec<f64> = match shape {
        "perfect" => vec![1.0; len],
        "uniform" => vec![0.9; len],
        "inverse_rank" => (1..=len).map(|i| 1.0 / i as f64).collect(),
        "hump" => hump_shape(len),
        other => {
            return Err(Error::Config(format!(
                "unknown simulated profile {other:?} (expected perfect|uniform|inverse_rank|hump)"
            )))
        }
    };
    Ok(match model {
        MissModel::BernoulliPerToken => base,
        MissModel::Threshold => {
            let max = base.iter().cloned().fold(f64::MIN, f64::max);
            base.iter().map(|v| 0.1 * v / max).collect()
        }
    })
}

/// Resolve a rerank profile spec (`uniform`, `inverse_rank`, `hump`, or a
/// file path) onto `token_len` positions; file profiles are linearly
/// resampled when their length differs.
pub fn resolve_profile(spec: &str, token_len: usize) -> Result<ExposureProfile<f64>> {
    match spec {
        "uniform" => Ok(ExposureProfile::uniform(token_len)),
        "inverse_rank" => Ok(ExposureProfile::inverse_rank(token_len)),
        "hump" => Ok(ExposureProfile::hump(token_len)),
        path => {
            let doc = crate::exposure::ProfileDocument::load(Path::new(path))?;
            Ok(doc.to_profile().resampled(token_len))
        }
    }
}
