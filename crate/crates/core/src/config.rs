//! Experiment configuration files (JSON) shared by the CLI subcommands.

use crate::icnn::IcnnConfig;
use crate::priors::PriorConfig;
use crate::train::TrainConfig;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkConfig {
    #[serde(default = "default_layers")]
    pub layers: usize,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub mu: f64,
}

fn default_layers() -> usize {
    2
}
fn default_hidden() -> usize {
    256
}
fn default_beta() -> f64 {
    5.0
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            layers: 2,
            hidden: 256,
            beta: 5.0,
            mu: 0.0,
        }
    }
}

impl NetworkConfig {
    pub fn icnn(&self, input_dim: usize) -> IcnnConfig {
        IcnnConfig {
            input_dim,
            layers: self.layers,
            hidden: self.hidden,
            beta: self.beta,
            mu: self.mu,
        }
    }
}

/// One experiment: a prior family swept over dimensions with a shared
/// training protocol.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub prior: PriorConfig,
    pub dims: Vec<usize>,
    /// Sample count per dimension: one entry per dim, or a single entry
    /// broadcast to all dims.
    pub n_samples: Vec<usize>,
    pub t: f64,
    pub a: f64,
    #[serde(default)]
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub eval_seed: u64,
    #[serde(default = "default_eval_points")]
    pub eval_points: usize,
    pub output_dir: String,
    /// Apply the general-t conjugate normalization in direct recovery.
    #[serde(default)]
    pub general_t: bool,
}

fn default_eval_points() -> usize {
    2000
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() {
            return Err(Error::Config("dims must be nonempty".into()));
        }
        if self.n_samples.is_empty()
            || (self.n_samples.len() != 1 && self.n_samples.len() != self.dims.len())
        {
            return Err(Error::Config(
                "n_samples must have one entry or one per dim".into(),
            ));
        }
        if !(self.t.is_finite() && self.t > 0.0) {
            return Err(Error::Config("t must be > 0".into()));
        }
        if !(self.a.is_finite() && self.a > 0.0) {
            return Err(Error::Config("a must be > 0".into()));
        }
        if self.eval_points == 0 {
            return Err(Error::Config("eval_points must be >= 1".into()));
        }
        self.train.validate()?;
        for &d in &self.dims {
            self.prior
                .build(d)
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn n_for(&self, dim_index: usize) -> usize {
        if self.n_samples.len() == 1 {
            self.n_samples[0]
        } else {
            self.n_samples[dim_index]
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::Config(format!(
                "config file {} not found",
                path.display()
            )));
        }
        let text = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("bad config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Configuration of the minorant scaling study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingConfig {
    pub prior: PriorConfig,
    pub t: f64,
    pub dims: Vec<usize>,
    pub k_list: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    #[serde(default = "default_scaling_a")]
    pub a: f64,
    #[serde(default = "default_eps_samples")]
    pub eps_samples: usize,
    #[serde(default)]
    pub alpha: Option<f64>,
}

fn default_scaling_a() -> f64 {
    4.0
}
fn default_eps_samples() -> usize {
    2048
}

impl ScalingConfig {
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::Config(format!(
                "config file {} not found",
                path.display()
            )));
        }
        let text = std::fs::read_to_string(path)?;
        let cfg: ScalingConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("bad config: {e}")))?;
        if !(cfg.t.is_finite() && cfg.t > 0.0) {
            return Err(Error::Config("t must be > 0".into()));
        }
        if cfg.dims.is_empty() {
            return Err(Error::Config("dims must be nonempty".into()));
        }
        Ok(cfg)
    }
}

/// Training metadata sidecar written next to each checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainMeta {
    pub role: String,
    pub prior: String,
    pub dim: usize,
    pub t: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub seed: u64,
    pub final_loss: f64,
    pub provenance: Option<String>,
}
