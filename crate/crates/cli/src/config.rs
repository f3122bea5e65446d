//! TOML run configuration for a complete experiment: data, two agents and a
//! sweep grid.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use semeq_core::agents::{AgentSpec, EncoderKind};
use semeq_core::anchors::{AnchorMethod, DEFAULT_SUPPORT_SIZE};
use semeq_core::eval::{InverseMethod, SweepGrid};
use semeq_core::inverse::InverseConfig;
use semeq_core::relative::Similarity;
use serde::Deserialize;

use crate::seeds;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub dataset: DatasetConfig,
    pub transmitter: AgentConfig,
    pub receiver: AgentConfig,
    pub anchors: AnchorConfig,
    #[serde(default)]
    pub equalizer: EqualizerConfig,
    #[serde(default)]
    pub sweep: ReplicateConfig,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub classes: usize,
    pub dim: usize,
    pub per_class: usize,
    pub test_per_class: usize,
    pub separation: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub id: String,
    pub kind: String,
    pub latent_dim: Option<usize>,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_agent_lr")]
    pub learning_rate: f64,
    /// Explicit encoder seed. Derived from the run seed and the id when absent.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorConfig {
    pub methods: Vec<String>,
    pub counts: Vec<usize>,
    #[serde(default = "default_support_size")]
    pub support_size: usize,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EqualizerConfig {
    #[serde(default = "default_similarities")]
    pub similarities: Vec<String>,
    #[serde(default = "default_inverse_methods")]
    pub inverse_methods: Vec<String>,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_inverse_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_early_stop")]
    pub early_stop_loss: f64,
}

impl Default for EqualizerConfig {
    fn default() -> Self {
        Self {
            similarities: default_similarities(),
            inverse_methods: default_inverse_methods(),
            max_iterations: default_max_iterations(),
            learning_rate: default_inverse_lr(),
            early_stop_loss: default_early_stop(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplicateConfig {
    /// Explicit cell seeds. Overrides `repeats`.
    pub seeds: Option<Vec<u64>>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
}

impl Default for ReplicateConfig {
    fn default() -> Self {
        Self {
            seeds: None,
            repeats: default_repeats(),
        }
    }
}

fn one() -> f64 {
    1.0
}
fn default_epochs() -> usize {
    300
}
fn default_agent_lr() -> f64 {
    0.05
}
fn default_support_size() -> usize {
    DEFAULT_SUPPORT_SIZE
}
fn default_similarities() -> Vec<String> {
    vec!["euclidean".into()]
}
fn default_inverse_methods() -> Vec<String> {
    vec!["gradient".into()]
}
fn default_max_iterations() -> usize {
    InverseConfig::default().max_iterations
}
fn default_inverse_lr() -> f64 {
    InverseConfig::default().adam.learning_rate
}
fn default_early_stop() -> f64 {
    InverseConfig::default().early_stop_loss
}
fn default_repeats() -> usize {
    1
}

/// A validated configuration with every name resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct RunPlan {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub dataset: DatasetConfig,
    pub transmitter: AgentSpec,
    pub receiver: AgentSpec,
    pub grid: SweepGrid,
}

pub fn parse_list<T: std::str::FromStr>(values: &[String], what: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    values
        .iter()
        .map(|v| v.parse::<T>().map_err(|e| anyhow::anyhow!("invalid {what} `{v}`: {e}")))
        .collect()
}

pub fn inverse_config(max_iterations: usize, learning_rate: f64, early_stop_loss: f64) -> Result<InverseConfig> {
    let defaults = InverseConfig::default();
    let config = InverseConfig {
        max_iterations,
        adam: defaults.adam.with_learning_rate(learning_rate),
        early_stop_loss,
        ..defaults
    };
    config.validate()?;
    Ok(config)
}

pub fn replicate_seeds(run_seed: u64, explicit: Option<&[u64]>, repeats: usize) -> Result<Vec<u64>> {
    match explicit {
        Some(s) => {
            ensure!(!s.is_empty(), "the seed list is empty");
            Ok(s.to_vec())
        }
        None => {
            ensure!(repeats > 0, "repeats must be at least 1");
            Ok((0..repeats as u64).map(|r| seeds::replicate(run_seed, r)).collect())
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid run configuration {}", path.display()))
    }

    fn agent_spec(&self, agent: &AgentConfig) -> Result<AgentSpec> {
        ensure!(!agent.id.is_empty(), "agent ids must be non-empty");
        let kind: EncoderKind = agent.kind.parse()?;
        let latent_dim = agent.latent_dim.unwrap_or(self.dataset.dim);
        ensure!(latent_dim > 0, "agent `{}` needs a positive latent dimension", agent.id);
        if kind == EncoderKind::Orthogonal && latent_dim != self.dataset.dim {
            bail!("orthogonal agent `{}` needs latent_dim = dataset dim", agent.id);
        }
        ensure!(
            agent.scale > 0.0 && agent.scale.is_finite(),
            "agent `{}` needs a positive scale",
            agent.id
        );
        ensure!(agent.epochs > 0, "agent `{}` needs at least one epoch", agent.id);
        ensure!(
            agent.learning_rate > 0.0 && agent.learning_rate.is_finite(),
            "agent `{}` needs a positive learning rate",
            agent.id
        );
        let seed = agent.seed.unwrap_or_else(|| seeds::agent(self.seed, &agent.id));
        Ok(AgentSpec {
            scale: agent.scale,
            epochs: agent.epochs,
            learning_rate: agent.learning_rate,
            ..AgentSpec::new(agent.id.clone(), kind, latent_dim, seed)
        })
    }

    /// Checks every setting before any work starts.
    pub fn resolve(&self, output_override: Option<&Path>) -> Result<RunPlan> {
        let d = &self.dataset;
        ensure!(d.classes >= 2, "dataset needs at least 2 classes");
        ensure!(d.dim > 0, "dataset dimension must be positive");
        ensure!(
            d.per_class > 0 && d.test_per_class > 0,
            "per_class and test_per_class must be positive"
        );
        ensure!(
            d.separation >= 0.0 && d.separation.is_finite(),
            "separation must be finite and non-negative"
        );
        let transmitter = self.agent_spec(&self.transmitter)?;
        let receiver = self.agent_spec(&self.receiver)?;
        ensure!(
            transmitter.id != receiver.id,
            "transmitter and receiver ids must differ"
        );

        let a = &self.anchors;
        let pool = d.classes * d.per_class;
        if let Some(&c) = a.counts.iter().find(|&&c| c > pool) {
            bail!("anchor count {c} exceeds the {pool} training samples");
        }
        let e = &self.equalizer;
        let grid = SweepGrid {
            counts: a.counts.clone(),
            anchor_methods: parse_list::<AnchorMethod>(&a.methods, "anchor method")?,
            similarities: parse_list::<Similarity>(&e.similarities, "similarity")?,
            inverse_methods: parse_list::<InverseMethod>(&e.inverse_methods, "inverse method")?,
            seeds: replicate_seeds(self.seed, self.sweep.seeds.as_deref(), self.sweep.repeats)?,
            support_size: a.support_size,
            inverse: inverse_config(e.max_iterations, e.learning_rate, e.early_stop_loss)?,
        };
        grid.validate()?;
        let output_dir = output_override
            .map(Path::to_path_buf)
            .or_else(|| self.output_dir.clone())
            .context("no output directory: set output_dir or pass --out")?;
        Ok(RunPlan {
            seed: self.seed,
            output_dir,
            dataset: d.clone(),
            transmitter,
            receiver,
            grid,
        })
    }
}
