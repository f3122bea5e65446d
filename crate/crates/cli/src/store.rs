//! On-disk layout of datasets, agents, anchor supports and anchors.
//!
//! Every artifact is a directory holding SEQM matrices plus a TOML manifest.
//! The manifest is written last, so a directory without one is incomplete.

use std::fs;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use semeq_core::agents::{Agent, Dataset, Decoder, Encoder, EncoderKind, EncoderParams};
use semeq_core::anchors::{AnchorMethod, AnchorSupport};
use semeq_core::relative::{AbsoluteAnchors, AnchorProvenance};
use semeq_core::RealMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::format::{read_matrix, write_atomic, write_matrix};

pub const DATASET_MANIFEST: &str = "dataset.toml";
pub const AGENT_MANIFEST: &str = "agent.toml";
pub const SUPPORT_MANIFEST: &str = "support.toml";
pub const ANCHORS_MANIFEST: &str = "anchors.toml";

/// Seeds and content hashes are stored as decimal strings.
mod u64_text {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

fn write_manifest<T: Serialize>(path: &Path, manifest: &T) -> Result<()> {
    write_atomic(path, toml::to_string(manifest)?.as_bytes())
}

fn read_manifest<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("invalid manifest {}", path.display()))
}

fn row_vector(v: &[f64]) -> Result<RealMatrix> {
    Ok(RealMatrix::new(1, v.len(), v.to_vec())?)
}

fn read_row_vector(path: &Path) -> Result<Vec<f64>> {
    let m = read_matrix(path)?;
    ensure!(m.rows() == 1, "{} must hold a single row", path.display());
    Ok(m.into_vec())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub rows: usize,
    pub input_dim: usize,
    pub class_count: usize,
    #[serde(with = "u64_text")]
    pub seed: u64,
    /// `train`, `test` or `all`.
    pub split: String,
    pub separation: f64,
}

pub fn save_dataset(dir: &Path, data: &Dataset, split: &str, separation: f64) -> Result<()> {
    let labels = RealMatrix::new(data.len(), 1, data.labels.iter().map(|&l| l as f64).collect())?;
    write_matrix(&dir.join("samples.seqm"), &data.samples)?;
    write_matrix(&dir.join("labels.seqm"), &labels)?;
    write_manifest(
        &dir.join(DATASET_MANIFEST),
        &DatasetManifest {
            rows: data.len(),
            input_dim: data.input_dim(),
            class_count: data.class_count,
            seed: data.seed,
            split: split.to_string(),
            separation,
        },
    )
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let m: DatasetManifest = read_manifest(&dir.join(DATASET_MANIFEST))?;
    let samples = read_matrix(&dir.join("samples.seqm"))?;
    let labels = read_matrix(&dir.join("labels.seqm"))?;
    ensure!(
        samples.rows() == m.rows && samples.cols() == m.input_dim,
        "samples in {} do not match the manifest",
        dir.display()
    );
    ensure!(
        labels.rows() == m.rows && labels.cols() == 1,
        "labels must be a {}x1 matrix",
        m.rows
    );
    let labels = labels
        .as_slice()
        .iter()
        .map(|&v| {
            if v >= 0.0 && v.fract() == 0.0 && v < m.class_count as f64 {
                Ok(v as usize)
            } else {
                bail!("invalid label {v}")
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(samples, labels, m.class_count, m.seed).with_context(|| format!("invalid dataset {}", dir.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentManifest {
    pub id: String,
    pub kind: String,
    pub input_dim: usize,
    pub latent_dim: usize,
    pub class_count: usize,
    #[serde(with = "u64_text")]
    pub seed: u64,
    pub scale: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    #[serde(with = "u64_text")]
    pub encoder_fingerprint: u64,
}

pub fn save_agent(dir: &Path, agent: &Agent, epochs: usize, learning_rate: f64) -> Result<()> {
    let enc = &agent.encoder;
    match enc.params() {
        EncoderParams::Linear { weight, bias } => {
            write_matrix(&dir.join("encoder_weight.seqm"), weight)?;
            write_matrix(&dir.join("encoder_bias.seqm"), &row_vector(bias)?)?;
        }
        EncoderParams::Mlp {
            hidden_weight,
            hidden_bias,
            output_weight,
            output_bias,
        } => {
            write_matrix(&dir.join("encoder_hidden_weight.seqm"), hidden_weight)?;
            write_matrix(&dir.join("encoder_hidden_bias.seqm"), &row_vector(hidden_bias)?)?;
            write_matrix(&dir.join("encoder_output_weight.seqm"), output_weight)?;
            write_matrix(&dir.join("encoder_output_bias.seqm"), &row_vector(output_bias)?)?;
        }
    }
    write_matrix(&dir.join("decoder_weights.seqm"), agent.decoder.weights())?;
    write_matrix(&dir.join("decoder_bias.seqm"), &row_vector(agent.decoder.bias())?)?;
    write_manifest(
        &dir.join(AGENT_MANIFEST),
        &AgentManifest {
            id: agent.id.clone(),
            kind: enc.kind().to_string(),
            input_dim: enc.input_dim(),
            latent_dim: enc.latent_dim(),
            class_count: agent.decoder.class_count(),
            seed: enc.seed(),
            scale: enc.scale(),
            epochs,
            learning_rate,
            encoder_fingerprint: enc.fingerprint(),
        },
    )
}

pub fn load_agent(dir: &Path) -> Result<Agent> {
    let m: AgentManifest = read_manifest(&dir.join(AGENT_MANIFEST))?;
    let kind: EncoderKind = m.kind.parse()?;
    let params = match kind {
        EncoderKind::Orthogonal | EncoderKind::Affine => EncoderParams::Linear {
            weight: read_matrix(&dir.join("encoder_weight.seqm"))?,
            bias: read_row_vector(&dir.join("encoder_bias.seqm"))?,
        },
        EncoderKind::Mlp => EncoderParams::Mlp {
            hidden_weight: read_matrix(&dir.join("encoder_hidden_weight.seqm"))?,
            hidden_bias: read_row_vector(&dir.join("encoder_hidden_bias.seqm"))?,
            output_weight: read_matrix(&dir.join("encoder_output_weight.seqm"))?,
            output_bias: read_row_vector(&dir.join("encoder_output_bias.seqm"))?,
        },
    };
    let encoder = Encoder::from_parts(kind, params, m.scale, m.seed)?;
    ensure!(
        encoder.fingerprint() == m.encoder_fingerprint,
        "encoder weights in {} do not match the manifest fingerprint",
        dir.display()
    );
    let decoder = Decoder::new(
        read_matrix(&dir.join("decoder_weights.seqm"))?,
        read_row_vector(&dir.join("decoder_bias.seqm"))?,
    )?;
    ensure!(
        encoder.input_dim() == m.input_dim && decoder.class_count() == m.class_count,
        "agent {} does not match its manifest",
        dir.display()
    );
    Agent::new(m.id, encoder, decoder).with_context(|| format!("invalid agent {}", dir.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupportManifest {
    pub method: String,
    pub group_size: usize,
    pub source_encoder_id: String,
    #[serde(with = "u64_text")]
    pub seed: u64,
    #[serde(with = "u64_text")]
    pub fingerprint: u64,
    pub group_sizes: Vec<usize>,
    pub sample_indices: Vec<Vec<usize>>,
    pub warnings: Vec<String>,
}

/// Stores the support groups stacked in one matrix.
pub fn save_support(dir: &Path, support: &AnchorSupport) -> Result<()> {
    let dim = support.input_dim();
    let data: Vec<f64> = support
        .groups
        .iter()
        .flat_map(|g| g.as_slice().iter().copied())
        .collect();
    let stacked = RealMatrix::new(data.len() / dim, dim, data)?;
    write_matrix(&dir.join("support.seqm"), &stacked)?;
    write_manifest(
        &dir.join(SUPPORT_MANIFEST),
        &SupportManifest {
            method: support.method.to_string(),
            group_size: support.group_size,
            source_encoder_id: support.source_encoder_id.clone(),
            seed: support.seed,
            fingerprint: support.fingerprint(),
            group_sizes: support.groups.iter().map(|g| g.rows()).collect(),
            sample_indices: support.sample_indices.clone(),
            warnings: support.warnings.clone(),
        },
    )
}

pub fn load_support(dir: &Path) -> Result<AnchorSupport> {
    let m: SupportManifest = read_manifest(&dir.join(SUPPORT_MANIFEST))?;
    let stacked = read_matrix(&dir.join("support.seqm"))?;
    ensure!(
        m.group_sizes.iter().sum::<usize>() == stacked.rows(),
        "support.seqm row count does not match the group sizes"
    );
    let mut start = 0;
    let mut groups = Vec::with_capacity(m.group_sizes.len());
    for &size in &m.group_sizes {
        groups.push(stacked.select_rows(&(start..start + size).collect::<Vec<_>>()));
        start += size;
    }
    let method: AnchorMethod = m.method.parse()?;
    let mut support = AnchorSupport::new(groups, m.group_size, method, m.source_encoder_id, m.seed)?;
    support.sample_indices = m.sample_indices;
    support.warnings = m.warnings;
    ensure!(
        support.fingerprint() == m.fingerprint,
        "support samples in {} do not match the manifest fingerprint",
        dir.display()
    );
    Ok(support)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorsManifest {
    pub agent_id: String,
    pub anchor_count: usize,
    pub latent_dim: usize,
    pub method: String,
    #[serde(with = "u64_text")]
    pub support_seed: u64,
    #[serde(with = "u64_text")]
    pub support_fingerprint: u64,
    #[serde(with = "u64_text")]
    pub encoder_fingerprint: u64,
}

pub struct StoredAnchors {
    pub anchors: AbsoluteAnchors,
    pub manifest: AnchorsManifest,
}

pub fn save_anchors(dir: &Path, agent_id: &str, anchors: &AbsoluteAnchors, support: &AnchorSupport) -> Result<()> {
    let provenance = anchors.provenance().context("anchors carry no provenance")?;
    write_matrix(&dir.join("anchors.seqm"), anchors.matrix())?;
    write_manifest(
        &dir.join(ANCHORS_MANIFEST),
        &AnchorsManifest {
            agent_id: agent_id.to_string(),
            anchor_count: anchors.len(),
            latent_dim: anchors.latent_dim(),
            method: support.method.to_string(),
            support_seed: support.seed,
            support_fingerprint: provenance.support_fingerprint,
            encoder_fingerprint: provenance.encoder_fingerprint,
        },
    )
}

pub fn load_anchors(dir: &Path) -> Result<StoredAnchors> {
    let manifest: AnchorsManifest = read_manifest(&dir.join(ANCHORS_MANIFEST))?;
    let matrix = read_matrix(&dir.join("anchors.seqm"))?;
    ensure!(
        matrix.rows() == manifest.anchor_count && matrix.cols() == manifest.latent_dim,
        "anchors.seqm in {} does not match the manifest",
        dir.display()
    );
    let anchors = AbsoluteAnchors::new(matrix)?.with_provenance(AnchorProvenance {
        support_fingerprint: manifest.support_fingerprint,
        encoder_fingerprint: manifest.encoder_fingerprint,
    });
    Ok(StoredAnchors { anchors, manifest })
}
