//! The equalizer `T = R_rx⁻¹ ∘ R_tx` and its evaluation.
//!
//! Quality is measured two ways per test sample: the squared distance between
//! the equalized latent and the receiver's own latent (`g_se`, smaller is
//! better) and whether the receiver's decoder makes the same decision on both
//! (`g_go`).

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::agents::{accuracy, Agent, Dataset, Decoder};
use crate::anchors::{encode_support, prototypical_support, select_random_support, AnchorMethod};
use crate::error::{invalid, Error, Result};
use crate::inverse::{closed_form_cosine_inverse, gradient_inverse, InverseConfig};
use crate::numerics::{squared_distance, RealMatrix};
use crate::relative::{project, AbsoluteAnchors, Similarity};
use crate::seed::{derive_seed, rng_from_seed, Fnv1a};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum InverseMethod {
    Gradient,
    ClosedFormCosine,
}

impl InverseMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            InverseMethod::Gradient => "gradient",
            InverseMethod::ClosedFormCosine => "closed_form",
        }
    }
}

impl fmt::Display for InverseMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InverseMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gradient" => Ok(InverseMethod::Gradient),
            "closed_form" | "closed-form" | "closed" => Ok(InverseMethod::ClosedFormCosine),
            other => Err(invalid(format!("unknown inverse method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equalizer {
    transmitter_anchors: AbsoluteAnchors,
    receiver_anchors: AbsoluteAnchors,
    similarity: Similarity,
    inverse_method: InverseMethod,
    inverse_config: InverseConfig,
}

impl Equalizer {
    /// Both anchor sets must come from the same support: same anchor count and,
    /// when both carry provenance, the same support fingerprint.
    pub fn new(
        transmitter_anchors: AbsoluteAnchors,
        receiver_anchors: AbsoluteAnchors,
        similarity: Similarity,
        inverse_method: InverseMethod,
        inverse_config: InverseConfig,
    ) -> Result<Self> {
        if transmitter_anchors.len() != receiver_anchors.len() {
            return Err(Error::InvalidConfiguration(format!(
                "transmitter has {} anchors, receiver {}",
                transmitter_anchors.len(),
                receiver_anchors.len()
            )));
        }
        if let (Some(t), Some(r)) = (transmitter_anchors.provenance(), receiver_anchors.provenance()) {
            if t.support_fingerprint != r.support_fingerprint {
                return Err(Error::InvalidConfiguration(
                    "anchor sets were encoded from different supports".into(),
                ));
            }
        }
        if inverse_method == InverseMethod::ClosedFormCosine && similarity != Similarity::Cosine {
            return Err(Error::InvalidConfiguration(
                "the closed-form inverse requires cosine similarity".into(),
            ));
        }
        inverse_config.validate()?;
        Ok(Self {
            transmitter_anchors,
            receiver_anchors,
            similarity,
            inverse_method,
            inverse_config,
        })
    }

    pub fn transmitter_anchors(&self) -> &AbsoluteAnchors {
        &self.transmitter_anchors
    }

    pub fn receiver_anchors(&self) -> &AbsoluteAnchors {
        &self.receiver_anchors
    }

    pub fn similarity(&self) -> Similarity {
        self.similarity
    }

    pub fn inverse_method(&self) -> InverseMethod {
        self.inverse_method
    }

    pub fn inverse_config(&self) -> &InverseConfig {
        &self.inverse_config
    }

    fn equalize_with_seed(&self, z_theta: &[f64], init_seed: u64) -> Result<Vec<f64>> {
        let relative = project(z_theta, &self.transmitter_anchors, self.similarity)?;
        match self.inverse_method {
            InverseMethod::Gradient => {
                let config = InverseConfig {
                    init_seed,
                    ..self.inverse_config
                };
                Ok(gradient_inverse(&relative, &self.receiver_anchors, &config)?.z_hat)
            }
            InverseMethod::ClosedFormCosine => closed_form_cosine_inverse(&relative, &self.receiver_anchors),
        }
    }
}

/// Projects a transmitter latent onto the transmitter anchors and inverts the
/// result on the receiver anchors.
pub fn equalize(z_theta: &[f64], eq: &Equalizer) -> Result<Vec<f64>> {
    eq.equalize_with_seed(z_theta, eq.inverse_config.init_seed)
}

/// Row-wise [`equalize`]; row `i` uses the inverse seed `init_seed + i`.
pub fn equalize_batch(z_theta: &RealMatrix, eq: &Equalizer) -> Result<RealMatrix> {
    let rows: Vec<Vec<f64>> = (0..z_theta.rows())
        .into_par_iter()
        .map(|i| eq.equalize_with_seed(z_theta.row(i), eq.inverse_config.init_seed.wrapping_add(i as u64)))
        .collect::<Result<_>>()?;
    if rows.is_empty() {
        return Ok(RealMatrix::zeros(0, eq.receiver_anchors.latent_dim()));
    }
    RealMatrix::from_rows(&rows)
}

/// `‖z_hat − z_target‖²`.
pub fn g_se(z_hat: &[f64], z_target: &[f64]) -> Result<f64> {
    if z_hat.len() != z_target.len() {
        return Err(invalid("g_se of vectors with different lengths"));
    }
    Ok(squared_distance(z_hat, z_target))
}

/// 1 when `decoder` makes the same decision on both latents, else 0.
pub fn g_go(decoder: &Decoder, z_hat: &[f64], z_target: &[f64]) -> Result<u8> {
    Ok(u8::from(decoder.decode(z_hat)? == decoder.decode(z_target)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleRecord {
    pub g_se: f64,
    pub g_go: u8,
    pub label: usize,
    pub predicted: usize,
}

impl SampleRecord {
    pub fn correct(&self) -> bool {
        self.label == self.predicted
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub matched_accuracy: f64,
    /// `None` when the two latent spaces have different dimensions.
    pub cross_accuracy_unequalized: Option<f64>,
    pub cross_accuracy_equalized: f64,
    /// Mean `g_go`.
    pub decoder_agreement: f64,
    /// Mean `g_se`.
    pub mean_reconstruction_error: f64,
    pub anchor_count: usize,
    pub per_sample_records: Vec<SampleRecord>,
}

/// Runs `x → E_tx → R_tx → R_rx⁻¹ → D_rx` on every test sample.
pub fn evaluate_pair(tx: &Agent, rx: &Agent, eq: &Equalizer, test_data: &Dataset) -> Result<EvaluationReport> {
    for (anchors, agent, side) in [
        (&eq.transmitter_anchors, tx, "transmitter"),
        (&eq.receiver_anchors, rx, "receiver"),
    ] {
        if anchors.latent_dim() != agent.encoder.latent_dim() {
            return Err(Error::InvalidConfiguration(format!(
                "{side} anchors do not live in agent `{}`'s latent space",
                agent.id
            )));
        }
        if let Some(p) = anchors.provenance() {
            if p.encoder_fingerprint != agent.encoder.fingerprint() {
                return Err(Error::InvalidConfiguration(format!(
                    "{side} anchors were not encoded by agent `{}`",
                    agent.id
                )));
            }
        }
    }
    if test_data.is_empty() {
        return Err(invalid("empty test set"));
    }

    let z_tx = tx.encoder.encode_batch(&test_data.samples)?;
    let z_rx = rx.encoder.encode_batch(&test_data.samples)?;
    let z_hat = equalize_batch(&z_tx, eq)?;

    let matched_accuracy = accuracy(&rx.decoder, &z_rx, &test_data.labels)?;
    let cross_accuracy_unequalized = if z_tx.cols() == z_rx.cols() {
        Some(accuracy(&rx.decoder, &z_tx, &test_data.labels)?)
    } else {
        None
    };

    let mut records = Vec::with_capacity(test_data.len());
    for i in 0..test_data.len() {
        let predicted = rx.decoder.decode(z_hat.row(i))?;
        let target = rx.decoder.decode(z_rx.row(i))?;
        records.push(SampleRecord {
            g_se: g_se(z_hat.row(i), z_rx.row(i))?,
            g_go: u8::from(predicted == target),
            label: test_data.labels[i],
            predicted,
        });
    }
    let n = records.len() as f64;
    Ok(EvaluationReport {
        matched_accuracy,
        cross_accuracy_unequalized,
        cross_accuracy_equalized: records.iter().filter(|r| r.correct()).count() as f64 / n,
        decoder_agreement: records.iter().map(|r| f64::from(r.g_go)).sum::<f64>() / n,
        mean_reconstruction_error: records.iter().map(|r| r.g_se).sum::<f64>() / n,
        anchor_count: eq.transmitter_anchors.len(),
        per_sample_records: records,
    })
}

/// One setting of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SweepCell {
    pub similarity: Similarity,
    pub inverse_method: InverseMethod,
    pub anchor_method: AnchorMethod,
    pub anchor_count: usize,
    pub seed: u64,
}

impl SweepCell {
    /// Seed of every stochastic step inside the cell: the run seed combined
    /// with a hash of the cell's settings.
    pub fn cell_seed(&self) -> u64 {
        let mut h = Fnv1a::default();
        h.write(self.similarity.as_str().as_bytes());
        h.write(&[0]);
        h.write(self.inverse_method.as_str().as_bytes());
        h.write(&[0]);
        h.write(self.anchor_method.as_str().as_bytes());
        h.write_u64(self.anchor_count as u64);
        derive_seed(self.seed, "sweep-cell", h.finish())
    }
}

/// Cartesian grid of sweep settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub counts: Vec<usize>,
    pub anchor_methods: Vec<AnchorMethod>,
    pub similarities: Vec<Similarity>,
    pub inverse_methods: Vec<InverseMethod>,
    pub seeds: Vec<u64>,
    /// Samples per prototypical group.
    pub support_size: usize,
    pub inverse: InverseConfig,
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        if self.counts.is_empty()
            || self.anchor_methods.is_empty()
            || self.similarities.is_empty()
            || self.inverse_methods.is_empty()
            || self.seeds.is_empty()
        {
            return Err(invalid("every sweep axis needs at least one value"));
        }
        if self.counts.contains(&0) {
            return Err(invalid("anchor counts must be positive"));
        }
        if self.support_size == 0 {
            return Err(invalid("support size must be at least 1"));
        }
        if self.cells().is_empty() {
            return Err(invalid("the sweep grid has no valid cell"));
        }
        self.inverse.validate()
    }

    /// All valid cells in ascending tuple order. The closed-form inverse is
    /// only paired with cosine similarity.
    pub fn cells(&self) -> Vec<SweepCell> {
        let mut cells = Vec::new();
        for &similarity in &self.similarities {
            for &inverse_method in &self.inverse_methods {
                if inverse_method == InverseMethod::ClosedFormCosine && similarity != Similarity::Cosine {
                    continue;
                }
                for &anchor_method in &self.anchor_methods {
                    for &anchor_count in &self.counts {
                        for &seed in &self.seeds {
                            cells.push(SweepCell {
                                similarity,
                                inverse_method,
                                anchor_method,
                                anchor_count,
                                seed,
                            });
                        }
                    }
                }
            }
        }
        cells.sort_unstable();
        cells.dedup();
        cells
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub cell: SweepCell,
    pub report: EvaluationReport,
}

/// Builds the support for `cell` from `anchor_pool`, encodes it on both sides
/// and evaluates the pair on `test_data`.
pub fn run_cell(
    tx: &Agent,
    rx: &Agent,
    anchor_pool: &Dataset,
    test_data: &Dataset,
    cell: &SweepCell,
    support_size: usize,
    inverse: &InverseConfig,
) -> Result<EvaluationReport> {
    let seed = cell.cell_seed();
    let support_seed = derive_seed(seed, "support", 0);
    let support = match cell.anchor_method {
        AnchorMethod::Random => select_random_support(anchor_pool, cell.anchor_count, support_seed)?,
        AnchorMethod::Prototypical => prototypical_support(
            &tx.encoder,
            &tx.id,
            anchor_pool,
            cell.anchor_count,
            support_size,
            support_seed,
        )?,
    };
    let eq = Equalizer::new(
        encode_support(&tx.encoder, &support)?,
        encode_support(&rx.encoder, &support)?,
        cell.similarity,
        cell.inverse_method,
        InverseConfig {
            init_seed: derive_seed(seed, "inverse", 0),
            ..*inverse
        },
    )?;
    evaluate_pair(tx, rx, &eq, test_data)
}

/// Evaluates every cell of `grid`. Rows come back in cell order whatever the
/// thread count.
pub fn sweep_anchor_counts(
    tx: &Agent,
    rx: &Agent,
    anchor_pool: &Dataset,
    test_data: &Dataset,
    grid: &SweepGrid,
) -> Result<Vec<SweepRow>> {
    grid.validate()?;
    let cells = grid.cells();
    let d = rx.encoder.latent_dim();
    if let Some(c) = cells
        .iter()
        .find(|c| c.inverse_method == InverseMethod::ClosedFormCosine && c.anchor_count < d)
    {
        return Err(Error::InvalidConfiguration(format!(
            "the closed-form inverse needs at least {d} anchors, the grid has {}",
            c.anchor_count
        )));
    }
    cells
        .into_par_iter()
        .map(|cell| {
            run_cell(tx, rx, anchor_pool, test_data, &cell, grid.support_size, &grid.inverse)
                .map(|report| SweepRow { cell, report })
        })
        .collect()
}

/// Decoder behaviour under isotropic Gaussian latent noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseProbe {
    /// Expected squared norm of the added noise.
    pub noise_power: f64,
    /// Fraction of perturbed latents decoded like their clean versions.
    pub agreement: f64,
    /// Accuracy of the decoder on the perturbed latents.
    pub accuracy: f64,
}

pub fn noise_probe(
    decoder: &Decoder,
    latents: &RealMatrix,
    labels: &[usize],
    noise_power: f64,
    seed: u64,
) -> Result<NoiseProbe> {
    if latents.rows() != labels.len() || labels.is_empty() {
        return Err(invalid("noise probe needs one label per latent"));
    }
    if noise_power.is_nan() || noise_power < 0.0 {
        return Err(invalid("noise power must be non-negative"));
    }
    let std = (noise_power / latents.cols() as f64).sqrt();
    let mut rng = rng_from_seed(seed);
    let (mut agree, mut correct) = (0usize, 0usize);
    let mut noisy = vec![0.0; latents.cols()];
    for (z, &label) in latents.row_iter().zip(labels) {
        for (n, v) in noisy.iter_mut().zip(z) {
            *n = v + std * rng.sample::<f64, _>(StandardNormal);
        }
        let p = decoder.decode(&noisy)?;
        agree += usize::from(p == decoder.decode(z)?);
        correct += usize::from(p == label);
    }
    let n = labels.len() as f64;
    Ok(NoiseProbe {
        noise_power,
        agreement: agree as f64 / n,
        accuracy: correct as f64 / n,
    })
}

/// Largest noise power, to within a factor of `2^(1/8)`, at which perturbed
/// decisions still agree with clean ones on at least `min_agreement` of the
/// latents.
pub fn noise_tolerance(
    decoder: &Decoder,
    latents: &RealMatrix,
    labels: &[usize],
    min_agreement: f64,
    seed: u64,
) -> Result<f64> {
    let ok =
        |p: f64| -> Result<bool> { Ok(noise_probe(decoder, latents, labels, p, seed)?.agreement >= min_agreement) };
    let mean_power = latents
        .row_iter()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        / latents.rows() as f64;
    let (mut lo, mut hi) = (mean_power.max(1e-12) * 1e-8, mean_power.max(1e-12) * 1e2);
    if !ok(lo)? {
        return Ok(0.0);
    }
    if ok(hi)? {
        return Ok(hi);
    }
    while hi / lo > 2f64.powf(0.125) {
        let mid = (lo * hi).sqrt();
        if ok(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties. `None` when either
/// side is constant.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let (rx, ry) = (average_ranks(xs), average_ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        None
    } else {
        Some(sxy / (sxx * syy).sqrt())
    }
}
