//! Synthetic data and encoder/decoder agents.
//!
//! Each agent pairs a seeded encoder with a linear softmax decoder trained on
//! that encoder's latents only, so two agents built from different seeds speak
//! mutually unintelligible latent languages.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::numerics::{norm, AdamParams, AdamState, RealMatrix};
use crate::seed::{derive_seed, rng_from_seed, Fnv1a};

/// Encoders whose weight matrix has a larger condition number are redrawn.
pub const AFFINE_CONDITION_LIMIT: f64 = 1e6;
const AFFINE_MAX_DRAWS: usize = 64;

/// Labelled samples drawn from a Gaussian mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: RealMatrix,
    pub labels: Vec<usize>,
    pub class_count: usize,
    pub seed: u64,
}

impl Dataset {
    pub fn new(samples: RealMatrix, labels: Vec<usize>, class_count: usize, seed: u64) -> Result<Self> {
        if samples.rows() != labels.len() {
            return Err(invalid(format!(
                "{} samples but {} labels",
                samples.rows(),
                labels.len()
            )));
        }
        if class_count == 0 {
            return Err(invalid("class count must be at least 1"));
        }
        let mut seen = vec![false; class_count];
        for &l in &labels {
            if l >= class_count {
                return Err(invalid(format!("label {l} outside [0, {class_count})")));
            }
            seen[l] = true;
        }
        if let Some(c) = seen.iter().position(|s| !s) {
            return Err(invalid(format!("class {c} has no samples")));
        }
        Ok(Self {
            samples,
            labels,
            class_count,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.samples.cols()
    }

    /// Moves the last `test_per_class` samples of every class into a second
    /// dataset. Both halves keep the original sample order.
    pub fn split_per_class(&self, test_per_class: usize) -> Result<(Dataset, Dataset)> {
        let mut counts = vec![0usize; self.class_count];
        for &l in &self.labels {
            counts[l] += 1;
        }
        if let Some(c) = counts.iter().position(|&n| n <= test_per_class) {
            return Err(invalid(format!(
                "class {c} has {} samples, cannot hold out {test_per_class}",
                counts[c]
            )));
        }
        let mut seen = vec![0usize; self.class_count];
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for (i, &l) in self.labels.iter().enumerate() {
            seen[l] += 1;
            if seen[l] > counts[l] - test_per_class {
                test.push(i);
            } else {
                train.push(i);
            }
        }
        Ok((self.subset(&train)?, self.subset(&test)?))
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        Dataset::new(
            self.samples.select_rows(indices),
            indices.iter().map(|&i| self.labels[i]).collect(),
            self.class_count,
            self.seed,
        )
    }
}

/// Balanced Gaussian mixture: class means uniform on the sphere of radius
/// `separation`, unit covariance around each mean.
pub fn gen_gaussian_mixture(
    class_count: usize,
    input_dim: usize,
    per_class: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if class_count == 0 || input_dim == 0 || per_class == 0 {
        return Err(invalid("class count, input dim and per-class count must be positive"));
    }
    if !(separation > 0.0 && separation.is_finite()) {
        return Err(invalid("separation must be positive"));
    }
    let mut mean_rng = rng_from_seed(derive_seed(seed, "mixture-means", 0));
    let means: Vec<Vec<f64>> = (0..class_count)
        .map(|_| loop {
            let g: Vec<f64> = (0..input_dim).map(|_| mean_rng.sample(StandardNormal)).collect();
            let n = norm(&g);
            if n > 1e-12 {
                break g.iter().map(|v| v * separation / n).collect();
            }
        })
        .collect();

    let mut sample_rng = rng_from_seed(derive_seed(seed, "mixture-samples", 0));
    let mut data = Vec::with_capacity(class_count * per_class * input_dim);
    let mut labels = Vec::with_capacity(class_count * per_class);
    for (class, mean) in means.iter().enumerate() {
        for _ in 0..per_class {
            for m in mean {
                let noise: f64 = sample_rng.sample(StandardNormal);
                data.push(m + noise);
            }
            labels.push(class);
        }
    }
    let samples = RealMatrix::new(class_count * per_class, input_dim, data)?;
    Dataset::new(samples, labels, class_count, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EncoderKind {
    Orthogonal,
    Affine,
    Mlp,
}

impl EncoderKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EncoderKind::Orthogonal => "orthogonal",
            EncoderKind::Affine => "affine",
            EncoderKind::Mlp => "mlp",
        }
    }
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "orthogonal" => Ok(EncoderKind::Orthogonal),
            "affine" => Ok(EncoderKind::Affine),
            "mlp" => Ok(EncoderKind::Mlp),
            other => Err(invalid(format!("unknown encoder kind `{other}`"))),
        }
    }
}

/// Encoder weights. Orthogonal and affine encoders share the linear form.
#[derive(Debug, Clone, PartialEq)]
pub enum EncoderParams {
    Linear {
        weight: RealMatrix,
        bias: Vec<f64>,
    },
    Mlp {
        hidden_weight: RealMatrix,
        hidden_bias: Vec<f64>,
        output_weight: RealMatrix,
        output_bias: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    kind: EncoderKind,
    input_dim: usize,
    latent_dim: usize,
    params: EncoderParams,
    /// Positive factor applied to every output.
    scale: f64,
    seed: u64,
}

impl Encoder {
    /// Assembles an encoder from explicit weights, checking shapes and the
    /// orthogonality of orthogonal encoders.
    pub fn from_parts(kind: EncoderKind, params: EncoderParams, scale: f64, seed: u64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(invalid("encoder scale must be positive"));
        }
        let (input_dim, latent_dim) = match (&params, kind) {
            (EncoderParams::Linear { weight, bias }, EncoderKind::Orthogonal | EncoderKind::Affine) => {
                if bias.len() != weight.rows() {
                    return Err(invalid("bias length must equal the weight row count"));
                }
                if kind == EncoderKind::Orthogonal {
                    if weight.rows() != weight.cols() {
                        return Err(invalid("orthogonal encoder needs input_dim = latent_dim"));
                    }
                    let gram = weight.transpose().matmul(weight)?;
                    let dev = gram.max_abs_diff(&RealMatrix::identity(weight.cols()));
                    if dev >= 1e-10 {
                        return Err(invalid(format!("weight is not orthogonal (deviation {dev:e})")));
                    }
                }
                (weight.cols(), weight.rows())
            }
            (
                EncoderParams::Mlp {
                    hidden_weight,
                    hidden_bias,
                    output_weight,
                    output_bias,
                },
                EncoderKind::Mlp,
            ) => {
                if hidden_bias.len() != hidden_weight.rows()
                    || output_weight.cols() != hidden_weight.rows()
                    || output_bias.len() != output_weight.rows()
                {
                    return Err(invalid("inconsistent mlp layer shapes"));
                }
                (hidden_weight.cols(), output_weight.rows())
            }
            _ => return Err(invalid(format!("parameters do not match encoder kind {kind}"))),
        };
        if input_dim == 0 || latent_dim == 0 {
            return Err(invalid("encoder dimensions must be positive"));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        let ok = match &params {
            EncoderParams::Linear { bias, .. } => finite(bias),
            EncoderParams::Mlp {
                hidden_bias,
                output_bias,
                ..
            } => finite(hidden_bias) && finite(output_bias),
        };
        if !ok {
            return Err(Error::Numeric("non-finite encoder bias".into()));
        }
        Ok(Self {
            kind,
            input_dim,
            latent_dim,
            params,
            scale,
            seed,
        })
    }

    pub fn with_scale(mut self, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(invalid("encoder scale must be positive"));
        }
        self.scale = scale;
        Ok(self)
    }

    pub fn kind(&self) -> EncoderKind {
        self.kind
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn params(&self) -> &EncoderParams {
        &self.params
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(invalid(format!(
                "input has dimension {}, encoder expects {}",
                x.len(),
                self.input_dim
            )));
        }
        let mut out = match &self.params {
            EncoderParams::Linear { weight, bias } => {
                let mut z = weight.mul_vec(x)?;
                z.iter_mut().zip(bias).for_each(|(v, b)| *v += b);
                z
            }
            EncoderParams::Mlp {
                hidden_weight,
                hidden_bias,
                output_weight,
                output_bias,
            } => {
                let mut h = hidden_weight.mul_vec(x)?;
                h.iter_mut().zip(hidden_bias).for_each(|(v, b)| *v = (*v + b).tanh());
                let mut z = output_weight.mul_vec(&h)?;
                z.iter_mut().zip(output_bias).for_each(|(v, b)| *v += b);
                z
            }
        };
        if self.scale != 1.0 {
            out.iter_mut().for_each(|v| *v *= self.scale);
        }
        Ok(out)
    }

    /// Encodes every row of `x`.
    pub fn encode_batch(&self, x: &RealMatrix) -> Result<RealMatrix> {
        let mut data = Vec::with_capacity(x.rows() * self.latent_dim);
        for row in x.row_iter() {
            data.extend(self.encode(row)?);
        }
        RealMatrix::new(x.rows(), self.latent_dim, data)
    }

    /// Content hash of kind, scale and weights.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv1a::default();
        h.write(self.kind.as_str().as_bytes());
        h.write_u64(self.input_dim as u64);
        h.write_u64(self.latent_dim as u64);
        h.write_f64s(&[self.scale]);
        match &self.params {
            EncoderParams::Linear { weight, bias } => {
                h.write_f64s(weight.as_slice());
                h.write_f64s(bias);
            }
            EncoderParams::Mlp {
                hidden_weight,
                hidden_bias,
                output_weight,
                output_bias,
            } => {
                h.write_f64s(hidden_weight.as_slice());
                h.write_f64s(hidden_bias);
                h.write_f64s(output_weight.as_slice());
                h.write_f64s(output_bias);
            }
        }
        h.finish()
    }
}

fn gaussian_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, std: f64) -> RealMatrix {
    let data = (0..rows * cols)
        .map(|_| std * rng.sample::<f64, _>(StandardNormal))
        .collect();
    RealMatrix::new(rows, cols, data).expect("gaussian draws are finite")
}

fn gaussian_vec<R: Rng>(rng: &mut R, len: usize, std: f64) -> Vec<f64> {
    (0..len).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Orthonormalizes a seeded Gaussian `n x n` matrix (Haar-distributed Q).
pub fn random_orthogonal(n: usize, seed: u64) -> Result<RealMatrix> {
    let mut rng = rng_from_seed(seed);
    let g = gaussian_matrix(&mut rng, n, n, 1.0).to_nalgebra();
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for c in 0..n {
        if r[(c, c)] < 0.0 {
            for row in 0..n {
                q[(row, c)] = -q[(row, c)];
            }
        }
    }
    RealMatrix::from_nalgebra(&q)
}

fn condition_number(m: &RealMatrix) -> f64 {
    let sv = m.to_nalgebra().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Draws a seeded encoder of the requested kind.
///
/// * orthogonal: `z = Q x` with `Q` orthonormalized from a Gaussian matrix;
/// * affine: `z = W x + b`, `W` Gaussian with variance `1/input_dim`, redrawn
///   until its condition number is at most [`AFFINE_CONDITION_LIMIT`];
/// * mlp: `z = W₂ tanh(W₁ x + b₁) + b₂` with hidden width `2·latent_dim`.
pub fn make_encoder(kind: EncoderKind, input_dim: usize, latent_dim: usize, seed: u64) -> Result<Encoder> {
    if input_dim == 0 || latent_dim == 0 {
        return Err(invalid("encoder dimensions must be positive"));
    }
    let params = match kind {
        EncoderKind::Orthogonal => {
            if input_dim != latent_dim {
                return Err(invalid(format!(
                    "orthogonal encoder needs input_dim = latent_dim, got {input_dim} and {latent_dim}"
                )));
            }
            EncoderParams::Linear {
                weight: random_orthogonal(input_dim, derive_seed(seed, "encoder-orthogonal", 0))?,
                bias: vec![0.0; latent_dim],
            }
        }
        EncoderKind::Affine => {
            let std = 1.0 / (input_dim as f64).sqrt();
            let mut draw = 0;
            let weight = loop {
                let mut rng = rng_from_seed(derive_seed(seed, "encoder-affine", draw));
                let w = gaussian_matrix(&mut rng, latent_dim, input_dim, std);
                if condition_number(&w) <= AFFINE_CONDITION_LIMIT {
                    break w;
                }
                draw += 1;
                if draw as usize >= AFFINE_MAX_DRAWS {
                    return Err(Error::Numeric(
                        "could not draw a well-conditioned affine encoder".into(),
                    ));
                }
            };
            let mut rng = rng_from_seed(derive_seed(seed, "encoder-affine-bias", 0));
            EncoderParams::Linear {
                weight,
                bias: gaussian_vec(&mut rng, latent_dim, 1.0),
            }
        }
        EncoderKind::Mlp => {
            let hidden = 2 * latent_dim;
            let mut rng = rng_from_seed(derive_seed(seed, "encoder-mlp", 0));
            let hidden_weight = gaussian_matrix(&mut rng, hidden, input_dim, 1.0 / (input_dim as f64).sqrt());
            let hidden_bias = gaussian_vec(&mut rng, hidden, 0.1);
            let output_weight = gaussian_matrix(&mut rng, latent_dim, hidden, 1.0 / (hidden as f64).sqrt());
            let output_bias = gaussian_vec(&mut rng, latent_dim, 0.1);
            EncoderParams::Mlp {
                hidden_weight,
                hidden_bias,
                output_weight,
                output_bias,
            }
        }
    };
    Encoder::from_parts(kind, params, 1.0, seed)
}

/// Linear softmax classifier over latents.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoder {
    weights: RealMatrix,
    bias: Vec<f64>,
}

impl Decoder {
    pub fn new(weights: RealMatrix, bias: Vec<f64>) -> Result<Self> {
        if weights.rows() < 2 {
            return Err(invalid("decoder needs at least two classes"));
        }
        if bias.len() != weights.rows() {
            return Err(invalid("decoder bias length must equal the class count"));
        }
        if bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::Numeric("non-finite decoder bias".into()));
        }
        Ok(Self { weights, bias })
    }

    /// Untrained decoder with small Gaussian weights and zero bias.
    pub fn init(latent_dim: usize, class_count: usize, seed: u64) -> Result<Self> {
        let mut rng = rng_from_seed(derive_seed(seed, "decoder-init", 0));
        let w = gaussian_matrix(&mut rng, class_count, latent_dim, 0.01);
        Decoder::new(w, vec![0.0; class_count])
    }

    pub fn weights(&self) -> &RealMatrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn class_count(&self) -> usize {
        self.weights.rows()
    }

    pub fn latent_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn logits(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.latent_dim() {
            return Err(invalid(format!(
                "latent has dimension {}, decoder expects {}",
                z.len(),
                self.latent_dim()
            )));
        }
        let mut out = self.weights.mul_vec(z)?;
        out.iter_mut().zip(&self.bias).for_each(|(o, b)| *o += b);
        Ok(out)
    }

    /// Argmax class; ties go to the lowest index.
    pub fn decode(&self, z: &[f64]) -> Result<usize> {
        let logits = self.logits(z)?;
        let mut best = 0;
        for (i, &v) in logits.iter().enumerate().skip(1) {
            if v > logits[best] {
                best = i;
            }
        }
        Ok(best)
    }

    pub fn decode_batch(&self, z: &RealMatrix) -> Result<Vec<usize>> {
        z.row_iter().map(|row| self.decode(row)).collect()
    }
}

/// Fraction of rows of `latents` that `decoder` labels correctly.
pub fn accuracy(decoder: &Decoder, latents: &RealMatrix, labels: &[usize]) -> Result<f64> {
    if latents.rows() != labels.len() {
        return Err(invalid("latent and label counts differ"));
    }
    if labels.is_empty() {
        return Err(invalid("accuracy of an empty set"));
    }
    let predicted = decoder.decode_batch(latents)?;
    let hits = predicted.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Full-batch Adam on the mean cross-entropy of a linear softmax decoder over
/// the encoder's latents of `data`.
pub fn train_decoder(encoder: &Encoder, data: &Dataset, epochs: usize, lr: f64, seed: u64) -> Result<Decoder> {
    if data.class_count < 2 {
        return Err(invalid("training a decoder needs at least two classes"));
    }
    if epochs == 0 {
        return Err(invalid("epochs must be at least 1"));
    }
    let latents = encoder.encode_batch(&data.samples)?;
    let init = Decoder::init(encoder.latent_dim(), data.class_count, seed)?;
    let (k, d) = (data.class_count, encoder.latent_dim());
    let n = data.len() as f64;

    let mut params: Vec<f64> = init.weights.as_slice().to_vec();
    params.extend_from_slice(&init.bias);
    let mut adam = AdamState::new(params.len(), AdamParams::default().with_learning_rate(lr));
    adam.params.validate()?;

    let mut grad = vec![0.0; params.len()];
    let mut probs = vec![0.0; k];
    for _ in 0..epochs {
        grad.iter_mut().for_each(|g| *g = 0.0);
        for (z, &label) in latents.row_iter().zip(&data.labels) {
            for c in 0..k {
                let w = &params[c * d..(c + 1) * d];
                probs[c] = w.iter().zip(z).map(|(a, b)| a * b).sum::<f64>() + params[k * d + c];
            }
            let max = probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for p in probs.iter_mut() {
                *p = (*p - max).exp();
                total += *p;
            }
            for c in 0..k {
                let delta = probs[c] / total - if c == label { 1.0 } else { 0.0 };
                let g = &mut grad[c * d..(c + 1) * d];
                g.iter_mut().zip(z).for_each(|(gi, zi)| *gi += delta * zi);
                grad[k * d + c] += delta;
            }
        }
        grad.iter_mut().for_each(|g| *g /= n);
        adam.step_in_place(&grad, &mut params)?;
    }
    let bias = params.split_off(k * d);
    Decoder::new(RealMatrix::new(k, d, params)?, bias)
}

/// Hyperparameters needed to build and train one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSpec {
    pub id: String,
    pub kind: EncoderKind,
    pub latent_dim: usize,
    pub seed: u64,
    pub scale: f64,
    pub epochs: usize,
    pub learning_rate: f64,
}

impl AgentSpec {
    pub fn new(id: impl Into<String>, kind: EncoderKind, latent_dim: usize, seed: u64) -> Self {
        Self {
            id: id.into(),
            kind,
            latent_dim,
            seed,
            scale: 1.0,
            epochs: 300,
            learning_rate: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub id: String,
    pub encoder: Encoder,
    pub decoder: Decoder,
}

impl Agent {
    pub fn new(id: impl Into<String>, encoder: Encoder, decoder: Decoder) -> Result<Self> {
        if encoder.latent_dim() != decoder.latent_dim() {
            return Err(invalid(format!(
                "encoder latent dim {} differs from decoder latent dim {}",
                encoder.latent_dim(),
                decoder.latent_dim()
            )));
        }
        Ok(Self {
            id: id.into(),
            encoder,
            decoder,
        })
    }

    /// Builds the encoder and trains its decoder on `train`.
    pub fn train(spec: &AgentSpec, train: &Dataset) -> Result<Self> {
        let encoder = make_encoder(spec.kind, train.input_dim(), spec.latent_dim, spec.seed)?.with_scale(spec.scale)?;
        let decoder = train_decoder(
            &encoder,
            train,
            spec.epochs,
            spec.learning_rate,
            derive_seed(spec.seed, "decoder", 0),
        )?;
        Agent::new(spec.id.clone(), encoder, decoder)
    }

    /// End-to-end accuracy of this agent on `data`.
    pub fn accuracy(&self, data: &Dataset) -> Result<f64> {
        accuracy(&self.decoder, &self.encoder.encode_batch(&data.samples)?, &data.labels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::dot;
    use approx::assert_relative_eq;

    fn standard() -> (Dataset, Dataset) {
        gen_gaussian_mixture(10, 16, 300, 8.0, 7)
            .unwrap()
            .split_per_class(100)
            .unwrap()
    }

    fn nearest_mean_accuracy(data: &Dataset) -> f64 {
        let d = data.input_dim();
        let mut means = vec![vec![0.0; d]; data.class_count];
        let mut counts = vec![0.0; data.class_count];
        for (x, &l) in data.samples.row_iter().zip(&data.labels) {
            means[l].iter_mut().zip(x).for_each(|(m, v)| *m += v);
            counts[l] += 1.0;
        }
        for (m, c) in means.iter_mut().zip(&counts) {
            m.iter_mut().for_each(|v| *v /= c);
        }
        let hits = data
            .samples
            .row_iter()
            .zip(&data.labels)
            .filter(|(x, &l)| {
                let best = (0..data.class_count)
                    .min_by(|&a, &b| {
                        crate::numerics::squared_distance(x, &means[a])
                            .total_cmp(&crate::numerics::squared_distance(x, &means[b]))
                    })
                    .unwrap();
                best == l
            })
            .count();
        hits as f64 / data.len() as f64
    }

    #[test]
    fn single_class_mixture() {
        let d = gen_gaussian_mixture(1, 3, 5, 2.0, 1).unwrap();
        assert!(d.labels.iter().all(|&l| l == 0));
        assert_eq!(d.len(), 5);
    }

    #[test]
    fn mixture_is_deterministic() {
        let a = gen_gaussian_mixture(4, 5, 20, 3.0, 11).unwrap();
        let b = gen_gaussian_mixture(4, 5, 20, 3.0, 11).unwrap();
        assert_eq!(a, b);
        let c = gen_gaussian_mixture(4, 5, 20, 3.0, 12).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn standard_mixture_is_nearest_mean_separable() {
        let d = gen_gaussian_mixture(10, 16, 200, 8.0, 7).unwrap();
        assert_eq!(d.len(), 2000);
        assert!(nearest_mean_accuracy(&d) > 0.99);
    }

    #[test]
    fn mixture_rejects_zero_sizes() {
        assert!(gen_gaussian_mixture(0, 3, 5, 1.0, 0).is_err());
        assert!(gen_gaussian_mixture(2, 0, 5, 1.0, 0).is_err());
        assert!(gen_gaussian_mixture(2, 3, 0, 1.0, 0).is_err());
        assert!(gen_gaussian_mixture(2, 3, 5, 0.0, 0).is_err());
    }

    #[test]
    fn split_keeps_classes_balanced() {
        let (train, test) = standard();
        assert_eq!(train.len(), 2000);
        assert_eq!(test.len(), 1000);
        for c in 0..10 {
            assert_eq!(test.labels.iter().filter(|&&l| l == c).count(), 100);
        }
    }

    #[test]
    fn orthogonal_encoder_is_isometry() {
        let enc = make_encoder(EncoderKind::Orthogonal, 8, 8, 3).unwrap();
        let mut rng = rng_from_seed(99);
        for _ in 0..20 {
            let x = gaussian_vec(&mut rng, 8, 2.0);
            let y = gaussian_vec(&mut rng, 8, 2.0);
            let (zx, zy) = (enc.encode(&x).unwrap(), enc.encode(&y).unwrap());
            assert_relative_eq!(norm(&zx), norm(&x), epsilon = 1e-10);
            assert_relative_eq!(dot(&zx, &zy), dot(&x, &y), epsilon = 1e-10);
        }
        if let EncoderParams::Linear { weight, .. } = enc.params() {
            let gram = weight.transpose().matmul(weight).unwrap();
            assert!(gram.max_abs_diff(&RealMatrix::identity(8)) < 1e-10);
        }
    }

    #[test]
    fn orthogonal_requires_square() {
        let err = make_encoder(EncoderKind::Orthogonal, 8, 4, 0).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn seeds_produce_different_encoders() {
        let x = vec![1.0, -0.5, 2.0, 0.25];
        for kind in [EncoderKind::Orthogonal, EncoderKind::Affine, EncoderKind::Mlp] {
            let a = make_encoder(kind, 4, 4, 1).unwrap();
            let b = make_encoder(kind, 4, 4, 2).unwrap();
            assert_ne!(a.encode(&x).unwrap(), b.encode(&x).unwrap(), "{kind}");
            assert_ne!(a.fingerprint(), b.fingerprint());
        }
    }

    #[test]
    fn batch_shape_and_dimension_checks() {
        let enc = make_encoder(EncoderKind::Mlp, 6, 3, 5).unwrap();
        let x = RealMatrix::zeros(7, 6);
        let z = enc.encode_batch(&x).unwrap();
        assert_eq!((z.rows(), z.cols()), (7, 3));
        assert!(enc.encode(&[0.0; 5]).is_err());
    }

    #[test]
    fn affine_zero_weight_returns_bias() {
        let bias = vec![0.5, -1.5];
        let enc = Encoder::from_parts(
            EncoderKind::Affine,
            EncoderParams::Linear {
                weight: RealMatrix::zeros(2, 3),
                bias: bias.clone(),
            },
            1.0,
            0,
        )
        .unwrap();
        assert_eq!(enc.encode(&[4.0, 5.0, 6.0]).unwrap(), bias);
    }

    #[test]
    fn affine_encoder_is_well_conditioned() {
        let enc = make_encoder(EncoderKind::Affine, 16, 16, 4).unwrap();
        if let EncoderParams::Linear { weight, .. } = enc.params() {
            assert!(condition_number(weight) <= AFFINE_CONDITION_LIMIT);
        }
    }

    #[test]
    fn mlp_output_bounded_by_final_layer() {
        let enc = make_encoder(EncoderKind::Mlp, 4, 3, 8).unwrap();
        let EncoderParams::Mlp {
            output_weight,
            output_bias,
            ..
        } = enc.params()
        else {
            unreachable!()
        };
        let bounds: Vec<f64> = output_weight
            .row_iter()
            .zip(output_bias)
            .map(|(row, b)| row.iter().map(|w| w.abs()).sum::<f64>() + b.abs())
            .collect();
        for x in [[1e6, -1e6, 1e6, 1e6], [0.0; 4], [3.0, 1.0, -2.0, 0.5]] {
            let z = enc.encode(&x).unwrap();
            for (v, b) in z.iter().zip(&bounds) {
                assert!(v.abs() <= *b + 1e-12);
            }
        }
    }

    #[test]
    fn scaled_encoder_scales_outputs() {
        let base = make_encoder(EncoderKind::Affine, 3, 3, 2).unwrap();
        let scaled = base.clone().with_scale(3.0).unwrap();
        let x = [0.3, -0.7, 1.1];
        let (a, b) = (base.encode(&x).unwrap(), scaled.encode(&x).unwrap());
        for (p, q) in a.iter().zip(&b) {
            assert_relative_eq!(3.0 * p, *q, epsilon = 1e-12);
        }
        assert!(base.with_scale(0.0).is_err());
    }

    #[test]
    fn decode_argmax_and_ties() {
        let dec = Decoder::new(RealMatrix::identity(5), vec![0.0; 5]).unwrap();
        assert_eq!(dec.decode(&[0.0, 0.0, 0.0, 1.0, 0.0]).unwrap(), 3);
        let zero = Decoder::new(RealMatrix::zeros(4, 2), vec![0.0; 4]).unwrap();
        assert_eq!(zero.decode(&[1.0, 2.0]).unwrap(), 0);
        assert!(dec.decode(&[1.0]).is_err());
    }

    #[test]
    fn decode_ignores_constant_bias_shift() {
        let mut rng = rng_from_seed(5);
        let w = gaussian_matrix(&mut rng, 4, 3, 1.0);
        let b = gaussian_vec(&mut rng, 4, 1.0);
        let shifted: Vec<f64> = b.iter().map(|v| v + 17.0).collect();
        let d1 = Decoder::new(w.clone(), b).unwrap();
        let d2 = Decoder::new(w, shifted).unwrap();
        for _ in 0..50 {
            let z = gaussian_vec(&mut rng, 3, 1.0);
            assert_eq!(d1.decode(&z).unwrap(), d2.decode(&z).unwrap());
        }
    }

    #[test]
    fn decoder_rejects_single_class() {
        assert!(Decoder::new(RealMatrix::zeros(1, 3), vec![0.0]).is_err());
        let one = gen_gaussian_mixture(1, 4, 10, 1.0, 0).unwrap();
        let enc = make_encoder(EncoderKind::Orthogonal, 4, 4, 0).unwrap();
        assert!(train_decoder(&enc, &one, 5, 0.05, 0).is_err());
    }

    #[test]
    fn trained_decoder_reaches_matched_accuracy() {
        let (train, test) = standard();
        let enc = make_encoder(EncoderKind::Orthogonal, 16, 16, 21).unwrap();
        let dec = train_decoder(&enc, &train, 300, 0.05, 1).unwrap();
        let acc = accuracy(&dec, &enc.encode_batch(&test.samples).unwrap(), &test.labels).unwrap();
        assert!(acc >= 0.95, "matched accuracy {acc}");
        assert!(nearest_mean_accuracy(&test) >= acc - 0.05);
    }

    #[test]
    fn untrained_decoder_is_at_chance() {
        let (_, test) = standard();
        let enc = make_encoder(EncoderKind::Orthogonal, 16, 16, 21).unwrap();
        let z = enc.encode_batch(&test.samples).unwrap();
        let mean: f64 = (0..10)
            .map(|s| accuracy(&Decoder::init(16, 10, s).unwrap(), &z, &test.labels).unwrap())
            .sum::<f64>()
            / 10.0;
        assert!((mean - 0.1).abs() <= 0.1, "mean untrained accuracy {mean}");
    }

    #[test]
    fn training_is_deterministic() {
        let (train, _) = standard();
        let enc = make_encoder(EncoderKind::Mlp, 16, 16, 2).unwrap();
        let a = train_decoder(&enc, &train, 20, 0.05, 3).unwrap();
        let b = train_decoder(&enc, &train, 20, 0.05, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn agent_checks_latent_dims() {
        let enc = make_encoder(EncoderKind::Affine, 4, 3, 0).unwrap();
        let dec = Decoder::init(4, 2, 0).unwrap();
        assert!(Agent::new("x", enc, dec).is_err());
    }
}
