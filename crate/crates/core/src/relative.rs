//! Anchor-relative projection of latent vectors.
//!
//! A latent `z` is represented by its similarities to a fixed list of anchor
//! latents. When two encoders differ by an angle-preserving map, both see the
//! same relative vector for the same input.

use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::numerics::{dot, norm, RealMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Similarity {
    Cosine,
    /// Euclidean distance divided by the mean anchor norm.
    NormalizedEuclidean,
}

impl Similarity {
    pub fn as_str(&self) -> &'static str {
        match self {
            Similarity::Cosine => "cosine",
            Similarity::NormalizedEuclidean => "euclidean",
        }
    }
}

impl fmt::Display for Similarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Similarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Similarity::Cosine),
            "euclidean" | "normalized_euclidean" | "normalized-euclidean" => Ok(Similarity::NormalizedEuclidean),
            other => Err(invalid(format!("unknown similarity `{other}`"))),
        }
    }
}

/// Where a set of absolute anchors came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnchorProvenance {
    /// Content hash of the shared support the anchors were encoded from.
    pub support_fingerprint: u64,
    /// Content hash of the encoder that produced them.
    pub encoder_fingerprint: u64,
}

/// One encoder's latents of the shared anchors, one row per anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct AbsoluteAnchors {
    matrix: RealMatrix,
    norms: Vec<f64>,
    mean_norm: f64,
    provenance: Option<AnchorProvenance>,
}

impl AbsoluteAnchors {
    pub fn new(matrix: RealMatrix) -> Result<Self> {
        if matrix.rows() == 0 || matrix.cols() == 0 {
            return Err(invalid("anchor matrix must have at least one row and column"));
        }
        let norms: Vec<f64> = matrix.row_iter().map(norm).collect();
        if let Some(i) = norms.iter().position(|&n| n == 0.0) {
            return Err(Error::DegenerateAnchors(format!("anchor {i} has zero norm")));
        }
        let mean_norm = norms.iter().sum::<f64>() / norms.len() as f64;
        Ok(Self {
            matrix,
            norms,
            mean_norm,
            provenance: None,
        })
    }

    pub fn with_provenance(mut self, provenance: AnchorProvenance) -> Self {
        self.provenance = Some(provenance);
        self
    }

    pub fn matrix(&self) -> &RealMatrix {
        &self.matrix
    }

    pub fn len(&self) -> usize {
        self.matrix.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.rows() == 0
    }

    pub fn latent_dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn anchor(&self, j: usize) -> &[f64] {
        self.matrix.row(j)
    }

    pub fn anchor_norm(&self, j: usize) -> f64 {
        self.norms[j]
    }

    pub fn mean_norm(&self) -> f64 {
        self.mean_norm
    }

    pub fn max_norm(&self) -> f64 {
        self.norms.iter().cloned().fold(0.0, f64::max)
    }

    pub fn provenance(&self) -> Option<AnchorProvenance> {
        self.provenance
    }
}

/// A latent expressed relative to an anchor set.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativeVector {
    pub values: Vec<f64>,
    pub similarity: Similarity,
}

/// `(z·a) / (‖z‖‖a‖)`, defined as 0 for a zero query.
pub fn cosine_similarity(z: &[f64], a: &[f64]) -> Result<f64> {
    if z.len() != a.len() {
        return Err(invalid("cosine similarity of vectors with different lengths"));
    }
    let na = norm(a);
    if na == 0.0 {
        return Err(invalid("cosine similarity against a zero-norm anchor"));
    }
    let nz = norm(z);
    if nz == 0.0 {
        return Ok(0.0);
    }
    Ok((dot(z, a) / (nz * na)).clamp(-1.0, 1.0))
}

/// `‖z − a‖ / mean_norm(anchors)`.
pub fn normalized_euclidean(z: &[f64], a: &[f64], anchors: &AbsoluteAnchors) -> Result<f64> {
    if z.len() != a.len() {
        return Err(invalid("distance between vectors of different lengths"));
    }
    if anchors.mean_norm.is_nan() || anchors.mean_norm <= 0.0 {
        return Err(Error::DegenerateAnchors("mean anchor norm is zero".into()));
    }
    Ok(crate::numerics::squared_distance(z, a).sqrt() / anchors.mean_norm)
}

/// Similarity of `z` to every anchor, written into `out`. The caller has
/// checked dimensions.
pub(crate) fn project_into(z: &[f64], anchors: &AbsoluteAnchors, psi: Similarity, out: &mut [f64]) {
    match psi {
        Similarity::Cosine => {
            let nz = norm(z);
            for (j, o) in out.iter_mut().enumerate() {
                *o = if nz == 0.0 {
                    0.0
                } else {
                    (dot(z, anchors.anchor(j)) / (nz * anchors.norms[j])).clamp(-1.0, 1.0)
                };
            }
        }
        Similarity::NormalizedEuclidean => {
            for (j, o) in out.iter_mut().enumerate() {
                *o = crate::numerics::squared_distance(z, anchors.anchor(j)).sqrt() / anchors.mean_norm;
            }
        }
    }
}

pub fn project(z: &[f64], anchors: &AbsoluteAnchors, psi: Similarity) -> Result<RelativeVector> {
    if z.len() != anchors.latent_dim() {
        return Err(invalid(format!(
            "latent has dimension {}, anchors have {}",
            z.len(),
            anchors.latent_dim()
        )));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite latent".into()));
    }
    let mut values = vec![0.0; anchors.len()];
    project_into(z, anchors, psi, &mut values);
    Ok(RelativeVector {
        values,
        similarity: psi,
    })
}

/// Row-wise [`project`]; row `i` of the output is the relative vector of row `i`.
pub fn project_batch(batch: &RealMatrix, anchors: &AbsoluteAnchors, psi: Similarity) -> Result<RealMatrix> {
    let mut data = Vec::with_capacity(batch.rows() * anchors.len());
    for row in batch.row_iter() {
        data.extend(project(row, anchors, psi)?.values);
    }
    RealMatrix::new(batch.rows(), anchors.len(), data)
}
