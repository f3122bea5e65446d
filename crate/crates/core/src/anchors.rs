//! Anchor selection: a uniform random baseline and prototypical anchors.
//!
//! Prototypical anchors cluster one encoder's latents, draw `M` raw samples
//! from every cluster and share those raw samples. Each receiver encodes the
//! shared groups itself and averages them, so no encoder-specific centroid ever
//! crosses the link.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;

use crate::agents::{Dataset, Encoder};
use crate::error::{invalid, Error, Result};
use crate::numerics::{squared_distance, RealMatrix};
use crate::relative::{AbsoluteAnchors, AnchorProvenance};
use crate::seed::{derive_seed, rng_from_seed, Fnv1a};

pub const DEFAULT_KMEANS_MAX_ITER: usize = 100;
pub const DEFAULT_SUPPORT_SIZE: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringResult {
    pub assignments: Vec<usize>,
    pub centroids: RealMatrix,
    pub inertia: f64,
    /// Number of centroid updates performed.
    pub iterations_run: usize,
    /// Inertia after every assignment step, first to last.
    pub inertia_history: Vec<f64>,
}

fn nearest(point: &[f64], centroids: &RealMatrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.row_iter().enumerate() {
        let d = squared_distance(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn assign(points: &RealMatrix, centroids: &RealMatrix) -> (Vec<usize>, Vec<f64>) {
    points.row_iter().map(|p| nearest(p, centroids)).unzip()
}

fn kmeans_plus_plus<R: Rng>(points: &RealMatrix, k: usize, rng: &mut R) -> RealMatrix {
    let n = points.rows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut dist: Vec<f64> = points
        .row_iter()
        .map(|p| squared_distance(p, points.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in dist.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // Rounding can leave `acc` just below `target`; take the last candidate.
            pick.unwrap_or_else(|| dist.iter().rposition(|&d| d > 0.0).unwrap())
        } else {
            // Every point coincides with a chosen centroid.
            rng.random_range(0..n)
        };
        chosen.push(next);
        let c = points.row(next);
        for (d, p) in dist.iter_mut().zip(points.row_iter()) {
            *d = d.min(squared_distance(p, c));
        }
    }
    points.select_rows(&chosen)
}

/// Lloyd's algorithm from k-means++ seeds.
///
/// Stops when an assignment step reproduces the previous assignment or after
/// `max_iter` centroid updates. A cluster left empty by an update is moved onto
/// the point farthest from its own centroid. The returned centroids are the
/// ones the final assignment was computed against.
pub fn kmeans(points: &RealMatrix, n_clusters: usize, seed: u64, max_iter: usize) -> Result<ClusteringResult> {
    let n = points.rows();
    if n_clusters == 0 {
        return Err(invalid("k-means needs at least one cluster"));
    }
    if n_clusters > n {
        return Err(invalid(format!("cannot form {n_clusters} clusters from {n} points")));
    }
    let d = points.cols();
    let mut rng = rng_from_seed(seed);
    let mut centroids = kmeans_plus_plus(points, n_clusters, &mut rng);

    let mut history = Vec::new();
    let mut previous: Option<Vec<usize>> = None;
    let mut iterations_run = 0;
    loop {
        let (assignments, dists) = assign(points, &centroids);
        let inertia: f64 = dists.iter().sum();
        history.push(inertia);
        if previous.as_ref() == Some(&assignments) || iterations_run == max_iter {
            return Ok(ClusteringResult {
                assignments,
                centroids,
                inertia,
                iterations_run,
                inertia_history: history,
            });
        }

        let mut sums = vec![0.0; n_clusters * d];
        let mut counts = vec![0usize; n_clusters];
        for (p, &a) in points.row_iter().zip(&assignments) {
            counts[a] += 1;
            sums[a * d..(a + 1) * d].iter_mut().zip(p).for_each(|(s, v)| *s += v);
        }
        let mut taken = vec![false; n];
        for c in 0..n_clusters {
            if counts[c] > 0 {
                let count = counts[c] as f64;
                sums[c * d..(c + 1) * d].iter_mut().for_each(|s| *s /= count);
            } else {
                let far = (0..n)
                    .filter(|&i| !taken[i])
                    .max_by(|&i, &j| dists[i].total_cmp(&dists[j]).then(j.cmp(&i)))
                    .expect("n_clusters <= n leaves a free point");
                taken[far] = true;
                sums[c * d..(c + 1) * d].copy_from_slice(points.row(far));
            }
        }
        centroids = RealMatrix::new(n_clusters, d, sums)?;
        previous = Some(assignments);
        iterations_run += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AnchorMethod {
    Random,
    Prototypical,
}

impl AnchorMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            AnchorMethod::Random => "random",
            AnchorMethod::Prototypical => "proto",
        }
    }
}

impl fmt::Display for AnchorMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AnchorMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(AnchorMethod::Random),
            "proto" | "prototypical" => Ok(AnchorMethod::Prototypical),
            other => Err(invalid(format!("unknown anchor method `{other}`"))),
        }
    }
}

/// Shared raw samples from which every encoder computes its anchors.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSupport {
    /// One matrix of raw samples per anchor.
    pub groups: Vec<RealMatrix>,
    /// Requested samples per group. A group can hold fewer when its cluster
    /// was smaller; see `warnings`.
    pub group_size: usize,
    pub method: AnchorMethod,
    pub source_encoder_id: String,
    pub seed: u64,
    /// Row indices into the dataset the samples were drawn from, per group.
    pub sample_indices: Vec<Vec<usize>>,
    pub warnings: Vec<String>,
}

impl AnchorSupport {
    pub fn new(
        groups: Vec<RealMatrix>,
        group_size: usize,
        method: AnchorMethod,
        source_encoder_id: impl Into<String>,
        seed: u64,
    ) -> Result<Self> {
        if groups.is_empty() {
            return Err(invalid("support needs at least one group"));
        }
        if group_size == 0 {
            return Err(invalid("support group size must be at least 1"));
        }
        let dim = groups[0].cols();
        if groups
            .iter()
            .any(|g| g.rows() == 0 || g.rows() > group_size || g.cols() != dim)
        {
            return Err(invalid(
                "support groups must be non-empty, at most group_size rows, one dimension",
            ));
        }
        Ok(Self {
            sample_indices: Vec::new(),
            groups,
            group_size,
            method,
            source_encoder_id: source_encoder_id.into(),
            seed,
            warnings: Vec::new(),
        })
    }

    pub fn anchor_count(&self) -> usize {
        self.groups.len()
    }

    pub fn input_dim(&self) -> usize {
        self.groups[0].cols()
    }

    /// Content hash of the group samples and their grouping.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv1a::default();
        h.write_u64(self.groups.len() as u64);
        for g in &self.groups {
            h.write_u64(g.rows() as u64);
            h.write_u64(g.cols() as u64);
            h.write_f64s(g.as_slice());
        }
        h.finish()
    }

    fn from_indices(
        data: &Dataset,
        indices: Vec<Vec<usize>>,
        group_size: usize,
        method: AnchorMethod,
        source: &str,
        seed: u64,
    ) -> Result<Self> {
        let groups = indices.iter().map(|g| data.samples.select_rows(g)).collect();
        let mut support = AnchorSupport::new(groups, group_size, method, source, seed)?;
        support.sample_indices = indices;
        Ok(support)
    }
}

/// `n_anchors` distinct samples drawn uniformly, one per group.
pub fn select_random_support(data: &Dataset, n_anchors: usize, seed: u64) -> Result<AnchorSupport> {
    if n_anchors == 0 {
        return Err(invalid("need at least one anchor"));
    }
    if n_anchors > data.len() {
        return Err(invalid(format!(
            "cannot draw {n_anchors} anchors from {} samples",
            data.len()
        )));
    }
    let mut rng = rng_from_seed(derive_seed(seed, "random-support", 0));
    let picked = index::sample(&mut rng, data.len(), n_anchors);
    let groups = picked.iter().map(|i| vec![i]).collect();
    AnchorSupport::from_indices(data, groups, 1, AnchorMethod::Random, "", seed)
}

/// Prototypical support: cluster `encoder`'s latents of `data` into
/// `n_anchors` groups and sample `m_per_cluster` raw points from each without
/// replacement. A cluster with fewer members contributes all of them and
/// leaves a warning on the result.
pub fn prototypical_support(
    encoder: &Encoder,
    encoder_id: &str,
    data: &Dataset,
    n_anchors: usize,
    m_per_cluster: usize,
    seed: u64,
) -> Result<AnchorSupport> {
    if m_per_cluster == 0 {
        return Err(invalid("samples per cluster must be at least 1"));
    }
    if n_anchors == 0 || n_anchors > data.len() {
        return Err(invalid(format!(
            "cannot form {n_anchors} clusters from {} samples",
            data.len()
        )));
    }
    let latents = encoder.encode_batch(&data.samples)?;
    let clusters = kmeans(
        &latents,
        n_anchors,
        derive_seed(seed, "proto-kmeans", 0),
        DEFAULT_KMEANS_MAX_ITER,
    )?;
    let mut members = vec![Vec::new(); n_anchors];
    for (i, &c) in clusters.assignments.iter().enumerate() {
        members[c].push(i);
    }

    let mut rng = rng_from_seed(derive_seed(seed, "proto-sample", 0));
    let mut groups = Vec::with_capacity(n_anchors);
    let mut warnings = Vec::new();
    for (c, m) in members.iter().enumerate() {
        if m.is_empty() {
            return Err(Error::DegenerateAnchors(format!("cluster {c} ended empty")));
        }
        let take = m_per_cluster.min(m.len());
        if take < m_per_cluster {
            warnings.push(format!(
                "cluster {c} has {} members, fewer than {m_per_cluster}; using all of them",
                m.len()
            ));
        }
        groups.push(index::sample(&mut rng, m.len(), take).iter().map(|k| m[k]).collect());
    }
    let mut support = AnchorSupport::from_indices(
        data,
        groups,
        m_per_cluster,
        AnchorMethod::Prototypical,
        encoder_id,
        seed,
    )?;
    support.warnings = warnings;
    Ok(support)
}

/// Anchor `i` is the mean of `encoder`'s latents over support group `i`.
pub fn encode_support(encoder: &Encoder, support: &AnchorSupport) -> Result<AbsoluteAnchors> {
    if support.input_dim() != encoder.input_dim() {
        return Err(invalid(format!(
            "support samples have dimension {}, encoder expects {}",
            support.input_dim(),
            encoder.input_dim()
        )));
    }
    let d = encoder.latent_dim();
    let mut data = Vec::with_capacity(support.anchor_count() * d);
    for group in &support.groups {
        let latents = encoder.encode_batch(group)?;
        let mut mean = vec![0.0; d];
        for row in latents.row_iter() {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
        }
        let inv = 1.0 / group.rows() as f64;
        mean.iter_mut().for_each(|m| *m *= inv);
        data.extend(mean);
    }
    let matrix = RealMatrix::new(support.anchor_count(), d, data)?;
    Ok(AbsoluteAnchors::new(matrix)?.with_provenance(AnchorProvenance {
        support_fingerprint: support.fingerprint(),
        encoder_fingerprint: encoder.fingerprint(),
    }))
}
