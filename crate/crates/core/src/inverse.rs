//! Pseudo-inverses of the relative projection.
//!
//! [`gradient_inverse`] works for any similarity: it runs Adam on the squared
//! error between the projection of a candidate latent and the received
//! relative vector. [`closed_form_cosine_inverse`] is the least-squares
//! baseline that only exists for cosine similarity.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::numerics::{dot, least_squares, norm, AdamParams, AdamState, RealMatrix};
use crate::relative::{project_into, AbsoluteAnchors, RelativeVector, Similarity};
use crate::seed::rng_from_seed;

/// Default second-moment decay of the inverse's Adam.
pub const INVERSE_BETA2: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseConfig {
    pub max_iterations: usize,
    /// Adam settings. The learning rate is in units of the mean anchor norm,
    /// which makes the descent independent of the latent scale.
    pub adam: AdamParams,
    pub init_seed: u64,
    /// Descent stops as soon as the loss drops below this value.
    pub early_stop_loss: f64,
}

impl Default for InverseConfig {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            adam: AdamParams {
                beta2: INVERSE_BETA2,
                ..AdamParams::default()
            },
            init_seed: 0,
            early_stop_loss: 1e-12,
        }
    }
}

impl InverseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(invalid("max_iterations must be at least 1"));
        }
        if self.early_stop_loss.is_nan() || self.early_stop_loss < 0.0 {
            return Err(invalid("early_stop_loss must be non-negative"));
        }
        self.adam.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InverseResult {
    pub z_hat: Vec<f64>,
    /// `‖project(z_hat) − target‖²`.
    pub final_loss: f64,
    /// Adam steps taken.
    pub iterations_used: usize,
}

fn check(z: &[f64], target: &RelativeVector, anchors: &AbsoluteAnchors) -> Result<()> {
    if z.len() != anchors.latent_dim() {
        return Err(invalid(format!(
            "latent has dimension {}, anchors have {}",
            z.len(),
            anchors.latent_dim()
        )));
    }
    if target.values.len() != anchors.len() {
        return Err(invalid(format!(
            "relative vector has {} entries for {} anchors",
            target.values.len(),
            anchors.len()
        )));
    }
    Ok(())
}

/// Loss and, when `grad` is given, its gradient. Dimensions are checked by the
/// caller.
fn loss_and_gradient(
    z: &[f64],
    target: &[f64],
    anchors: &AbsoluteAnchors,
    psi: Similarity,
    scratch: &mut [f64],
    grad: Option<&mut [f64]>,
) -> f64 {
    project_into(z, anchors, psi, scratch);
    let loss = scratch.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    let Some(grad) = grad else {
        return loss;
    };
    grad.iter_mut().for_each(|g| *g = 0.0);
    match psi {
        Similarity::Cosine => {
            let nz = norm(z);
            if nz == 0.0 {
                return loss;
            }
            // ∂cos_j/∂z = a_j / (‖z‖‖a_j‖) − cos_j · z / ‖z‖²
            let mut radial = 0.0;
            for j in 0..anchors.len() {
                let residual = 2.0 * (scratch[j] - target[j]);
                if residual == 0.0 {
                    continue;
                }
                let coef = residual / (nz * anchors.anchor_norm(j));
                for (g, a) in grad.iter_mut().zip(anchors.anchor(j)) {
                    *g += coef * a;
                }
                radial += residual * scratch[j];
            }
            let coef = radial / (nz * nz);
            for (g, zi) in grad.iter_mut().zip(z) {
                *g -= coef * zi;
            }
        }
        Similarity::NormalizedEuclidean => {
            // ∂r_j/∂z = (z − a_j) / (μ ‖z − a_j‖)
            let mu = anchors.mean_norm();
            for j in 0..anchors.len() {
                let dist = scratch[j] * mu;
                if dist == 0.0 {
                    continue;
                }
                let coef = 2.0 * (scratch[j] - target[j]) / (mu * dist);
                for ((g, zi), a) in grad.iter_mut().zip(z).zip(anchors.anchor(j)) {
                    *g += coef * (zi - a);
                }
            }
        }
    }
    loss
}

/// `‖project(z) − target‖²` under the target's similarity.
pub fn relrep_loss(z: &[f64], target: &RelativeVector, anchors: &AbsoluteAnchors) -> Result<f64> {
    check(z, target, anchors)?;
    let mut scratch = vec![0.0; anchors.len()];
    Ok(loss_and_gradient(
        z,
        &target.values,
        anchors,
        target.similarity,
        &mut scratch,
        None,
    ))
}

/// Analytic gradient of [`relrep_loss`] in `z`. Under cosine similarity the
/// gradient at `z = 0` is defined as zero.
pub fn relrep_loss_gradient(z: &[f64], target: &RelativeVector, anchors: &AbsoluteAnchors) -> Result<Vec<f64>> {
    check(z, target, anchors)?;
    let mut scratch = vec![0.0; anchors.len()];
    let mut grad = vec![0.0; z.len()];
    loss_and_gradient(
        z,
        &target.values,
        anchors,
        target.similarity,
        &mut scratch,
        Some(&mut grad),
    );
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numeric("non-finite loss gradient".into()));
    }
    Ok(grad)
}

/// Adam descent on [`relrep_loss`] from a point drawn uniformly in
/// `[−r, r]^d`, `r` the largest anchor norm.
///
/// The Adam step size is `config.adam.learning_rate` times the mean anchor norm.
/// Returns the lowest-loss iterate visited. Stops after
/// `config.max_iterations` steps or once the loss falls below
/// `config.early_stop_loss`.
pub fn gradient_inverse(
    target: &RelativeVector,
    anchors: &AbsoluteAnchors,
    config: &InverseConfig,
) -> Result<InverseResult> {
    config.validate()?;
    let d = anchors.latent_dim();
    let radius = anchors.max_norm();
    let mut rng = rng_from_seed(config.init_seed);
    let mut z: Vec<f64> = (0..d).map(|_| rng.random_range(-radius..=radius)).collect();
    check(&z, target, anchors)?;

    let mut adam = AdamState::new(
        d,
        config
            .adam
            .with_learning_rate(config.adam.learning_rate * anchors.mean_norm()),
    );
    let mut scratch = vec![0.0; anchors.len()];
    let mut grad = vec![0.0; d];
    let mut best_loss = f64::INFINITY;
    let mut best_z = z.clone();
    let mut steps = 0;
    loop {
        let loss = loss_and_gradient(
            &z,
            &target.values,
            anchors,
            target.similarity,
            &mut scratch,
            Some(&mut grad),
        );
        if loss < best_loss {
            best_loss = loss;
            best_z.copy_from_slice(&z);
        }
        if loss < config.early_stop_loss || steps == config.max_iterations {
            break;
        }
        adam.step_in_place(&grad, &mut z)?;
        steps += 1;
    }
    let final_loss = relrep_loss(&best_z, target, anchors)?;
    Ok(InverseResult {
        z_hat: best_z,
        final_loss,
        iterations_used: steps,
    })
}

/// [`gradient_inverse`] over every row of `targets`. Row `i` starts from the
/// seed `config.init_seed + i`, so results do not depend on scheduling.
pub fn gradient_inverse_batch(
    targets: &RealMatrix,
    similarity: Similarity,
    anchors: &AbsoluteAnchors,
    config: &InverseConfig,
) -> Result<Vec<InverseResult>> {
    (0..targets.rows())
        .into_par_iter()
        .map(|i| {
            let target = RelativeVector {
                values: targets.row(i).to_vec(),
                similarity,
            };
            let cfg = InverseConfig {
                init_seed: config.init_seed.wrapping_add(i as u64),
                ..*config
            };
            gradient_inverse(&target, anchors, &cfg)
        })
        .collect()
}

/// Least-squares solution of `Ā ẑ = target` with `Ā` the row-normalized
/// anchor matrix, rescaled to the mean anchor norm.
pub fn closed_form_cosine_inverse(target: &RelativeVector, anchors: &AbsoluteAnchors) -> Result<Vec<f64>> {
    if target.similarity != Similarity::Cosine {
        return Err(invalid("closed-form inverse needs a cosine relative vector"));
    }
    let (n, d) = (anchors.len(), anchors.latent_dim());
    if target.values.len() != n {
        return Err(invalid(format!(
            "relative vector has {} entries for {n} anchors",
            target.values.len()
        )));
    }
    if n < d {
        return Err(invalid(format!(
            "closed-form inverse needs at least as many anchors ({n}) as latent dimensions ({d})"
        )));
    }
    let mut rows = Vec::with_capacity(n * d);
    for j in 0..n {
        let inv = 1.0 / anchors.anchor_norm(j);
        rows.extend(anchors.anchor(j).iter().map(|v| v * inv));
    }
    let normalized = RealMatrix::new(n, d, rows)?;
    let ls = least_squares(&normalized, &target.values)?;
    if ls.rank < d {
        return Err(Error::DegenerateAnchors(format!(
            "row-normalized anchor matrix has rank {} < {d}",
            ls.rank
        )));
    }
    let mut z = ls.solution;
    let nz = norm(&z);
    if nz == 0.0 {
        return Err(Error::Numeric("closed-form inverse of a zero relative vector".into()));
    }
    let s = anchors.mean_norm() / nz;
    z.iter_mut().for_each(|v| *v *= s);
    Ok(z)
}

/// Cosine of the angle between two vectors, 0 when either is zero.
pub fn direction_agreement(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_gradient, squared_distance};
    use crate::relative::project;
    use crate::seed::derive_seed;
    use rand_distr::StandardNormal;

    fn gaussian_rows(n: usize, d: usize, seed: u64) -> RealMatrix {
        let mut rng = rng_from_seed(seed);
        let data = (0..n * d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        RealMatrix::new(n, d, data).unwrap()
    }

    fn gaussian(d: usize, seed: u64) -> Vec<f64> {
        gaussian_rows(1, d, seed).into_vec()
    }

    fn loss_oracle(z: &[f64], target: &[f64], anchors: &[Vec<f64>]) -> f64 {
        let mut mean = 0.0;
        for a in anchors {
            let mut s = 0.0;
            for v in a {
                s += v * v;
            }
            mean += s.sqrt();
        }
        mean /= anchors.len() as f64;
        let mut total = 0.0;
        for (j, a) in anchors.iter().enumerate() {
            let mut s = 0.0;
            for k in 0..z.len() {
                s += (z[k] - a[k]) * (z[k] - a[k]);
            }
            let r = s.sqrt() / mean - target[j];
            total += r * r;
        }
        total
    }

    #[test]
    fn loss_zero_at_exact_target() {
        let anchors = AbsoluteAnchors::new(gaussian_rows(5, 3, 1)).unwrap();
        let z = gaussian(3, 2);
        for psi in [Similarity::Cosine, Similarity::NormalizedEuclidean] {
            let t = project(&z, &anchors, psi).unwrap();
            assert_eq!(relrep_loss(&z, &t, &anchors).unwrap(), 0.0);
            let g = relrep_loss_gradient(&z, &t, &anchors).unwrap();
            assert!(norm(&g) < 1e-10);
        }
    }

    #[test]
    fn loss_matches_double_loop_oracle() {
        let m = gaussian_rows(3, 2, 5);
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.to_vec()).collect();
        let anchors = AbsoluteAnchors::new(m).unwrap();
        let z = gaussian(2, 6);
        let target = RelativeVector {
            values: vec![0.3, 1.2, 0.7],
            similarity: Similarity::NormalizedEuclidean,
        };
        let got = relrep_loss(&z, &target, &anchors).unwrap();
        let want = loss_oracle(&z, &target.values, &rows);
        assert!((got - want).abs() <= 1e-12 * want.max(1.0));
    }

    #[test]
    fn loss_is_permutation_invariant() {
        let m = gaussian_rows(4, 3, 7);
        let perm = [2, 0, 3, 1];
        let anchors = AbsoluteAnchors::new(m.clone()).unwrap();
        let permuted = AbsoluteAnchors::new(m.select_rows(&perm)).unwrap();
        let z = gaussian(3, 8);
        for psi in [Similarity::Cosine, Similarity::NormalizedEuclidean] {
            let values = vec![0.1, -0.4, 0.9, 0.2];
            let t = RelativeVector {
                values: values.clone(),
                similarity: psi,
            };
            let tp = RelativeVector {
                values: perm.iter().map(|&i| values[i]).collect(),
                similarity: psi,
            };
            let a = relrep_loss(&z, &t, &anchors).unwrap();
            let b = relrep_loss(&z, &tp, &permuted).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let anchors = AbsoluteAnchors::new(gaussian_rows(4, 3, 7)).unwrap();
        let t = RelativeVector {
            values: vec![0.0; 3],
            similarity: Similarity::Cosine,
        };
        assert!(relrep_loss(&[1.0, 2.0, 3.0], &t, &anchors).is_err());
        let t = RelativeVector {
            values: vec![0.0; 4],
            similarity: Similarity::Cosine,
        };
        assert!(relrep_loss(&[1.0, 2.0], &t, &anchors).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for psi in [Similarity::Cosine, Similarity::NormalizedEuclidean] {
            for case in 0..50u64 {
                let anchors = AbsoluteAnchors::new(gaussian_rows(6, 4, derive_seed(case, "a", 0))).unwrap();
                let z = gaussian(4, derive_seed(case, "z", 0));
                let target = RelativeVector {
                    values: project(&gaussian(4, derive_seed(case, "t", 0)), &anchors, psi)
                        .unwrap()
                        .values,
                    similarity: psi,
                };
                let analytic = relrep_loss_gradient(&z, &target, &anchors).unwrap();
                let numeric = finite_diff_gradient(|x| relrep_loss(x, &target, &anchors).unwrap(), &z, 1e-5);
                let err = squared_distance(&analytic, &numeric).sqrt() / norm(&numeric).max(1e-8);
                assert!(err < 1e-4, "{psi} case {case}: relative error {err}");
            }
        }
    }

    #[test]
    fn single_euclidean_anchor_gradient_is_radial() {
        let anchors = AbsoluteAnchors::new(RealMatrix::from_rows(&[[1.0, 2.0, -1.0]]).unwrap()).unwrap();
        let z = [3.0, -1.0, 0.5];
        let target = RelativeVector {
            values: vec![0.1],
            similarity: Similarity::NormalizedEuclidean,
        };
        let g = relrep_loss_gradient(&z, &target, &anchors).unwrap();
        let diff: Vec<f64> = z.iter().zip(anchors.anchor(0)).map(|(a, b)| a - b).collect();
        assert!((direction_agreement(&g, &diff).abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_gradient_at_origin_is_zero() {
        let anchors = AbsoluteAnchors::new(gaussian_rows(3, 2, 1)).unwrap();
        let t = RelativeVector {
            values: vec![0.5; 3],
            similarity: Similarity::Cosine,
        };
        assert_eq!(relrep_loss_gradient(&[0.0, 0.0], &t, &anchors).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn euclidean_self_roundtrip() {
        let anchors = AbsoluteAnchors::new(gaussian_rows(16, 8, 10)).unwrap();
        let z_star = gaussian(8, 11);
        let target = project(&z_star, &anchors, Similarity::NormalizedEuclidean).unwrap();
        let res = gradient_inverse(&target, &anchors, &InverseConfig::default()).unwrap();
        let rel = squared_distance(&res.z_hat, &z_star) / dot(&z_star, &z_star);
        assert!(rel < 1e-4, "relative squared error {rel}");
        assert!(res.iterations_used <= 1000);
    }

    #[test]
    fn cosine_self_roundtrip_recovers_direction() {
        let anchors = AbsoluteAnchors::new(gaussian_rows(16, 8, 10)).unwrap();
        let z_star = gaussian(8, 12);
        let target = project(&z_star, &anchors, Similarity::Cosine).unwrap();
        let res = gradient_inverse(&target, &anchors, &InverseConfig::default()).unwrap();
        assert!(direction_agreement(&res.z_hat, &z_star) > 0.999);
    }

    #[test]
    fn inverse_of_anchor_projection_lands_on_anchor() {
        let anchors = AbsoluteAnchors::new(gaussian_rows(16, 8, 13)).unwrap();
        let target = project(anchors.anchor(4), &anchors, Similarity::NormalizedEuclidean).unwrap();
        let res = gradient_inverse(&target, &anchors, &InverseConfig::default()).unwrap();
        assert!(squared_distance(&res.z_hat, anchors.anchor(4)).sqrt() < 1e-2);
    }

    #[test]
    fn final_loss_is_recomputed_and_not_above_start() {
        let anchors = AbsoluteAnchors::new(gaussian_rows(10, 5, 14)).unwrap();
        let target = project(&gaussian(5, 15), &anchors, Similarity::NormalizedEuclidean).unwrap();
        let cfg = InverseConfig {
            max_iterations: 20,
            init_seed: 3,
            ..Default::default()
        };
        let res = gradient_inverse(&target, &anchors, &cfg).unwrap();
        assert!((res.final_loss - relrep_loss(&res.z_hat, &target, &anchors).unwrap()).abs() <= 1e-12);

        let mut rng = rng_from_seed(3);
        let r = anchors.max_norm();
        let z0: Vec<f64> = (0..5).map(|_| rng.random_range(-r..=r)).collect();
        assert!(res.final_loss <= relrep_loss(&z0, &target, &anchors).unwrap());
    }

    #[test]
    fn gradient_inverse_is_deterministic() {
        let anchors = AbsoluteAnchors::new(gaussian_rows(10, 5, 16)).unwrap();
        let target = project(&gaussian(5, 17), &anchors, Similarity::Cosine).unwrap();
        let cfg = InverseConfig {
            max_iterations: 100,
            ..Default::default()
        };
        assert_eq!(
            gradient_inverse(&target, &anchors, &cfg).unwrap(),
            gradient_inverse(&target, &anchors, &cfg).unwrap()
        );
    }

    #[test]
    fn batch_uses_per_row_seeds() {
        let anchors = AbsoluteAnchors::new(gaussian_rows(10, 4, 18)).unwrap();
        let targets =
            crate::relative::project_batch(&gaussian_rows(3, 4, 19), &anchors, Similarity::NormalizedEuclidean)
                .unwrap();
        let cfg = InverseConfig {
            max_iterations: 50,
            init_seed: 40,
            ..Default::default()
        };
        let batch = gradient_inverse_batch(&targets, Similarity::NormalizedEuclidean, &anchors, &cfg).unwrap();
        for (i, res) in batch.iter().enumerate() {
            let single = gradient_inverse(
                &RelativeVector {
                    values: targets.row(i).to_vec(),
                    similarity: Similarity::NormalizedEuclidean,
                },
                &anchors,
                &InverseConfig {
                    init_seed: 40 + i as u64,
                    ..cfg
                },
            )
            .unwrap();
            assert_eq!(res, &single);
        }
    }

    #[test]
    fn closed_form_orthonormal_anchors() {
        let q = crate::agents::random_orthogonal(6, 3).unwrap();
        let anchors = AbsoluteAnchors::new(q).unwrap();
        let z_star = gaussian(6, 20);
        let target = project(&z_star, &anchors, Similarity::Cosine).unwrap();
        let z = closed_form_cosine_inverse(&target, &anchors).unwrap();
        assert!(direction_agreement(&z, &z_star) > 1.0 - 1e-9);
        assert!((norm(&z) - anchors.mean_norm()).abs() < 1e-10);
    }

    #[test]
    fn closed_form_general_case() {
        let anchors = AbsoluteAnchors::new(gaussian_rows(32, 8, 21)).unwrap();
        for s in 0..10 {
            let z_star = gaussian(8, 100 + s);
            let target = project(&z_star, &anchors, Similarity::Cosine).unwrap();
            let z = closed_form_cosine_inverse(&target, &anchors).unwrap();
            assert!(direction_agreement(&z, &z_star) > 0.999);
            assert!((norm(&z) - anchors.mean_norm()).abs() < 1e-10);
        }
    }

    #[test]
    fn closed_form_errors() {
        let few = AbsoluteAnchors::new(gaussian_rows(3, 8, 22)).unwrap();
        let t = RelativeVector {
            values: vec![0.1; 3],
            similarity: Similarity::Cosine,
        };
        assert!(matches!(
            closed_form_cosine_inverse(&t, &few),
            Err(Error::InvalidArgument(_))
        ));

        let euclid = RelativeVector {
            values: vec![0.1; 3],
            similarity: Similarity::NormalizedEuclidean,
        };
        assert!(closed_form_cosine_inverse(&euclid, &few).is_err());

        // Four anchors spanning only a 2-D subspace of R^3.
        let flat = AbsoluteAnchors::new(
            RealMatrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0], [2.0, -1.0, 0.0]]).unwrap(),
        )
        .unwrap();
        let t = RelativeVector {
            values: vec![0.5, 0.5, 0.7, 0.3],
            similarity: Similarity::Cosine,
        };
        assert!(matches!(
            closed_form_cosine_inverse(&t, &flat),
            Err(Error::DegenerateAnchors(_))
        ));
    }
}
