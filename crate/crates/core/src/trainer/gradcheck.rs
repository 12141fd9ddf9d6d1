//! Central finite-difference verification of the analytic loss gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::encoder::{init_model, DualEncoder};
use crate::error::{Error, Result};
use crate::losses::{batch_loss, Batch, DirectionWeights, LossConfig};
use crate::matrix::Matrix;
use crate::relevance::{relevance_matrix, CaptionAnnotation, RelevanceMode};
use crate::scalar::Scalar;

/// Max relative error between the analytic gradient of [`batch_loss`] and
/// central finite differences with step `eps`, over every parameter.
///
/// The denominator is `max(|analytic|, |numeric|, 1e-8)`.
pub fn grad_check<T: Scalar>(
    model: &DualEncoder<T>,
    batch: &Batch<T>,
    config: &LossConfig,
    weights: &DirectionWeights,
    eps: f64,
) -> Result<f64> {
    let analytic = batch_loss(model, batch, config, weights)?.grads;
    grad_check_against(model, batch, config, weights, eps, &analytic)
}

/// Like [`grad_check`] but compares against a caller-supplied gradient.
pub fn grad_check_against<T: Scalar>(
    model: &DualEncoder<T>,
    batch: &Batch<T>,
    config: &LossConfig,
    weights: &DirectionWeights,
    eps: f64,
    analytic: &DualEncoder<T>,
) -> Result<f64> {
    if !(eps > 0.0 && eps <= 1e-2) {
        return Err(Error::arg(format!("finite-difference step must lie in (0, 1e-2], got {eps}")));
    }
    if analytic.num_params() != model.num_params() {
        return Err(Error::DimensionMismatch {
            what: "gradient parameter count",
            expected: model.num_params(),
            got: analytic.num_params(),
        });
    }
    let h = T::of(eps);
    let mut probe = model.clone();
    let mut worst = 0f64;
    for b in 0..4 {
        for k in 0..model.blocks()[b].len() {
            let orig = probe.blocks()[b][k];
            probe.blocks_mut()[b][k] = orig + h;
            let plus = batch_loss(&probe, batch, config, weights)?.loss;
            probe.blocks_mut()[b][k] = orig - h;
            let minus = batch_loss(&probe, batch, config, weights)?.loss;
            probe.blocks_mut()[b][k] = orig;

            let numeric = (plus - minus).as_f64() / (2.0 * eps);
            let exact = analytic.blocks()[b][k].as_f64();
            let denom = exact.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((exact - numeric).abs() / denom);
        }
    }
    Ok(worst)
}

/// Shape of a random gradient-check problem.
#[derive(Clone, Copy, Debug)]
pub struct InstanceShape {
    pub d_video: usize,
    pub d_text: usize,
    pub dim: usize,
    pub batch_size: usize,
    /// Instances whose loss has a kink closer than this (in similarity
    /// units) are redrawn; finite differences are meaningless across kinks.
    pub min_decision_margin: f64,
}

impl Default for InstanceShape {
    fn default() -> Self {
        Self {
            d_video: 12,
            d_text: 10,
            dim: 8,
            batch_size: 16,
            min_decision_margin: 2e-3,
        }
    }
}

/// Draws a random (model, batch) pair, deterministic in `seed`, whose loss
/// is differentiable with some room around the drawn point.
pub fn random_instance(
    seed: u64,
    shape: &InstanceShape,
    config: &LossConfig,
    weights: &DirectionWeights,
) -> Result<(DualEncoder<f64>, Batch<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..10_000 {
        let mut model = init_model::<f64>(rng.random(), shape.d_video, shape.d_text, shape.dim)?;
        for b in model.b_video.iter_mut().chain(model.b_text.iter_mut()) {
            let z: f64 = StandardNormal.sample(&mut rng);
            *b = 0.1 * z;
        }
        let n = shape.batch_size;
        let video = Matrix::from_fn(n, shape.d_video, |_, _| StandardNormal.sample(&mut rng));
        let text = Matrix::from_fn(n, shape.d_text, |_, _| StandardNormal.sample(&mut rng));
        let anns = (0..n)
            .map(|i| {
                let verb = rng.random_range(0..3u32);
                let nouns = [rng.random_range(0..5u32), rng.random_range(0..5u32)];
                CaptionAnnotation::new(format!("g{i}"), [verb], nouns)
            })
            .collect::<Result<Vec<_>>>()?;
        let relevance = relevance_matrix(&anns, &anns, RelevanceMode::Full)?;
        let batch = Batch {
            video,
            text,
            relevance,
        };
        let out = batch_loss(&model, &batch, config, weights)?;
        if out.decision_margin >= shape.min_decision_margin && out.loss > 0.0 {
            return Ok((model, batch));
        }
    }
    Err(Error::arg("could not draw a kink-free gradient-check instance"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::LossVariant;

    #[test]
    fn random_instances_pass() {
        for cfg in [LossConfig::fixed(0.2), LossConfig::relevance_margin(), LossConfig::ranp(0.15, 0.2)] {
            let w = DirectionWeights::all();
            let (m, b) = random_instance(11, &InstanceShape::default(), &cfg, &w).unwrap();
            let err = grad_check(&m, &b, &cfg, &w, 1e-4).unwrap();
            assert!(err <= 1e-4, "{:?}: {err}", cfg.variant);
        }
    }

    #[test]
    fn zero_loss_gives_zero_error() {
        // Negatives are orthogonal or opposite to each anchor, so with
        // margin 0.5 every hinge stays inactive.
        let w = Matrix::from_rows(&[vec![1.0f64, 0.0], vec![0.0, 1.0]]).unwrap();
        let model = DualEncoder::from_parts(w.clone(), vec![0.0; 2], w, vec![0.0; 2]).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0]]).unwrap();
        let batch = Batch {
            video: x.clone(),
            text: x,
            relevance: Matrix::from_fn(3, 3, |i, j| if i == j { 1.0 } else { 0.0 }),
        };
        let cfg = LossConfig::fixed(0.5);
        let out = batch_loss(&model, &batch, &cfg, &DirectionWeights::cross_modal()).unwrap();
        assert_eq!(out.loss, 0.0);
        assert!(out.grads.blocks().iter().all(|b| b.iter().all(|&g| g == 0.0)));
        let err = grad_check(&model, &batch, &cfg, &DirectionWeights::cross_modal(), 1e-4).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let cfg = LossConfig::ranp(0.4, 0.15);
        let w = DirectionWeights::cross_modal();
        let (m, b) = random_instance(3, &InstanceShape::default(), &cfg, &w).unwrap();
        let mut g = batch_loss(&m, &b, &cfg, &w).unwrap().grads;
        g.w_text.as_mut_slice()[5] += 1.0;
        let err = grad_check_against(&m, &b, &cfg, &w, 1e-4, &g).unwrap();
        assert!(err > 1e-2, "{err}");
        assert_eq!(cfg.variant, LossVariant::Ranp);
    }

    #[test]
    fn rejects_bad_step() {
        let cfg = LossConfig::fixed(0.2);
        let w = DirectionWeights::cross_modal();
        let (m, b) = random_instance(1, &InstanceShape::default(), &cfg, &w).unwrap();
        assert!(grad_check(&m, &b, &cfg, &w, 0.0).is_err());
        assert!(grad_check(&m, &b, &cfg, &w, 0.1).is_err());
    }
}
