//! Training loop, optimizers, batching and gradient checking.

mod batches;
mod gradcheck;
mod optim;

pub use batches::{make_batches, split_validation};
pub use gradcheck::{grad_check, grad_check_against, random_instance, InstanceShape};
pub use optim::{optimizer_step, OptimizerConfig, OptimizerState};

use serde::{Deserialize, Serialize};

use crate::encoder::{init_model, DualEncoder};
use crate::error::{Error, Result};
use crate::losses::{batch_loss, Batch, DirectionWeights, LossConfig};
use crate::metrics::{evaluate_retrieval, MetricReport};
use crate::relevance::{relevance_matrix, RelevanceMatrix, RelevanceMode};
use crate::scalar::Scalar;
use crate::synthdata::Dataset;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub loss: LossConfig,
    pub direction_weights: DirectionWeights,
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Relevance used as training supervision. Evaluation always uses
    /// [`RelevanceMode::Full`].
    pub relevance_mode: RelevanceMode,
    pub embedding_dim: usize,
    /// When false, bias gradients are dropped and biases stay at zero.
    pub use_bias: bool,
    /// Fraction of the training data held out for validation tracking.
    pub validation_fraction: f64,
    /// Return the epoch with the best validation ndcg_avg instead of the
    /// final one.
    pub keep_best: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossConfig::default(),
            direction_weights: DirectionWeights::default(),
            optimizer: OptimizerConfig::adam(1e-4),
            batch_size: 64,
            epochs: 50,
            seed: 0,
            relevance_mode: RelevanceMode::Full,
            embedding_dim: 512,
            use_bias: true,
            validation_fraction: 0.1,
            keep_best: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        self.direction_weights.validate()?;
        self.optimizer.validate()?;
        if self.batch_size < 2 {
            return Err(Error::arg("batch_size must be >= 2"));
        }
        if self.epochs < 1 {
            return Err(Error::arg("epochs must be >= 1"));
        }
        if self.embedding_dim < 1 {
            return Err(Error::arg("embedding_dim must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::arg("validation_fraction must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub skipped_anchors: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub metrics: Option<MetricReport>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.mean_loss).collect()
    }

    /// One JSON object per epoch, newline-terminated.
    pub fn to_json_lines(&self) -> Result<String> {
        let mut out = String::new();
        for e in &self.epochs {
            out.push_str(&serde_json::to_string(e)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_json_lines(text: &str) -> Result<Self> {
        let epochs = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { epochs })
    }
}

/// Held-out data scored after every epoch.
#[derive(Clone, Copy, Debug)]
pub struct Validation<'a, T> {
    pub data: &'a Dataset<T>,
    pub map_threshold: f64,
}

struct PreparedValidation<'a, T> {
    data: &'a Dataset<T>,
    relevance: RelevanceMatrix,
    map_threshold: f64,
}

impl<T: Scalar> PreparedValidation<'_, T> {
    fn score(&self, model: &DualEncoder<T>) -> Result<MetricReport> {
        let sim = model.similarity_matrix(&self.data.video, &self.data.text)?;
        evaluate_retrieval(&sim, &self.relevance, self.map_threshold)
    }
}

/// Trains a fresh encoder on `dataset`.
///
/// Deterministic in `config.seed`: identical inputs give a bit-identical
/// loss trajectory and model.
pub fn train<T: Scalar>(
    dataset: &Dataset<T>,
    config: &TrainConfig,
    validation: Option<Validation<'_, T>>,
) -> Result<(DualEncoder<T>, TrainHistory)> {
    config.validate()?;
    if dataset.len() < 2 {
        return Err(Error::arg("training needs at least 2 items"));
    }
    let validation = validation
        .map(|v| {
            Ok::<_, Error>(PreparedValidation {
                relevance: relevance_matrix(
                    &v.data.annotations,
                    &v.data.annotations,
                    RelevanceMode::Full,
                )?,
                data: v.data,
                map_threshold: v.map_threshold,
            })
        })
        .transpose()?;

    let mut model = init_model::<T>(
        config.seed,
        dataset.video.cols(),
        dataset.text.cols(),
        config.embedding_dim,
    )?;
    let mut state = OptimizerState::new(&config.optimizer, &model);
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, DualEncoder<T>)> = None;

    for epoch in 0..config.epochs {
        let batches = make_batches(dataset.len(), config.batch_size, config.seed, epoch as u64)?;
        let mut loss_sum = 0f64;
        let mut skipped = 0;
        for (b, idx) in batches.iter().enumerate() {
            let batch = make_batch(dataset, idx, config.relevance_mode)?;
            let mut out = batch_loss(&model, &batch, &config.loss, &config.direction_weights)?;
            if !out.loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            if !config.use_bias {
                out.grads.b_video.fill(T::zero());
                out.grads.b_text.fill(T::zero());
            }
            optimizer_step(&mut model, &out.grads, &mut state, &config.optimizer)?;
            if !model.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            loss_sum += out.loss.as_f64();
            skipped += out.skipped_anchors;
        }
        let metrics = validation.as_ref().map(|v| v.score(&model)).transpose()?;
        if config.keep_best {
            if let Some(m) = &metrics {
                if best.as_ref().is_none_or(|(score, _)| m.ndcg_avg > *score) {
                    best = Some((m.ndcg_avg, model.clone()));
                }
            }
        }
        history.epochs.push(EpochRecord {
            epoch,
            mean_loss: loss_sum / batches.len() as f64,
            skipped_anchors: skipped,
            metrics,
        });
    }
    let model = best.map_or(model, |(_, m)| m);
    Ok((model, history))
}

/// Gathers one batch and its batch-local relevance.
pub fn make_batch<T: Scalar>(
    dataset: &Dataset<T>,
    indices: &[usize],
    mode: RelevanceMode,
) -> Result<Batch<T>> {
    let anns: Vec<_> = indices.iter().map(|&i| dataset.annotations[i].clone()).collect();
    Ok(Batch {
        video: dataset.video.select_rows(indices),
        text: dataset.text.select_rows(indices),
        relevance: relevance_matrix(&anns, &anns, mode)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::{generate_dataset, SynthConfig};

    fn small_data() -> Dataset<f32> {
        generate_dataset(&SynthConfig {
            n_items: 96,
            d_video: 16,
            d_text: 12,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            epochs: 3,
            batch_size: 32,
            embedding_dim: 8,
            optimizer: OptimizerConfig::adam(1e-3),
            ..TrainConfig::default()
        }
    }

    #[test]
    fn deterministic_history() {
        let data = small_data();
        let (m1, h1) = train(&data, &small_config(), None).unwrap();
        let (m2, h2) = train(&data, &small_config(), None).unwrap();
        assert_eq!(h1, h2);
        assert_eq!(m1, m2);
        assert_eq!(h1.epochs.len(), 3);
    }

    #[test]
    fn bias_can_be_disabled() {
        let cfg = TrainConfig {
            use_bias: false,
            ..small_config()
        };
        let (m, _) = train(&small_data(), &cfg, None).unwrap();
        assert!(m.b_video.iter().chain(&m.b_text).all(|&b| b == 0.0));
    }

    #[test]
    fn validation_metrics_recorded() {
        let data = small_data();
        let val = data.subset(&(0..20).collect::<Vec<_>>());
        let cfg = TrainConfig {
            keep_best: true,
            ..small_config()
        };
        let (_, h) = train(
            &data,
            &cfg,
            Some(Validation {
                data: &val,
                map_threshold: 0.0,
            }),
        )
        .unwrap();
        assert!(h.epochs.iter().all(|e| e.metrics.is_some()));
        let text = h.to_json_lines().unwrap();
        assert_eq!(text.lines().count(), 3);
        assert_eq!(TrainHistory::from_json_lines(&text).unwrap(), h);
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        for key in ["epoch", "mean_loss", "skipped_anchors", "metrics"] {
            assert!(first.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let data = small_data();
        let tiny = data.subset(&[0]);
        assert!(train(&tiny, &small_config(), None).is_err());
        let cfg = TrainConfig {
            epochs: 0,
            ..small_config()
        };
        assert!(train(&data, &cfg, None).is_err());
    }
}
