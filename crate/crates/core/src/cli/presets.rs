//! Frozen training presets for the five ensemble members.
//!
//! Model 1 is the part-of-speech embedding model trained with the
//! relevance-based margin (cross-modal and within-modality terms) and
//! SGD; models 2-5 are the graph-reasoning model trained with RANP and Adam.
//! Here all of them drive the same dual linear encoder.

use crate::losses::{DirectionWeights, LossConfig};
use crate::trainer::{OptimizerConfig, TrainConfig};

pub const PRESET_NAMES: [&str; 5] = ["model1", "model2", "model3", "model4", "model5"];

fn ranp(tau: f64, margin_pos: f64, embedding_dim: usize) -> TrainConfig {
    TrainConfig {
        loss: LossConfig::ranp(tau, margin_pos),
        direction_weights: DirectionWeights::cross_modal(),
        optimizer: OptimizerConfig::adam(1e-4),
        batch_size: 64,
        epochs: 50,
        embedding_dim,
        ..TrainConfig::default()
    }
}

pub fn preset(name: &str) -> Option<TrainConfig> {
    Some(match name {
        "model1" => TrainConfig {
            loss: LossConfig::relevance_margin(),
            direction_weights: DirectionWeights::all(),
            optimizer: OptimizerConfig::sgd(0.01, 0.9),
            batch_size: 64,
            epochs: 100,
            embedding_dim: 512,
            ..TrainConfig::default()
        },
        "model2" => ranp(0.15, 0.2, 1024),
        "model3" => ranp(0.15, 0.2, 512),
        "model4" => ranp(0.4, 0.25, 1024),
        "model5" => ranp(0.4, 0.15, 1024),
        _ => return None,
    })
}
