//! Relevance-aware text-video retrieval.
//!
//! * [`relevance`]: caption annotations and the class-IoU relevance function.
//! * [`encoder`]: a dual linear encoder into a unit-normalized space.
//! * [`losses`]: fixed-margin, relevance-margin and RANP triplet losses
//!   with analytic gradients.
//! * [`trainer`]: SGD/Adam, batching, the training loop, gradient checks.
//! * [`metrics`]: nDCG and mAP per retrieval direction.
//! * [`ensemble`]: mean fusion of similarity matrices.
//! * [`synthdata`]: a seeded synthetic dataset generator.
//! * [`formats`] and [`cli`]: binary matrix/checkpoint files and the
//!   command-line front end.
//!
//! Numeric code is generic over [`Scalar`] (f32 or f64); the aliases below
//! fix the common choices.

pub mod cli;
pub mod encoder;
pub mod ensemble;
pub mod error;
pub mod formats;
pub mod losses;
pub mod matrix;
pub mod metrics;
pub mod relevance;
pub mod scalar;
pub mod synthdata;
pub mod trainer;

pub use encoder::{init_model, DualEncoder, Side};
pub use ensemble::ensemble_mean;
pub use error::{Error, Result};
pub use losses::{batch_loss, Batch, BatchLoss, DirectionWeights, LossConfig, LossVariant};
pub use matrix::Matrix;
pub use metrics::{evaluate_retrieval, MetricReport};
pub use relevance::{relevance, relevance_matrix, CaptionAnnotation, RelevanceMatrix, RelevanceMode};
pub use scalar::Scalar;
pub use synthdata::{generate_dataset, Dataset, SynthConfig};
pub use trainer::{train, OptimizerConfig, TrainConfig, TrainHistory};

/// Videos × texts cosine similarities.
pub type SimilarityMatrix<T = f32> = Matrix<T>;

pub type DualEncoder32 = DualEncoder<f32>;
pub type DualEncoder64 = DualEncoder<f64>;
pub type Similarity32 = SimilarityMatrix<f32>;
pub type Similarity64 = SimilarityMatrix<f64>;
pub type Dataset32 = Dataset<f32>;
pub type Dataset64 = Dataset<f64>;
pub type Batch32 = Batch<f32>;
pub type Batch64 = Batch<f64>;
