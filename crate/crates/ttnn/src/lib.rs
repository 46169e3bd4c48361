//! Tensor-train numerics and tensor-train layers for neural networks.

pub mod checkpoint;
pub mod data;
pub mod dense;
pub mod error;
pub mod index;
pub mod layer;
pub(crate) mod linalg;
pub mod matrix;
pub mod meter;
pub mod nn;
pub mod tensor;

/// Dense matrix type used throughout the public API.
pub use nalgebra::DMatrix;

pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use data::{load_mnist_dir, DatasetSplit, IdxImages, ResizeMode};
pub use dense::DenseTensor;
pub use error::{Error, Result};
pub use index::{MultiIndexMap, ShapePair};
pub use layer::{BackwardWorkspace, LayerGradients, SigmaRule, TtLayer};
pub use matrix::{Core4, TtMatrix};
pub use meter::AllocMeter;
pub use nn::{
    evaluate, predict, softmax_xent, train_epoch, DenseLayer, EpochMetrics, ForwardTrace, Layer,
    LayerGradient, LrSchedule, MatrixRankBottleneck, Network, NetworkGradients, SgdMomentumState,
};
pub use tensor::{Core3, TruncationPolicy, TtTensor};
