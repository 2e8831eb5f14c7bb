//! Neural network stack: tensors, convolution primitives, layers, the
//! encoder-decoder generator and patch discriminator, losses, the Adam
//! optimizer, and the training loop.

pub mod adam;
pub mod discriminator;
pub mod generator;
pub mod layers;
pub mod loss;
pub mod model;
pub mod ops;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use adam::AdamConfig;
pub use discriminator::{DiscriminatorConfig, PatchDiscriminator};
pub use generator::{GeneratorConfig, GeneratorNet};
pub use loss::LossWeights;
pub use model::GanModel;
pub use scalar::Scalar;
pub use tensor::Tensor;
pub use train::{train, EpochLog, TrainConfig, TrainSample};

use thiserror::Error;

/// Forward/eval mode switch: dropout and batch-norm statistics differ.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Error)]
pub enum NnError {
    #[error("backward called without a cached forward pass")]
    NoForwardCache,
    #[error("non-finite loss at epoch {epoch}, step {step} ({which})")]
    NonFinite {
        epoch: usize,
        step: usize,
        which: String,
    },
    #[error("weight file does not match the model: {0}")]
    ArchitectureMismatch(String),
    #[error("empty training set")]
    EmptyDataset,
    #[error(transparent)]
    Io(#[from] crate::imgio::ImgIoError),
}
