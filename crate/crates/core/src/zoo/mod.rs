//! Neural forecasters: flat, recurrent and convolutional encoders; flat and
//! recurrent decoders; non-auto-regressive, seq2seq and DeepAR-style modes;
//! distribution, quantile and scalar heads.

pub mod batch;
pub mod heads;
pub mod model;
pub mod spec;
pub mod tape;
pub mod train;

use thiserror::Error;

pub use batch::Batch;
pub use model::{Feedback, InputDims, ModelState, Network};
pub use spec::{
    receptive_field, ArchitectureSpec, DecoderKind, DistKind, EncoderKind, ForecastMode, HeadKind,
    HeadSpec, InferenceKind, OptimizerKind, ScalarLoss,
};
pub use train::{
    predict, predict_points, train, ForecastOutput, OptimizerConfig, TrainConfig, TrainReport,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ZooError {
    #[error("illegal architecture: {0}")]
    IllegalArchitecture(String),
    #[error("illegal head: {0}")]
    IllegalHead(String),
    #[error("receptive field is only defined for tcn encoders")]
    NotTcn,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite loss")]
    NonFiniteLoss,
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("invalid training request: {0}")]
    InvalidTraining(String),
    #[error("unknown {kind} token '{token}'")]
    UnknownToken { kind: &'static str, token: String },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}
