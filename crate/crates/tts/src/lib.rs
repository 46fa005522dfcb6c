//! Desk-scale flow-matching synthesizer with style conditioning.
//!
//! A small residual vector field denoises toy mel frames conditioned on text
//! symbols, a context vector and a style embedding. Later blocks carry FiLM
//! heads driven by the embedding from a statistics-pooling style encoder.
//! Training runs in two stages: a pretraining stage without style
//! conditioning, then fine-tuning with identity-initialized FiLM heads while
//! the early blocks stay frozen. Synthesis is reference-free: only text,
//! a style embedding and a speed factor are given.

pub mod checkpoint;
pub mod mel;
pub mod model;
pub mod sample;
pub mod tensor;
pub mod text;
pub mod train;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use mel::{formant_shift_augment, mask_spans, warp_channels, ToyMel};
pub use model::{
    film_apply, masked_mse, CfmExample, FieldInput, FilmHead, ModelDims, StyleSource, TtsModel,
};
pub use sample::{euler_integrate, synthesize, SynthOptions};
pub use tensor::Tensor;
pub use text::encode_text;
pub use train::{train, Stage, SyntheticTask, TrainConfig, TrainReport};

pub type TtsModelF32 = TtsModel<f32>;
pub type TtsModelF64 = TtsModel<f64>;
pub type ToyMelF32 = ToyMel<f32>;

#[derive(Debug, Error)]
pub enum TtsError {
    #[error("invalid mel: {0}")]
    InvalidMel(String),
    #[error("formant factor {0} outside the allowed range")]
    FormantFactor(f64),
    #[error("need at least {needed} frames, got {got}")]
    TooFewFrames { needed: usize, got: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("mask selects no frames")]
    EmptyMask,
    #[error("flow time {0} outside (0, 1)")]
    InvalidTime(f64),
    #[error("fine-tuning requires a pretrained checkpoint")]
    MissingCheckpoint,
    #[error(
        "non-finite loss at epoch {epoch}, step {step}: loss {loss}, gradient norm {grad_norm}, \
         mean of last 10 losses {recent_mean}"
    )]
    NonFiniteLoss {
        epoch: usize,
        step: usize,
        loss: f64,
        grad_norm: f64,
        recent_mean: f64,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Duration(#[from] lombard_core::duration::DurationError),
    #[error("i/o error on {}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl TtsError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        TtsError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
