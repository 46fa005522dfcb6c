//! Objective evaluation: noise mixing at a target SNR, word error rate,
//! relative WER, cosine speaker similarity and the level x noise report grid.

mod mix;
mod report;
mod similarity;
mod wav;
mod wer;

pub use mix::{achieved_snr_db, mean_power, mix_at_snr, Audio, MixOutcome, SnrSpec, SnrTarget};
pub use report::{build_report, EvalReport, NoiseCondition, ReportCell, ReportLayout, UtteranceRecord};
pub use similarity::{cosine_similarity, relative_ssim, SimilarityResult};
pub use wav::{read_wav, write_wav};
pub use wer::{normalize_text, relative_wer, tokenize, word_error_rate, word_error_rate_text, WerResult};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("clean signal is empty")]
    EmptyClean,
    #[error("noise signal is empty")]
    EmptyNoise,
    #[error("noise signal is silent; cannot scale to {0} dB SNR")]
    SilentNoise(f64),
    #[error("clean signal is silent; SNR undefined")]
    SilentClean,
    #[error("non-finite SNR target {0}")]
    NonFiniteSnr(f64),
    #[error("sample-rate mismatch: clean {clean} Hz, noise {noise} Hz")]
    SampleRateMismatch { clean: u32, noise: u32 },
    #[error("reference is empty after normalization")]
    EmptyReference,
    #[error("relative WER undefined: clean WER is zero")]
    UndefinedRelativeWer,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("wav {path}: {message}")]
    Wav { path: String, message: String },
}
