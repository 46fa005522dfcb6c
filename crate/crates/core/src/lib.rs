//! Controllable Lombard-style manipulation of speech style embeddings.
//!
//! The crate covers the numeric side of the workflow: a corpus store for
//! style embeddings, PCA fitting and attribute correlation, variance-scaled
//! component shifting with Lombardness presets, the syllable-rate duration
//! rule, and the objective evaluation metrics (SNR mixing, WER, relative WER,
//! cosine speaker similarity and the report grid).
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common instantiations.

pub mod duration;
pub mod embedding_store;
pub mod eval;
pub mod linalg;
pub mod pca;
pub mod scalar;
pub mod style;

pub use duration::{count_syllables, target_duration, DurationSpec, DEFAULT_SYLLABLE_RATE};
pub use embedding_store::{AttributeTable, EmbeddingCorpus, StoreError, StyleEmbedding};
pub use pca::{ComponentCorrelation, ComponentCount, PcaError, PcaModel};
pub use scalar::Scalar;
pub use style::{
    apply_preset, displacement_norm, shift_embedding, Axis, AxisBinding, BindingEntry,
    LombardPreset, ModelRegistry, PresetFile, StyleError,
};

/// Double-precision PCA model; the on-disk `PCAM` format stores `f64`.
pub type PcaModelF64 = PcaModel<f64>;
/// Single-precision PCA model.
pub type PcaModelF32 = PcaModel<f32>;
/// Double-precision model registry used by preset application.
pub type ModelRegistryF64 = ModelRegistry<f64>;
/// Audio buffer with `f32` samples, as read from 16-bit WAV files.
pub type AudioF32 = eval::Audio<f32>;
