//! Adaptive confidence weighting over frozen per-modality embeddings.
//!
//! Each modality gets a small [`ConfidenceHead`] predicting a confidence
//! `c` in (0, 1). Training interpolates cosine logits toward the one-hot
//! target by `c`, so a head earns a low loss either by being right or by
//! admitting doubt, and pays `-log c` for doubting. At test time the
//! per-modality similarities are summed with the confidences as weights.

mod embedding;
mod fusion;
mod head;
pub mod io;
mod loss;
mod train;

use thiserror::Error;

pub use embedding::{EmbeddingSet, ProbeModality};
pub use fusion::{
    argmax, fuse, identify, identify_weighted, FusionResult, ModalityScore, PrototypeGallery,
    ScoreGallery,
};
pub use head::{ConfidenceHead, HeadActivation};
pub use loss::{
    confidence_loss, cosine_logits, interpolate_logits, softmax, task_loss, total_loss,
    ClassPrototypes, ModalityTerm,
};
pub use train::{
    backward, train, AcwTrainConfig, BatchGradient, EpochStats, TrainModality, TrainOutcome,
};

#[derive(Debug, Error)]
pub enum AcwError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("class count mismatch: expected {expected}, got {actual}")]
    ClassMismatch { expected: usize, actual: usize },
    #[error("embedding has zero norm")]
    ZeroNorm,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("label {label} has no prototype (only {classes} classes)")]
    MissingPrototype { label: u32, classes: usize },
    #[error("dataset is empty")]
    Empty,
    #[error("modalities are not aligned: {0}")]
    Misaligned(String),
    #[error("no modality present")]
    NoModalities,
    #[error("no {what} for modality '{modality}'")]
    MissingModality { what: &'static str, modality: String },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed {kind} file: {reason}")]
    Format { kind: &'static str, reason: String },
}

pub type Result<T> = std::result::Result<T, AcwError>;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Unit vector in the direction of `x`.
pub fn unit(x: &[f64]) -> Result<Vec<f64>> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(AcwError::NonFinite("embedding"));
    }
    let n = norm(x);
    if !(n > 0.0) {
        return Err(AcwError::ZeroNorm);
    }
    Ok(x.iter().map(|v| v / n).collect())
}
