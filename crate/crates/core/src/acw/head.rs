use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{AcwError, Result};

/// Sigmoid MLP `D -> H -> 1` with a rectified hidden layer.
///
/// The input is the embedding rescaled to norm `sqrt(D)` (unit RMS per
/// coordinate), so the head only sees feature direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceHead {
    pub dim: usize,
    pub hidden: usize,
    /// `hidden x dim`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadActivation {
    pub input: Vec<f64>,
    pub pre: Vec<f64>,
    pub hidden: Vec<f64>,
    pub logit: f64,
    pub confidence: f64,
}

const C_MIN: f64 = f64::MIN_POSITIVE;
const C_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

/// Logistic function kept strictly inside (0, 1).
pub(crate) fn sigmoid(a: f64) -> f64 {
    let s = if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    };
    s.clamp(C_MIN, C_MAX)
}

impl ConfidenceHead {
    /// All parameters zero, so `c = 0.5` for every input.
    pub fn zeros(dim: usize, hidden: usize) -> Self {
        Self {
            dim,
            hidden,
            w1: vec![0.0; hidden * dim],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden],
            b2: 0.0,
        }
    }

    /// Weights uniform in `+-1/sqrt(fan_in)`, biases zero.
    pub fn init<R: Rng + ?Sized>(dim: usize, hidden: usize, rng: &mut R) -> Self {
        let mut head = Self::zeros(dim, hidden);
        let s1 = 1.0 / (dim as f64).sqrt();
        let s2 = 1.0 / (hidden as f64).sqrt();
        head.w1.iter_mut().for_each(|w| *w = rng.random_range(-s1..s1));
        head.w2.iter_mut().for_each(|w| *w = rng.random_range(-s2..s2));
        head
    }

    pub fn parameter_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.hidden == 0 {
            return Err(AcwError::Config("head dimensions must be positive".into()));
        }
        if self.w1.len() != self.hidden * self.dim {
            return Err(AcwError::DimensionMismatch {
                expected: self.hidden * self.dim,
                actual: self.w1.len(),
            });
        }
        if self.b1.len() != self.hidden || self.w2.len() != self.hidden {
            return Err(AcwError::DimensionMismatch {
                expected: self.hidden,
                actual: self.b1.len().min(self.w2.len()),
            });
        }
        let finite = self.w1.iter().chain(&self.b1).chain(&self.w2).all(|v| v.is_finite());
        if !finite || !self.b2.is_finite() {
            return Err(AcwError::NonFinite("head parameters"));
        }
        Ok(())
    }

    /// Rescales `x` to norm `sqrt(D)`.
    pub fn normalize_input(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(AcwError::DimensionMismatch {
                expected: self.dim,
                actual: x.len(),
            });
        }
        let scale = (self.dim as f64).sqrt();
        Ok(super::unit(x)?.into_iter().map(|v| v * scale).collect())
    }

    pub fn forward(&self, x: &[f64]) -> Result<HeadActivation> {
        let input = self.normalize_input(x)?;
        let pre: Vec<f64> = self
            .w1
            .chunks_exact(self.dim)
            .zip(&self.b1)
            .map(|(row, b)| super::dot(row, &input) + b)
            .collect();
        let hidden: Vec<f64> = pre.iter().map(|&p| p.max(0.0)).collect();
        let logit = super::dot(&self.w2, &hidden) + self.b2;
        Ok(HeadActivation {
            input,
            pre,
            hidden,
            logit,
            confidence: sigmoid(logit),
        })
    }

    pub fn confidence(&self, x: &[f64]) -> Result<f64> {
        Ok(self.forward(x)?.confidence)
    }
}
