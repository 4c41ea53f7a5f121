use super::{AcwError, Result};

/// Classifier rows initialized from each class's neutral feature.
///
/// Rows are kept unit-norm, so a logit is the cosine between the input and
/// the class row. `frozen` prototypes receive no updates during training.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassPrototypes {
    pub classes: usize,
    pub dim: usize,
    rows: Vec<f64>,
    pub frozen: bool,
}

impl ClassPrototypes {
    /// Normalizes each of the `rows.len() / dim` rows.
    pub fn new(dim: usize, rows: Vec<f64>) -> Result<Self> {
        if dim == 0 || rows.is_empty() || rows.len() % dim != 0 {
            return Err(AcwError::DimensionMismatch {
                expected: dim.max(1) * (rows.len() / dim.max(1)).max(1),
                actual: rows.len(),
            });
        }
        let mut out = Vec::with_capacity(rows.len());
        for row in rows.chunks_exact(dim) {
            out.extend(super::unit(row)?);
        }
        Ok(Self {
            classes: out.len() / dim,
            dim,
            rows: out,
            frozen: true,
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut flat = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(AcwError::DimensionMismatch {
                    expected: dim,
                    actual: r.len(),
                });
            }
            flat.extend_from_slice(r);
        }
        Self::new(dim, flat)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> &[f64] {
        &self.rows
    }

    /// Takes a gradient step on the rows and renormalizes them. Cosine
    /// logits do not depend on row length, so renormalizing keeps the model
    /// function unchanged while holding the unit-norm invariant.
    pub(crate) fn step(&mut self, grad: &[f64], lr: f64) -> Result<()> {
        let mut rows: Vec<f64> = self.rows.iter().zip(grad).map(|(r, g)| r - lr * g).collect();
        for row in rows.chunks_exact_mut(self.dim) {
            let unit = super::unit(row)?;
            row.copy_from_slice(&unit);
        }
        self.rows = rows;
        Ok(())
    }
}

/// `z_i = cos(x, prototype_i)`.
pub fn cosine_logits(prototypes: &ClassPrototypes, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != prototypes.dim {
        return Err(AcwError::DimensionMismatch {
            expected: prototypes.dim,
            actual: x.len(),
        });
    }
    let u = super::unit(x)?;
    Ok((0..prototypes.classes)
        .map(|i| super::dot(prototypes.row(i), &u))
        .collect())
}

/// `z'_i = c * z_i + (1 - c) * [i == y]`.
pub fn interpolate_logits(z: &[f64], y: usize, c: f64) -> Vec<f64> {
    z.iter()
        .enumerate()
        .map(|(i, &zi)| {
            let target = if i == y { 1.0 } else { 0.0 };
            // the endpoints must hold exactly, so avoid 0 * z and 1 * z drift
            if c == 1.0 {
                zi
            } else if c == 0.0 {
                target
            } else {
                c * zi + (1.0 - c) * target
            }
        })
        .collect()
}

pub fn softmax(logits: &[f64], tau: f64) -> Vec<f64> {
    let m = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let e: Vec<f64> = logits.iter().map(|&z| (tau * (z - m)).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Cross-entropy `-log softmax(tau * z')_y`, stabilized by log-sum-exp.
pub fn task_loss(z_interp: &[f64], y: usize, tau: f64) -> f64 {
    let scaled: Vec<f64> = z_interp.iter().map(|&z| tau * z).collect();
    let m = scaled.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let lse = m + scaled.iter().map(|&s| (s - m).exp()).sum::<f64>().ln();
    lse - scaled[y]
}

/// `-log c`.
pub fn confidence_loss(c: f64) -> f64 {
    -c.ln()
}

/// Logits, label and confidence of one modality for one sample.
#[derive(Debug, Clone, Copy)]
pub struct ModalityTerm<'a> {
    pub logits: &'a [f64],
    pub label: usize,
    pub confidence: f64,
}

/// Sum over modalities of `task_loss(interpolated) + lambda * confidence_loss`.
pub fn total_loss(terms: &[ModalityTerm<'_>], lambda: f64, tau: f64) -> f64 {
    terms
        .iter()
        .map(|t| {
            let zi = interpolate_logits(t.logits, t.label, t.confidence);
            task_loss(&zi, t.label, tau) + lambda * confidence_loss(t.confidence)
        })
        .sum()
}
