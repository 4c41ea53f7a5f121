use super::{AcwError, Result};

/// Labeled embeddings of one modality, stored row-major as `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub modality: String,
    pub dim: usize,
    pub labels: Vec<u32>,
    pub vectors: Vec<f32>,
}

impl EmbeddingSet {
    /// Checks shape, finiteness and nonzero norm of every row.
    pub fn new(
        modality: impl Into<String>,
        dim: usize,
        labels: Vec<u32>,
        vectors: Vec<f32>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(AcwError::Config("embedding dimension must be positive".into()));
        }
        if vectors.len() != labels.len() * dim {
            return Err(AcwError::DimensionMismatch {
                expected: labels.len() * dim,
                actual: vectors.len(),
            });
        }
        for row in vectors.chunks_exact(dim) {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(AcwError::NonFinite("embedding"));
            }
            if row.iter().all(|&v| v == 0.0) {
                return Err(AcwError::ZeroNorm);
            }
        }
        Ok(Self {
            modality: modality.into(),
            dim,
            labels,
            vectors,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_f64(&self, i: usize) -> Vec<f64> {
        self.row(i).iter().map(|&v| v as f64).collect()
    }

    pub fn rows_f64(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.row_f64(i)).collect()
    }
}

/// One modality's embedding of a probe.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeModality {
    pub modality: String,
    pub vector: Vec<f64>,
}

impl ProbeModality {
    pub fn new(modality: impl Into<String>, vector: Vec<f64>) -> Self {
        Self {
            modality: modality.into(),
            vector,
        }
    }
}
