use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::loss::{cosine_logits, ClassPrototypes};
use super::{AcwError, ConfidenceHead, ProbeModality, Result};

/// `s_i = sum_j c_j * s^j_i`, accumulated in modality order.
pub fn fuse(similarities: &[&[f64]], confidences: &[f64]) -> Result<Vec<f64>> {
    let first = similarities.first().ok_or(AcwError::NoModalities)?;
    if confidences.len() != similarities.len() {
        return Err(AcwError::DimensionMismatch {
            expected: similarities.len(),
            actual: confidences.len(),
        });
    }
    let mut fused = vec![0.0; first.len()];
    for (s, &c) in similarities.iter().zip(confidences) {
        if s.len() != fused.len() {
            return Err(AcwError::ClassMismatch {
                expected: fused.len(),
                actual: s.len(),
            });
        }
        fused.iter_mut().zip(s.iter()).for_each(|(f, v)| *f += c * v);
    }
    Ok(fused)
}

/// Index of the largest score; ties go to the lowest index, NaN never wins.
pub fn argmax(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        match best {
            _ if s.is_nan() => {}
            None => best = Some(i),
            Some(b) if s > scores[b] => best = Some(i),
            _ => {}
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityScore {
    pub modality: String,
    pub similarities: Vec<f64>,
    /// The learned confidence, or the constant weight in fixed fusion.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionResult {
    pub modalities: Vec<ModalityScore>,
    pub fused: Vec<f64>,
    pub prediction: usize,
    /// Fused score of the prediction minus the best other score (0 with one class).
    pub margin: f64,
}

impl FusionResult {
    pub fn weight(&self, modality: &str) -> Option<f64> {
        self.modalities
            .iter()
            .find(|m| m.modality == modality)
            .map(|m| m.weight)
    }
}

/// Per-class similarity lookup for a probe in one modality.
pub trait ScoreGallery {
    fn classes(&self) -> usize;
    fn similarities(&self, modality: &str, probe: &[f64]) -> Result<Vec<f64>>;
}

/// One prototype row per class per modality.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PrototypeGallery {
    pub modalities: BTreeMap<String, ClassPrototypes>,
}

impl PrototypeGallery {
    pub fn insert(&mut self, modality: impl Into<String>, prototypes: ClassPrototypes) {
        self.modalities.insert(modality.into(), prototypes);
    }
}

impl ScoreGallery for PrototypeGallery {
    fn classes(&self) -> usize {
        self.modalities.values().map(|p| p.classes).max().unwrap_or(0)
    }

    fn similarities(&self, modality: &str, probe: &[f64]) -> Result<Vec<f64>> {
        let p = self
            .modalities
            .get(modality)
            .ok_or_else(|| AcwError::MissingModality {
                what: "gallery",
                modality: modality.to_string(),
            })?;
        cosine_logits(p, probe)
    }
}

/// Fuses the available modalities of one probe with weights from `weight`.
pub fn identify_weighted<G, F>(probe: &[ProbeModality], gallery: &G, mut weight: F) -> Result<FusionResult>
where
    G: ScoreGallery + ?Sized,
    F: FnMut(&ProbeModality) -> Result<f64>,
{
    if probe.is_empty() {
        return Err(AcwError::NoModalities);
    }
    let mut modalities = Vec::with_capacity(probe.len());
    for m in probe {
        modalities.push(ModalityScore {
            modality: m.modality.clone(),
            similarities: gallery.similarities(&m.modality, &m.vector)?,
            weight: weight(m)?,
        });
    }
    let sims: Vec<&[f64]> = modalities.iter().map(|m| m.similarities.as_slice()).collect();
    let weights: Vec<f64> = modalities.iter().map(|m| m.weight).collect();
    let fused = fuse(&sims, &weights)?;
    let prediction = argmax(&fused).ok_or(AcwError::Empty)?;
    let runner_up = fused
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != prediction)
        .map(|(_, &s)| s)
        .fold(f64::NEG_INFINITY, f64::max);
    let margin = if runner_up.is_finite() {
        fused[prediction] - runner_up
    } else {
        0.0
    };
    Ok(FusionResult {
        modalities,
        fused,
        prediction,
        margin,
    })
}

/// Confidence-weighted identification: each present modality is scored
/// against the gallery and weighted by its head's confidence.
pub fn identify<G: ScoreGallery + ?Sized>(
    probe: &[ProbeModality],
    gallery: &G,
    heads: &BTreeMap<String, ConfidenceHead>,
) -> Result<FusionResult> {
    identify_weighted(probe, gallery, |m| {
        heads
            .get(&m.modality)
            .ok_or_else(|| AcwError::MissingModality {
                what: "confidence head",
                modality: m.modality.clone(),
            })?
            .confidence(&m.vector)
    })
}
