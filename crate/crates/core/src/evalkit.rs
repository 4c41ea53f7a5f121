//! Gallery/probe identification, rank-1 reporting and a synthetic
//! two-modality embedding protocol.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acw::{
    self, AcwError, ClassPrototypes, ConfidenceHead, EmbeddingSet, FusionResult, ProbeModality,
    ScoreGallery,
};

pub const TAG_CLEAN: &str = "clean";
pub const TAG_CORRUPTED_B: &str = "corrupted-B";
pub const MODALITY_A: &str = "rgb";
pub const MODALITY_B: &str = "depth";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Acw(#[from] AcwError),
    #[error("invalid protocol: {0}")]
    Protocol(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("no probe records")]
    Empty,
}

pub type Result<T> = std::result::Result<T, EvalError>;

#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub id: usize,
    pub label: u32,
    pub modalities: Vec<ProbeModality>,
    pub tag: String,
}

/// Per-modality gallery images plus labeled probes over `classes` identities.
#[derive(Debug, Clone, PartialEq)]
pub struct Protocol {
    pub classes: usize,
    /// Modality order used for fixed weights and reporting.
    pub modalities: Vec<String>,
    pub gallery: BTreeMap<String, EmbeddingSet>,
    pub probes: Vec<Probe>,
}

impl Protocol {
    /// Builds probes from index-aligned per-modality probe sets. A probe
    /// present in only some modalities can be expressed by building
    /// [`Probe`]s directly.
    pub fn from_sets(
        gallery: Vec<EmbeddingSet>,
        probes: Vec<EmbeddingSet>,
        tags: Option<Vec<String>>,
    ) -> Result<Self> {
        let first = probes
            .first()
            .ok_or_else(|| EvalError::Protocol("no probe modality".into()))?;
        let n = first.len();
        for p in &probes {
            if p.len() != n || p.labels != first.labels {
                return Err(AcwError::Misaligned(format!(
                    "probe sets '{}' and '{}' differ in count or labels",
                    first.modality, p.modality
                ))
                .into());
            }
        }
        let tags = tags.unwrap_or_else(|| vec!["all".to_string(); n]);
        if tags.len() != n {
            return Err(EvalError::Protocol(format!(
                "{} tags for {} probes",
                tags.len(),
                n
            )));
        }
        let classes = gallery
            .iter()
            .flat_map(|g| g.labels.iter())
            .chain(first.labels.iter())
            .map(|&l| l as usize + 1)
            .max()
            .unwrap_or(0);
        let probe_list = (0..n)
            .map(|i| Probe {
                id: i,
                label: first.labels[i],
                modalities: probes
                    .iter()
                    .map(|p| ProbeModality::new(p.modality.clone(), p.row_f64(i)))
                    .collect(),
                tag: tags[i].clone(),
            })
            .collect();
        let mut modalities: Vec<String> = gallery.iter().map(|g| g.modality.clone()).collect();
        for p in &probes {
            if !modalities.contains(&p.modality) {
                modalities.push(p.modality.clone());
            }
        }
        let protocol = Self {
            classes,
            modalities,
            gallery: gallery.into_iter().map(|g| (g.modality.clone(), g)).collect(),
            probes: probe_list,
        };
        protocol.validate()?;
        Ok(protocol)
    }

    pub fn validate(&self) -> Result<()> {
        let mut enrolled = vec![false; self.classes];
        for g in self.gallery.values() {
            for &l in &g.labels {
                let slot = enrolled.get_mut(l as usize).ok_or_else(|| {
                    EvalError::Protocol(format!("gallery label {l} >= class count {}", self.classes))
                })?;
                *slot = true;
            }
        }
        for p in &self.probes {
            if !enrolled.get(p.label as usize).copied().unwrap_or(false) {
                return Err(EvalError::Protocol(format!(
                    "probe {} has label {} with no gallery image",
                    p.id, p.label
                )));
            }
        }
        Ok(())
    }

    pub fn gallery_index(&self) -> Result<Gallery> {
        Gallery::new(self.classes, self.gallery.values())
    }
}

/// Unit-normalized gallery rows grouped by modality and identity.
#[derive(Debug, Clone, PartialEq)]
pub struct Gallery {
    classes: usize,
    rows: BTreeMap<String, (usize, Vec<(u32, Vec<f64>)>)>,
}

impl Gallery {
    pub fn new<'a>(classes: usize, sets: impl IntoIterator<Item = &'a EmbeddingSet>) -> Result<Self> {
        let mut rows = BTreeMap::new();
        for set in sets {
            let mut list = Vec::with_capacity(set.len());
            for i in 0..set.len() {
                if set.labels[i] as usize >= classes {
                    return Err(EvalError::Protocol(format!(
                        "gallery label {} >= class count {classes}",
                        set.labels[i]
                    )));
                }
                list.push((set.labels[i], acw::unit(&set.row_f64(i))?));
            }
            rows.insert(set.modality.clone(), (set.dim, list));
        }
        Ok(Self { classes, rows })
    }
}

/// Similarity given to identities without any gallery image in the modality.
pub const MISSING_IDENTITY_SCORE: f64 = -1.0;

/// `s_i` = the best cosine between the probe and identity `i`'s gallery
/// images in `modality`.
pub fn per_identity_similarity(probe: &[f64], gallery: &Gallery, modality: &str) -> Result<Vec<f64>> {
    let (dim, rows) = gallery.rows.get(modality).ok_or_else(|| AcwError::MissingModality {
        what: "gallery",
        modality: modality.to_string(),
    })?;
    if probe.len() != *dim {
        return Err(AcwError::DimensionMismatch {
            expected: *dim,
            actual: probe.len(),
        }
        .into());
    }
    let u = acw::unit(probe)?;
    let mut s = vec![f64::NEG_INFINITY; gallery.classes];
    for (label, row) in rows {
        let v = acw::dot(row, &u);
        let slot = &mut s[*label as usize];
        if v > *slot {
            *slot = v;
        }
    }
    s.iter_mut()
        .filter(|v| **v == f64::NEG_INFINITY)
        .for_each(|v| *v = MISSING_IDENTITY_SCORE);
    Ok(s)
}

impl ScoreGallery for Gallery {
    fn classes(&self) -> usize {
        self.classes
    }

    fn similarities(&self, modality: &str, probe: &[f64]) -> acw::Result<Vec<f64>> {
        per_identity_similarity(probe, self, modality).map_err(|e| match e {
            EvalError::Acw(a) => a,
            other => AcwError::Config(other.to_string()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// Learned confidences from one head per modality.
    Acw,
    /// Constant weights in protocol modality order; zero-weight modalities
    /// are left out entirely.
    Fixed(Vec<f64>),
    /// One modality alone with weight 1.
    Single(String),
}

impl std::fmt::Display for FusionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FusionMode::Acw => write!(f, "acw"),
            FusionMode::Fixed(w) => {
                let w: Vec<String> = w.iter().map(|v| v.to_string()).collect();
                write!(f, "fixed({})", w.join(","))
            }
            FusionMode::Single(m) => write!(f, "single({m})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub id: usize,
    pub label: u32,
    pub prediction: usize,
    /// Weight used per participating modality (confidence in acw mode).
    pub confidences: BTreeMap<String, f64>,
    pub margin: f64,
    pub tag: String,
}

impl ProbeRecord {
    pub fn correct(&self) -> bool {
        self.prediction == self.label as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetStats {
    pub count: usize,
    pub correct: usize,
    pub rank1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: serde_json::Value,
    pub overall_rank1: f64,
    pub subsets: BTreeMap<String, SubsetStats>,
    pub probes: Vec<ProbeRecord>,
}

/// `100 * correct / total`.
pub fn rank1(records: &[ProbeRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(EvalError::Empty);
    }
    let correct = records.iter().filter(|r| r.correct()).count();
    Ok(100.0 * correct as f64 / records.len() as f64)
}

impl EvalReport {
    pub fn from_records(config: serde_json::Value, probes: Vec<ProbeRecord>) -> Result<Self> {
        let overall_rank1 = rank1(&probes)?;
        let mut subsets: BTreeMap<String, SubsetStats> = BTreeMap::new();
        for r in &probes {
            let s = subsets.entry(r.tag.clone()).or_insert(SubsetStats {
                count: 0,
                correct: 0,
                rank1: 0.0,
            });
            s.count += 1;
            s.correct += r.correct() as usize;
        }
        for s in subsets.values_mut() {
            s.rank1 = 100.0 * s.correct as f64 / s.count as f64;
        }
        Ok(Self {
            config,
            overall_rank1,
            subsets,
            probes,
        })
    }

    /// Mean weight of `modality` over probes carrying `tag`.
    pub fn mean_confidence(&self, modality: &str, tag: Option<&str>) -> Option<f64> {
        let v: Vec<f64> = self
            .probes
            .iter()
            .filter(|p| tag.is_none_or(|t| p.tag == t))
            .filter_map(|p| p.confidences.get(modality).copied())
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<16} {:>8} {:>8} {:>11}", "subset", "probes", "correct", "rank-1 (%)");
        for (tag, s) in &self.subsets {
            let _ = writeln!(out, "{:<16} {:>8} {:>8} {:>11.2}", tag, s.count, s.correct, s.rank1);
        }
        let total: usize = self.subsets.values().map(|s| s.count).sum();
        let correct: usize = self.subsets.values().map(|s| s.correct).sum();
        let _ = writeln!(out, "{:<16} {:>8} {:>8} {:>11.2}", "overall", total, correct, self.overall_rank1);
        out
    }
}

fn record(probe: &Probe, r: FusionResult) -> ProbeRecord {
    ProbeRecord {
        id: probe.id,
        label: probe.label,
        prediction: r.prediction,
        confidences: r.modalities.into_iter().map(|m| (m.modality, m.weight)).collect(),
        margin: r.margin,
        tag: probe.tag.clone(),
    }
}

/// Identifies every probe under `mode` and aggregates rank-1 rates.
pub fn evaluate(
    protocol: &Protocol,
    heads: Option<&BTreeMap<String, ConfidenceHead>>,
    mode: &FusionMode,
) -> Result<EvalReport> {
    let gallery = protocol.gallery_index()?;
    let fixed: BTreeMap<&str, f64> = match mode {
        FusionMode::Fixed(w) => {
            if w.len() != protocol.modalities.len() {
                return Err(EvalError::Config(format!(
                    "{} fixed weights for {} modalities",
                    w.len(),
                    protocol.modalities.len()
                )));
            }
            check_weights(w)?;
            protocol.modalities.iter().map(|m| m.as_str()).zip(w.iter().copied()).collect()
        }
        _ => BTreeMap::new(),
    };
    let heads = match (mode, heads) {
        (FusionMode::Acw, None) => {
            return Err(EvalError::Config("acw mode needs confidence heads".into()))
        }
        (_, h) => h,
    };

    let records: Vec<Result<ProbeRecord>> = protocol
        .probes
        .par_iter()
        .map(|probe| {
            let present: Vec<ProbeModality> = match mode {
                FusionMode::Acw => probe.modalities.clone(),
                FusionMode::Fixed(_) => probe
                    .modalities
                    .iter()
                    .filter(|m| fixed.get(m.modality.as_str()).is_some_and(|&w| w > 0.0))
                    .cloned()
                    .collect(),
                FusionMode::Single(name) => probe
                    .modalities
                    .iter()
                    .filter(|m| &m.modality == name)
                    .cloned()
                    .collect(),
            };
            let r = match mode {
                FusionMode::Acw => acw::identify(&present, &gallery, heads.unwrap())?,
                FusionMode::Fixed(_) => {
                    acw::identify_weighted(&present, &gallery, |m| Ok(fixed[m.modality.as_str()]))?
                }
                FusionMode::Single(_) => acw::identify_weighted(&present, &gallery, |_| Ok(1.0))?,
            };
            Ok(record(probe, r))
        })
        .collect();
    let records = records.into_iter().collect::<Result<Vec<_>>>()?;
    EvalReport::from_records(serde_json::json!({ "mode": mode.to_string() }), records)
}

fn check_weights(w: &[f64]) -> Result<()> {
    if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) || w.iter().all(|&v| v == 0.0) {
        return Err(EvalError::Config(format!(
            "fixed weights must be finite, non-negative and not all zero: {w:?}"
        )));
    }
    Ok(())
}

/// Proportional fusion with constant weights: `s_i = sum_j w_j * s^j_i`.
pub fn baseline_fixed_fusion(similarities: &[&[f64]], weights: &[f64]) -> Result<Vec<f64>> {
    check_weights(weights)?;
    Ok(acw::fuse(similarities, weights)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    pub n_classes: usize,
    pub dim: usize,
    pub samples_per_class: usize,
    pub sigma_clean: f64,
    pub sigma_corrupt: f64,
    pub corrupt_fraction: f64,
    pub seed: u64,
    /// Corrupted modality-B samples also shift by
    /// `(sigma_corrupt - sigma_clean) * corrupt_drift` along a fixed unit
    /// direction, so corruption changes where features point and not only
    /// how much they scatter.
    pub corrupt_drift: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            n_classes: 50,
            dim: 64,
            samples_per_class: 20,
            sigma_clean: 0.15,
            sigma_corrupt: 1.5,
            corrupt_fraction: 0.3,
            seed: 7,
            corrupt_drift: 8.0,
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(EvalError::Config(m));
        if self.n_classes == 0 || self.dim == 0 || self.samples_per_class == 0 {
            return bad("n_classes, dim and samples_per_class must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.corrupt_fraction) {
            return bad(format!("corrupt_fraction {} is outside [0, 1]", self.corrupt_fraction));
        }
        for (name, v) in [
            ("sigma_clean", self.sigma_clean),
            ("sigma_corrupt", self.sigma_corrupt),
            ("corrupt_drift", self.corrupt_drift),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        Ok(())
    }
}

/// A generated toy protocol with its aligned training split.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyData {
    pub protocol: Protocol,
    /// `[A, B]`, index-aligned with identical labels.
    pub train: Vec<EmbeddingSet>,
    /// Gallery rows, one per class, in modality order `[A, B]`.
    pub prototypes: Vec<ClassPrototypes>,
    pub train_tags: Vec<String>,
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn unit_rows(v: &mut [f64], dim: usize) {
    for row in v.chunks_exact_mut(dim) {
        let n = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            row.iter_mut().for_each(|x| *x /= n);
        }
    }
}

struct Split {
    labels: Vec<u32>,
    a: Vec<f32>,
    b: Vec<f32>,
    tags: Vec<String>,
}

fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

/// Draws one sample around the class mean, retrying the (measure-zero)
/// case of an exactly zero vector.
fn sample_row(rng: &mut ChaCha8Rng, mean: &[f64], sigma: f64, shift: &[f64]) -> Vec<f64> {
    loop {
        let noise = gaussian(rng, mean.len());
        let mut row: Vec<f64> = (0..mean.len())
            .map(|d| mean[d] + sigma * noise[d] + shift[d])
            .collect();
        let n = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            row.iter_mut().for_each(|x| *x /= n);
            if row.iter().any(|&x| x as f32 != 0.0) {
                return row;
            }
        }
    }
}

fn draw_split(
    rng: &mut ChaCha8Rng,
    cfg: &ToyConfig,
    mu_a: &[f64],
    mu_b: &[f64],
    drift_dir: &[f64],
) -> Split {
    let (c, d, per) = (cfg.n_classes, cfg.dim, cfg.samples_per_class);
    let n = c * per;
    let labels: Vec<u32> = (0..n).map(|k| (k / per) as u32).collect();
    let mut corrupted = vec![false; n];
    let k = (cfg.corrupt_fraction * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order[..k].iter().for_each(|&i| corrupted[i] = true);

    let zero = vec![0.0; d];
    let shift_mag = (cfg.sigma_corrupt - cfg.sigma_clean) * cfg.corrupt_drift;
    let shift: Vec<f64> = drift_dir.iter().map(|v| v * shift_mag).collect();
    let (mut a, mut b, mut tags) = (Vec::with_capacity(n * d), Vec::with_capacity(n * d), Vec::new());
    for i in 0..n {
        let y = labels[i] as usize;
        a.extend(to_f32(&sample_row(rng, &mu_a[y * d..(y + 1) * d], cfg.sigma_clean, &zero)));
        let (sigma, sh, tag) = if corrupted[i] {
            (cfg.sigma_corrupt, &shift, TAG_CORRUPTED_B)
        } else {
            (cfg.sigma_clean, &zero, TAG_CLEAN)
        };
        b.extend(to_f32(&sample_row(rng, &mu_b[y * d..(y + 1) * d], sigma, sh)));
        tags.push(tag.to_string());
    }
    Split { labels, a, b, tags }
}

/// Seeded two-modality embeddings: class means uniform on the sphere,
/// samples are normalized `mean + noise`, and a `corrupt_fraction` of
/// modality-B samples use the corrupt noise level.
pub fn synth_toy_embeddings(cfg: &ToyConfig) -> Result<ToyData> {
    cfg.validate()?;
    let (c, d) = (cfg.n_classes, cfg.dim);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut mu_a = gaussian(&mut rng, c * d);
    let mut mu_b = gaussian(&mut rng, c * d);
    unit_rows(&mut mu_a, d);
    unit_rows(&mut mu_b, d);
    let mut drift_dir = gaussian(&mut rng, d);
    unit_rows(&mut drift_dir, d);

    let zero = vec![0.0; d];
    let mut gal_a = Vec::with_capacity(c * d);
    let mut gal_b = Vec::with_capacity(c * d);
    for y in 0..c {
        gal_a.extend(sample_row(&mut rng, &mu_a[y * d..(y + 1) * d], cfg.sigma_clean, &zero));
        gal_b.extend(sample_row(&mut rng, &mu_b[y * d..(y + 1) * d], cfg.sigma_clean, &zero));
    }
    let (gal_a, gal_b) = (to_f32(&gal_a), to_f32(&gal_b));
    let gallery_labels: Vec<u32> = (0..c as u32).collect();
    let gallery = vec![
        EmbeddingSet::new(MODALITY_A, d, gallery_labels.clone(), gal_a)?,
        EmbeddingSet::new(MODALITY_B, d, gallery_labels, gal_b)?,
    ];
    let prototypes = gallery
        .iter()
        .map(|g| {
            ClassPrototypes::new(d, g.vectors.iter().map(|&v| v as f64).collect())
                .map_err(EvalError::from)
        })
        .collect::<Result<Vec<_>>>()?;

    let test = draw_split(&mut rng, cfg, &mu_a, &mu_b, &drift_dir);
    let train = draw_split(&mut rng, cfg, &mu_a, &mu_b, &drift_dir);
    let probes = vec![
        EmbeddingSet::new(MODALITY_A, d, test.labels.clone(), test.a)?,
        EmbeddingSet::new(MODALITY_B, d, test.labels, test.b)?,
    ];
    let protocol = Protocol::from_sets(gallery, probes, Some(test.tags))?;
    Ok(ToyData {
        protocol,
        train: vec![
            EmbeddingSet::new(MODALITY_A, d, train.labels.clone(), train.a)?,
            EmbeddingSet::new(MODALITY_B, d, train.labels, train.b)?,
        ],
        prototypes,
        train_tags: train.tags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(modality: &str, labels: Vec<u32>, rows: &[[f32; 3]]) -> EmbeddingSet {
        EmbeddingSet::new(modality, 3, labels, rows.iter().flatten().copied().collect()).unwrap()
    }

    #[test]
    fn max_pooling_over_gallery_images() {
        let g = set("rgb", vec![0, 0, 1], &[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        let gallery = Gallery::new(3, [&g]).unwrap();
        let s = per_identity_similarity(&[0.0, 2.0, 0.0], &gallery, "rgb").unwrap();
        assert_eq!(s[0], 1.0);
        assert_eq!(s[1], 0.0);
        assert_eq!(s[2], MISSING_IDENTITY_SCORE);
        let dup = set(
            "rgb",
            vec![0, 0, 1, 1],
            &[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 1.0]],
        );
        let dgal = Gallery::new(3, [&dup]).unwrap();
        for p in [[0.3, -0.2, 0.9], [1.0, 1.0, 1.0]] {
            assert_eq!(
                per_identity_similarity(&p, &gallery, "rgb").unwrap(),
                per_identity_similarity(&p, &dgal, "rgb").unwrap()
            );
        }
        assert!(matches!(
            per_identity_similarity(&[1.0, 0.0, 0.0], &gallery, "depth"),
            Err(EvalError::Acw(AcwError::MissingModality { .. }))
        ));
    }

    #[test]
    fn single_image_gallery_matches_cosine_logits() {
        let rows = [[0.3f32, -1.0, 2.0], [1.5, 0.5, -0.25], [0.0, 0.0, 4.0]];
        let g = set("rgb", vec![0, 1, 2], &rows);
        let gallery = Gallery::new(3, [&g]).unwrap();
        let protos = ClassPrototypes::new(3, g.vectors.iter().map(|&v| v as f64).collect()).unwrap();
        let x = [0.7, 0.1, -0.4];
        assert_eq!(
            per_identity_similarity(&x, &gallery, "rgb").unwrap(),
            acw::cosine_logits(&protos, &x).unwrap()
        );
    }

    #[test]
    fn rank1_counts() {
        let rec = |label: u32, prediction: usize| ProbeRecord {
            id: 0,
            label,
            prediction,
            confidences: BTreeMap::new(),
            margin: 0.0,
            tag: "all".into(),
        };
        assert_eq!(rank1(&[rec(1, 1), rec(2, 2)]).unwrap(), 100.0);
        assert_eq!(rank1(&[rec(0, 0), rec(1, 1), rec(2, 2), rec(3, 0)]).unwrap(), 75.0);
        assert!(matches!(rank1(&[]), Err(EvalError::Empty)));
    }

    #[test]
    fn fixed_baseline_rules() {
        let sims: [&[f64]; 2] = [&[0.9, 0.1], &[0.2, 0.8]];
        let f = baseline_fixed_fusion(&sims, &[1.0, 1.0]).unwrap();
        assert!((f[0] - 1.1).abs() < 1e-15 && (f[1] - 0.9).abs() < 1e-15);
        let half = baseline_fixed_fusion(&sims, &[0.5, 0.5]).unwrap();
        assert_eq!(acw::argmax(&half), acw::argmax(&f));
        assert_eq!(
            baseline_fixed_fusion(&sims, &[0.3, 0.7]).unwrap(),
            acw::fuse(&sims, &[0.3, 0.7]).unwrap()
        );
        assert!(baseline_fixed_fusion(&sims, &[0.0, 0.0]).is_err());
        assert!(baseline_fixed_fusion(&sims, &[-1.0, 2.0]).is_err());
        assert!(baseline_fixed_fusion(&sims, &[1.0]).is_err());
    }

    fn small_toy(frac: f64, sigma_corrupt: f64) -> ToyData {
        synth_toy_embeddings(&ToyConfig {
            n_classes: 10,
            dim: 16,
            samples_per_class: 6,
            corrupt_fraction: frac,
            sigma_corrupt,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn toy_generator_shapes_and_tags() {
        let t = small_toy(0.3, 1.5);
        assert_eq!(t.protocol.probes.len(), 60);
        assert_eq!(t.protocol.classes, 10);
        assert_eq!(t.protocol.modalities, vec!["rgb", "depth"]);
        let corrupted = t.protocol.probes.iter().filter(|p| p.tag == TAG_CORRUPTED_B).count();
        assert_eq!(corrupted, 18);
        assert_eq!(t.train_tags.iter().filter(|t| *t == TAG_CORRUPTED_B).count(), 18);
        assert_eq!(t.train[0].labels, t.train[1].labels);
        assert_eq!(t.prototypes[1].classes, 10);
        assert_eq!(small_toy(0.3, 1.5), t);
        assert!(small_toy(0.0, 1.5).protocol.probes.iter().all(|p| p.tag == TAG_CLEAN));
        for bad in [-0.1, 1.5] {
            assert!(synth_toy_embeddings(&ToyConfig { corrupt_fraction: bad, ..Default::default() }).is_err());
        }
    }

    #[test]
    fn fixed_one_zero_equals_single_rgb() {
        let t = small_toy(0.3, 1.5);
        let fixed = evaluate(&t.protocol, None, &FusionMode::Fixed(vec![1.0, 0.0])).unwrap();
        let single = evaluate(&t.protocol, None, &FusionMode::Single("rgb".into())).unwrap();
        assert_eq!(fixed.probes, single.probes);
        assert_eq!(fixed.subsets, single.subsets);
        assert_eq!(fixed.overall_rank1, single.overall_rank1);
    }

    #[test]
    fn clean_toy_is_perfectly_separable() {
        let t = synth_toy_embeddings(&ToyConfig {
            corrupt_fraction: 0.0,
            sigma_clean: 0.05,
            ..Default::default()
        })
        .unwrap();
        let heads: BTreeMap<String, ConfidenceHead> = t
            .protocol
            .modalities
            .iter()
            .map(|m| (m.clone(), ConfidenceHead::zeros(64, 4)))
            .collect();
        for mode in [
            FusionMode::Acw,
            FusionMode::Fixed(vec![1.0, 1.0]),
            FusionMode::Single("rgb".into()),
            FusionMode::Single("depth".into()),
        ] {
            let r = evaluate(&t.protocol, Some(&heads), &mode).unwrap();
            assert_eq!(r.overall_rank1, 100.0, "{mode}");
        }
        let r = evaluate(&t.protocol, Some(&heads), &FusionMode::Acw).unwrap();
        assert!(r.probes.iter().all(|p| p.confidences.len() == 2));
    }

    #[test]
    fn report_decomposes_and_ignores_probe_order() {
        let t = small_toy(0.5, 3.0);
        let r = evaluate(&t.protocol, None, &FusionMode::Fixed(vec![1.0, 1.0])).unwrap();
        let correct: usize = r.subsets.values().map(|s| s.correct).sum();
        assert_eq!(correct, r.probes.iter().filter(|p| p.correct()).count());
        let weighted: f64 = r.subsets.values().map(|s| s.rank1 * s.count as f64).sum::<f64>()
            / r.probes.len() as f64;
        assert!((weighted - r.overall_rank1).abs() < 1e-9);

        let mut shuffled = t.protocol.clone();
        shuffled.probes.reverse();
        let r2 = evaluate(&shuffled, None, &FusionMode::Fixed(vec![1.0, 1.0])).unwrap();
        assert_eq!(r2.overall_rank1, r.overall_rank1);
        assert_eq!(r2.subsets, r.subsets);

        let table = r.to_table();
        assert!(table.contains("overall") && table.contains(TAG_CORRUPTED_B));
        let json = serde_json::to_value(&r).unwrap();
        for key in ["config", "overall_rank1", "subsets", "probes"] {
            assert!(json.get(key).is_some());
        }
        for key in ["id", "label", "prediction", "confidences", "margin", "tag"] {
            assert!(json["probes"][0].get(key).is_some());
        }
    }

    #[test]
    fn protocol_validation() {
        let g = set("rgb", vec![0, 1], &[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        let p = set("rgb", vec![2], &[[1.0, 0.0, 0.0]]);
        assert!(matches!(
            Protocol::from_sets(vec![g.clone()], vec![p], None),
            Err(EvalError::Protocol(_))
        ));
        let p = set("rgb", vec![1], &[[1.0, 0.0, 0.0]]);
        let proto = Protocol::from_sets(vec![g], vec![p], None).unwrap();
        assert!(matches!(
            evaluate(&proto, None, &FusionMode::Acw),
            Err(EvalError::Config(_))
        ));
        assert!(matches!(
            evaluate(&proto, None, &FusionMode::Fixed(vec![1.0, 1.0])),
            Err(EvalError::Config(_))
        ));
        assert!(matches!(
            evaluate(&proto, None, &FusionMode::Single("depth".into())),
            Err(EvalError::Acw(AcwError::NoModalities))
        ));
    }
}
