//! Parallel virtual dataset generation: identities x expressions x poses.
//!
//! Every identity draws from its own generator seeded by
//! [`child_seed`]`(seed, identity)`, so the written files do not depend on
//! the number of worker threads or on completion order.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model3d::{self, ModelError, MorphableModel, ShapeCoefficients};
use crate::render::normals::{self, NormalMap};
use crate::render::pnm::{self, PnmError};
use crate::render::{depth_to_normals, render_depth, CameraError, HemisphereRig};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("model error: {0}")]
    Model(#[from] ModelError),
    #[error("camera error: {0}")]
    Camera(#[from] CameraError),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("i/o error at {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("generation aborted after {} complete entries: {source}", partial.entries.len())]
    Aborted {
        partial: Box<Manifest>,
        source: Box<DatagenError>,
    },
    #[error("manifest error: {0}")]
    Manifest(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DatagenError + '_ {
    move |source| DatagenError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub n_identities: usize,
    pub n_random_expressions: usize,
    pub cameras: HemisphereRig,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub trunc: f64,
}

impl GenConfig {
    pub fn new(out_dir: impl Into<PathBuf>, seed: u64) -> Self {
        Self {
            n_identities: 10,
            n_random_expressions: 40,
            cameras: HemisphereRig::default(),
            seed,
            out_dir: out_dir.into(),
            trunc: 3.0,
        }
    }

    pub fn images_per_identity(&self) -> usize {
        (1 + self.n_random_expressions) * self.cameras.len()
    }

    pub fn expected_total(&self) -> usize {
        self.n_identities * self.images_per_identity()
    }

    fn validate(&self) -> Result<(), DatagenError> {
        if !(self.trunc > 0.0) {
            return Err(DatagenError::Config(format!(
                "trunc must be positive, got {}",
                self.trunc
            )));
        }
        if self.cameras.is_empty() {
            return Err(DatagenError::Config("camera grid is empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub identity_id: usize,
    pub expression_id: usize,
    pub pose_id: usize,
    /// Relative to the manifest directory.
    pub depth_path: String,
    pub normal_path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: GenConfig,
    pub entries: Vec<ManifestEntry>,
    pub total_count: usize,
}

impl Manifest {
    pub fn validate(&self) -> Result<(), DatagenError> {
        if self.entries.len() != self.total_count {
            return Err(DatagenError::Manifest(format!(
                "total_count is {} but the manifest lists {} entries",
                self.total_count,
                self.entries.len()
            )));
        }
        Ok(())
    }
}

/// Mixes a master seed and an identity index into an independent child seed.
pub fn child_seed(seed: u64, identity: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ identity.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn entry_stem(identity: usize, expression: usize, pose: usize) -> String {
    format!("id_{identity:05}/e{expression:02}_p{pose:02}")
}

/// Coefficients used for one identity: the identity vector, the neutral
/// expression (all zeros) and the random expressions in generation order.
pub fn identity_coefficients(
    model: &MorphableModel,
    config: &GenConfig,
    identity: usize,
) -> Vec<ShapeCoefficients> {
    let mut rng = ChaCha8Rng::seed_from_u64(child_seed(config.seed, identity as u64));
    let alpha_id = model3d::sample_identity(&mut rng, model, config.trunc);
    let mut out = Vec::with_capacity(1 + config.n_random_expressions);
    out.push(ShapeCoefficients {
        alpha_id: alpha_id.clone(),
        alpha_exp: vec![0.0; model.exp_dim()],
    });
    for _ in 0..config.n_random_expressions {
        out.push(ShapeCoefficients {
            alpha_id: alpha_id.clone(),
            alpha_exp: model3d::sample_expression(&mut rng, model, config.trunc),
        });
    }
    out
}

/// Renders and writes every image of one identity.
pub fn generate_identity(
    model: &MorphableModel,
    config: &GenConfig,
    identity: usize,
) -> Result<Vec<ManifestEntry>, DatagenError> {
    let cameras = config.cameras.cameras(model.mean_centroid())?;
    let dir = config.out_dir.join(format!("id_{identity:05}"));
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let comment = format!(
        "depthforge seed={} identity={} child_seed={}",
        config.seed,
        identity,
        child_seed(config.seed, identity as u64)
    );
    let mut entries = Vec::with_capacity(config.images_per_identity());
    for (expression, coeffs) in identity_coefficients(model, config, identity)
        .iter()
        .enumerate()
    {
        let mesh = model3d::synthesize_shape(model, coeffs)?;
        for (pose, cam) in cameras.iter().enumerate() {
            let depth = render_depth(&mesh, cam);
            let normals = depth_to_normals(&depth, &cam.intrinsics);
            let stem = entry_stem(identity, expression, pose);
            let depth_path = format!("{stem}.pgm");
            let normal_path = format!("{stem}.ppm");
            let full = config.out_dir.join(&depth_path);
            pnm::save_pgm16(&full, &depth, &comment).map_err(io_err(&full))?;
            let full = config.out_dir.join(&normal_path);
            pnm::save_ppm(&full, &normals, &comment).map_err(io_err(&full))?;
            entries.push(ManifestEntry {
                identity_id: identity,
                expression_id: expression,
                pose_id: pose,
                depth_path,
                normal_path,
            });
        }
    }
    Ok(entries)
}

/// Generates the full dataset on the current rayon pool and writes the manifest.
pub fn generate_dataset(
    model: &MorphableModel,
    config: &GenConfig,
) -> Result<Manifest, DatagenError> {
    config.validate()?;
    fs::create_dir_all(&config.out_dir).map_err(io_err(&config.out_dir))?;
    let results: Vec<Result<Vec<ManifestEntry>, DatagenError>> = (0..config.n_identities)
        .into_par_iter()
        .map(|i| generate_identity(model, config, i))
        .collect();

    let mut entries = Vec::with_capacity(config.expected_total());
    let mut failure = None;
    for r in results {
        match r {
            Ok(e) if failure.is_none() => entries.extend(e),
            Ok(_) => {}
            Err(e) => {
                failure.get_or_insert(e);
            }
        }
    }
    let total_count = entries.len();
    let manifest = Manifest {
        config: config.clone(),
        entries,
        total_count,
    };
    if let Some(source) = failure {
        return Err(DatagenError::Aborted {
            partial: Box::new(manifest),
            source: Box::new(source),
        });
    }
    write_manifest(&manifest, config.out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// Runs [`generate_dataset`] on a dedicated pool of `threads` workers.
pub fn generate_dataset_with_threads(
    model: &MorphableModel,
    config: &GenConfig,
    threads: usize,
) -> Result<Manifest, DatagenError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| DatagenError::Config(e.to_string()))?;
    pool.install(|| generate_dataset(model, config))
}

pub fn write_manifest(manifest: &Manifest, path: impl AsRef<Path>) -> Result<(), DatagenError> {
    let path = path.as_ref();
    let json = serde_json::to_string_pretty(manifest)
        .map_err(|e| DatagenError::Manifest(e.to_string()))?;
    fs::write(path, json).map_err(io_err(path))
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Manifest, DatagenError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| DatagenError::Manifest(e.to_string()))?;
    manifest.validate()?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViolationKind {
    Missing,
    Corrupt(String),
    SizeMismatch { width: usize, height: usize },
    DepthOutOfRange { x: usize, y: usize, value: u16 },
    NormalNotUnit { x: usize, y: usize, norm: f64 },
    NormalFacesAway { x: usize, y: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub path: String,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    /// Check every n-th entry's normal map for unit length (1 = all).
    pub normal_sample_stride: usize,
    /// Allowed deviation of a decoded normal from unit length.
    pub unit_tolerance: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            normal_sample_stride: 1,
            // worst-case quantization error is sqrt(3) * 0.5 / 127.5 ~ 0.0068
            unit_tolerance: 0.01,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerifyReport {
    pub checked_files: usize,
    pub passed_files: usize,
    pub failed_files: usize,
    pub violations: Vec<Violation>,
}

impl VerifyReport {
    pub fn is_clean(&self) -> bool {
        self.failed_files == 0
    }
}

/// Checks file presence, header validity, the depth clip range and normal
/// unit length for every manifest entry under `root`.
pub fn verify_dataset(
    manifest: &Manifest,
    root: impl AsRef<Path>,
    options: &VerifyOptions,
) -> VerifyReport {
    let root = root.as_ref();
    let rig = &manifest.config.cameras;
    let stride = options.normal_sample_stride.max(1);
    let per_file: Vec<(usize, Vec<Violation>)> = manifest
        .entries
        .par_iter()
        .enumerate()
        .flat_map_iter(|(k, entry)| {
            let d = check_depth(root, &entry.depth_path, rig);
            let n = check_normals(root, &entry.normal_path, rig, options, k % stride == 0);
            [(1, d), (1, n)]
        })
        .collect();

    let mut report = VerifyReport::default();
    for (count, violations) in per_file {
        report.checked_files += count;
        if violations.is_empty() {
            report.passed_files += 1;
        } else {
            report.failed_files += 1;
            report.violations.extend(violations);
        }
    }
    report
}

fn load_bytes(root: &Path, rel: &str) -> Result<Vec<u8>, Violation> {
    fs::read(root.join(rel)).map_err(|e| Violation {
        path: rel.to_string(),
        kind: if e.kind() == io::ErrorKind::NotFound {
            ViolationKind::Missing
        } else {
            ViolationKind::Corrupt(e.to_string())
        },
    })
}

fn corrupt(rel: &str, e: PnmError) -> Vec<Violation> {
    vec![Violation {
        path: rel.to_string(),
        kind: ViolationKind::Corrupt(e.to_string()),
    }]
}

fn check_depth(root: &Path, rel: &str, rig: &HemisphereRig) -> Vec<Violation> {
    let bytes = match load_bytes(root, rel) {
        Ok(b) => b,
        Err(v) => return vec![v],
    };
    let img = match pnm::parse_pgm16(&bytes) {
        Ok(a) => a.image,
        Err(e) => return corrupt(rel, e),
    };
    if img.width != rig.resolution || img.height != rig.resolution {
        return vec![Violation {
            path: rel.to_string(),
            kind: ViolationKind::SizeMismatch {
                width: img.width,
                height: img.height,
            },
        }];
    }
    let (near, far) = (rig.near.ceil(), rig.far.round());
    let mut out = Vec::new();
    for (k, &p) in img.pixels.iter().enumerate() {
        if p != 0 && ((p as f64) < near || (p as f64) > far) {
            out.push(Violation {
                path: rel.to_string(),
                kind: ViolationKind::DepthOutOfRange {
                    x: k % img.width,
                    y: k / img.width,
                    value: p,
                },
            });
        }
    }
    out
}

fn check_normals(
    root: &Path,
    rel: &str,
    rig: &HemisphereRig,
    options: &VerifyOptions,
    check_pixels: bool,
) -> Vec<Violation> {
    let bytes = match load_bytes(root, rel) {
        Ok(b) => b,
        Err(v) => return vec![v],
    };
    let img: NormalMap = match pnm::parse_ppm(&bytes) {
        Ok(a) => a.image,
        Err(e) => return corrupt(rel, e),
    };
    if img.width != rig.resolution || img.height != rig.resolution {
        return vec![Violation {
            path: rel.to_string(),
            kind: ViolationKind::SizeMismatch {
                width: img.width,
                height: img.height,
            },
        }];
    }
    let mut out = Vec::new();
    if !check_pixels {
        return out;
    }
    for (k, &p) in img.pixels.iter().enumerate() {
        if p == normals::BACKGROUND {
            continue;
        }
        let n = normals::decode(p);
        let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        let (x, y) = (k % img.width, k / img.width);
        if (norm - 1.0).abs() > options.unit_tolerance {
            out.push(Violation {
                path: rel.to_string(),
                kind: ViolationKind::NormalNotUnit { x, y, norm },
            });
        }
        if n[2] > 0.0 {
            out.push(Violation {
                path: rel.to_string(),
                kind: ViolationKind::NormalFacesAway { x, y },
            });
        }
    }
    out
}

/// Relative paths whose bytes differ between two generated datasets, plus
/// paths present in only one of them.
pub fn diff_datasets(
    a: &Manifest,
    a_root: impl AsRef<Path>,
    b: &Manifest,
    b_root: impl AsRef<Path>,
) -> Vec<String> {
    let (a_root, b_root) = (a_root.as_ref(), b_root.as_ref());
    let paths = |m: &Manifest| -> Vec<String> {
        m.entries
            .iter()
            .flat_map(|e| [e.depth_path.clone(), e.normal_path.clone()])
            .collect()
    };
    let pa = paths(a);
    let pb = paths(b);
    let mut diffs: Vec<String> = pa
        .par_iter()
        .filter(|p| {
            let x = fs::read(a_root.join(p)).ok();
            let y = fs::read(b_root.join(p)).ok();
            x.is_none() || x != y
        })
        .cloned()
        .collect();
    let in_a: std::collections::HashSet<&String> = pa.iter().collect();
    diffs.extend(pb.iter().filter(|p| !in_a.contains(p)).cloned());
    diffs
}
