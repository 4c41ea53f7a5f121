//! Linear morphable shape model.
//!
//! A face shape is the mean shape plus identity and expression displacement
//! fields, each weighted by a coefficient measured in standard deviations:
//!
//! ```text
//! S = mean + A_id (alpha_id * sigma_id) + A_exp (alpha_exp * sigma_exp)
//! ```
//!
//! Models are stored in the little-endian `MDL1` container (see [`save_model`]).

use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

const MAGIC: &[u8; 4] = b"MDL1";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 24;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic bytes, expected MDL1")]
    BadMagic,
    #[error("unsupported MDL1 version {0}")]
    UnsupportedVersion(u32),
    #[error("file header truncated ({0} bytes)")]
    TruncatedHeader(usize),
    #[error("payload length mismatch: header implies {expected} bytes, found {actual}")]
    PayloadLength { expected: u64, actual: u64 },
    #[error("dimension mismatch in {field}: expected {expected}, got {actual}")]
    DimensionMismatch {
        field: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("triangle {triangle} references vertex {index} but the model has {vertex_count}")]
    IndexOutOfRange {
        triangle: usize,
        index: u32,
        vertex_count: usize,
    },
    #[error("triangle {0} is degenerate (repeated vertex index)")]
    DegenerateTriangle(usize),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("{field}[{index}] must be strictly positive")]
    NonPositiveSigma { field: &'static str, index: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Mean shape, identity and expression bases, and shared triangle topology.
///
/// Bases are stored column-major: column `k` occupies
/// `basis[k * 3V .. (k + 1) * 3V]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MorphableModel {
    vertex_count: usize,
    mean_shape: Vec<f64>,
    id_basis: Vec<f64>,
    id_sigma: Vec<f64>,
    exp_basis: Vec<f64>,
    exp_sigma: Vec<f64>,
    triangles: Arc<Vec<[u32; 3]>>,
}

impl MorphableModel {
    pub fn new(
        mean_shape: Vec<f64>,
        id_basis: Vec<f64>,
        id_sigma: Vec<f64>,
        exp_basis: Vec<f64>,
        exp_sigma: Vec<f64>,
        triangles: Vec<[u32; 3]>,
    ) -> Result<Self, ModelError> {
        if mean_shape.len() % 3 != 0 {
            return Err(ModelError::DimensionMismatch {
                field: "mean_shape",
                expected: mean_shape.len() / 3 * 3,
                actual: mean_shape.len(),
            });
        }
        let vertex_count = mean_shape.len() / 3;
        let rows = mean_shape.len();
        check_basis("id_basis", &id_basis, rows, id_sigma.len())?;
        check_basis("exp_basis", &exp_basis, rows, exp_sigma.len())?;
        check_finite("mean_shape", &mean_shape)?;
        check_finite("id_basis", &id_basis)?;
        check_finite("exp_basis", &exp_basis)?;
        check_sigma("id_sigma", &id_sigma)?;
        check_sigma("exp_sigma", &exp_sigma)?;
        for (t, tri) in triangles.iter().enumerate() {
            for &index in tri {
                if index as usize >= vertex_count {
                    return Err(ModelError::IndexOutOfRange {
                        triangle: t,
                        index,
                        vertex_count,
                    });
                }
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(ModelError::DegenerateTriangle(t));
            }
        }
        Ok(Self {
            vertex_count,
            mean_shape,
            id_basis,
            id_sigma,
            exp_basis,
            exp_sigma,
            triangles: Arc::new(triangles),
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn id_dim(&self) -> usize {
        self.id_sigma.len()
    }

    pub fn exp_dim(&self) -> usize {
        self.exp_sigma.len()
    }

    pub fn mean_shape(&self) -> &[f64] {
        &self.mean_shape
    }

    pub fn id_basis(&self) -> &[f64] {
        &self.id_basis
    }

    pub fn id_sigma(&self) -> &[f64] {
        &self.id_sigma
    }

    pub fn exp_basis(&self) -> &[f64] {
        &self.exp_basis
    }

    pub fn exp_sigma(&self) -> &[f64] {
        &self.exp_sigma
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    /// Column `k` of the identity basis.
    pub fn id_column(&self, k: usize) -> &[f64] {
        let rows = 3 * self.vertex_count;
        &self.id_basis[k * rows..(k + 1) * rows]
    }

    /// Column `k` of the expression basis.
    pub fn exp_column(&self, k: usize) -> &[f64] {
        let rows = 3 * self.vertex_count;
        &self.exp_basis[k * rows..(k + 1) * rows]
    }

    /// Arithmetic mean of the mean-shape vertices.
    pub fn mean_centroid(&self) -> [f64; 3] {
        let mut c = [0.0; 3];
        if self.vertex_count == 0 {
            return c;
        }
        for v in self.mean_shape.chunks_exact(3) {
            c[0] += v[0];
            c[1] += v[1];
            c[2] += v[2];
        }
        let n = self.vertex_count as f64;
        [c[0] / n, c[1] / n, c[2] / n]
    }
}

fn check_basis(
    field: &'static str,
    basis: &[f64],
    rows: usize,
    cols: usize,
) -> Result<(), ModelError> {
    if basis.len() != rows * cols {
        return Err(ModelError::DimensionMismatch {
            field,
            expected: rows * cols,
            actual: basis.len(),
        });
    }
    Ok(())
}

fn check_finite(field: &'static str, values: &[f64]) -> Result<(), ModelError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(ModelError::NonFinite(field))
    }
}

fn check_sigma(field: &'static str, sigma: &[f64]) -> Result<(), ModelError> {
    check_finite(field, sigma)?;
    match sigma.iter().position(|&s| s <= 0.0) {
        Some(index) => Err(ModelError::NonPositiveSigma { field, index }),
        None => Ok(()),
    }
}

/// Identity and expression coefficients in units of standard deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeCoefficients {
    pub alpha_id: Vec<f64>,
    pub alpha_exp: Vec<f64>,
}

impl ShapeCoefficients {
    pub fn zeros(model: &MorphableModel) -> Self {
        Self {
            alpha_id: vec![0.0; model.id_dim()],
            alpha_exp: vec![0.0; model.exp_dim()],
        }
    }
}

/// A synthesized face surface. Triangles are shared with the source model.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<f64>,
    pub triangles: Arc<Vec<[u32; 3]>>,
}

impl Mesh {
    pub fn new(vertices: Vec<f64>, triangles: Vec<[u32; 3]>) -> Self {
        Self {
            vertices,
            triangles: Arc::new(triangles),
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len() / 3
    }

    pub fn vertex(&self, i: usize) -> [f64; 3] {
        [
            self.vertices[3 * i],
            self.vertices[3 * i + 1],
            self.vertices[3 * i + 2],
        ]
    }
}

/// Evaluates the linear shape model for the given coefficients.
pub fn synthesize_shape(
    model: &MorphableModel,
    coeffs: &ShapeCoefficients,
) -> Result<Mesh, ModelError> {
    if coeffs.alpha_id.len() != model.id_dim() {
        return Err(ModelError::DimensionMismatch {
            field: "alpha_id",
            expected: model.id_dim(),
            actual: coeffs.alpha_id.len(),
        });
    }
    if coeffs.alpha_exp.len() != model.exp_dim() {
        return Err(ModelError::DimensionMismatch {
            field: "alpha_exp",
            expected: model.exp_dim(),
            actual: coeffs.alpha_exp.len(),
        });
    }
    let mut vertices = model.mean_shape.clone();
    accumulate(&mut vertices, &model.id_basis, &coeffs.alpha_id, &model.id_sigma);
    accumulate(&mut vertices, &model.exp_basis, &coeffs.alpha_exp, &model.exp_sigma);
    Ok(Mesh {
        vertices,
        triangles: Arc::clone(&model.triangles),
    })
}

fn accumulate(out: &mut [f64], basis: &[f64], alpha: &[f64], sigma: &[f64]) {
    let rows = out.len();
    for (k, (&a, &s)) in alpha.iter().zip(sigma).enumerate() {
        // zero terms are skipped so the mean shape survives bit-exactly
        if a == 0.0 {
            continue;
        }
        let w = a * s;
        for (o, &b) in out.iter_mut().zip(&basis[k * rows..(k + 1) * rows]) {
            *o += b * w;
        }
    }
}

/// Draws one truncated standard normal value by rejection.
pub fn truncated_normal<R: Rng + ?Sized>(rng: &mut R, trunc: f64) -> f64 {
    loop {
        let x: f64 = rng.sample(StandardNormal);
        if x.abs() <= trunc {
            return x;
        }
    }
}

/// Samples identity coefficients only.
pub fn sample_identity<R: Rng + ?Sized>(rng: &mut R, model: &MorphableModel, trunc: f64) -> Vec<f64> {
    (0..model.id_dim()).map(|_| truncated_normal(rng, trunc)).collect()
}

/// Samples expression coefficients only.
pub fn sample_expression<R: Rng + ?Sized>(
    rng: &mut R,
    model: &MorphableModel,
    trunc: f64,
) -> Vec<f64> {
    (0..model.exp_dim()).map(|_| truncated_normal(rng, trunc)).collect()
}

/// Samples identity then expression coefficients, each redrawn until `|x| <= trunc`.
pub fn sample_coefficients<R: Rng + ?Sized>(
    rng: &mut R,
    model: &MorphableModel,
    trunc: f64,
) -> Result<ShapeCoefficients, ModelError> {
    if !(trunc > 0.0) || !trunc.is_finite() {
        return Err(ModelError::InvalidParameter(format!(
            "trunc must be positive and finite, got {trunc}"
        )));
    }
    let alpha_id = sample_identity(rng, model, trunc);
    let alpha_exp = sample_expression(rng, model, trunc);
    Ok(ShapeCoefficients { alpha_id, alpha_exp })
}

/// Semi-axes of the toy head ellipsoid (x, y, z) in millimeters.
pub const TOY_SEMI_AXES: [f64; 3] = [90.0, 120.0, 100.0];

const TOY_LAT_LIMIT: f64 = 80.0;

/// Builds a procedural front-half head: an ellipsoid grid facing +z with a
/// nose and brow ridge, plus smooth random displacement bases.
///
/// The grid has `v_rings + 1` latitude rows and `2 * v_rings + 1` longitude
/// columns spanning -90..90 degrees around the y axis. The mean shape is
/// mirror-symmetric in x.
pub fn make_toy_model(
    seed: u64,
    v_rings: usize,
    k_id: usize,
    k_exp: usize,
) -> Result<MorphableModel, ModelError> {
    if v_rings < 4 {
        return Err(ModelError::InvalidParameter(format!(
            "v_rings must be at least 4, got {v_rings}"
        )));
    }
    let rows = v_rings + 1;
    let cols = 2 * v_rings + 1;
    let vertex_count = rows * cols;
    let [ax, ay, az] = TOY_SEMI_AXES;

    let mut mean_shape = Vec::with_capacity(3 * vertex_count);
    let mut normals = Vec::with_capacity(vertex_count);
    let mut params = Vec::with_capacity(vertex_count);
    for i in 0..rows {
        // symmetric parameterisation keeps +t and -t exact negations
        let s = (2.0 * i as f64 - v_rings as f64) / v_rings as f64;
        let lat = s * TOY_LAT_LIMIT.to_radians();
        for j in 0..cols {
            let t = (j as f64 - v_rings as f64) / v_rings as f64;
            let lon = t * std::f64::consts::FRAC_PI_2;
            let (sl, cl) = lat.sin_cos();
            let (so, co) = lon.sin_cos();
            let mut p = [ax * cl * so, ay * sl, az * cl * co];
            let n = normalize3([p[0] / (ax * ax), p[1] / (ay * ay), p[2] / (az * az)]);
            let bump = face_relief(p[0], p[1]) * co.max(0.0);
            for d in 0..3 {
                p[d] += bump * n[d];
            }
            mean_shape.extend_from_slice(&p);
            normals.push(n);
            params.push((s, t));
        }
    }

    let mut triangles = Vec::with_capacity(2 * v_rings * (cols - 1));
    for i in 0..v_rings {
        for j in 0..cols - 1 {
            let a = (i * cols + j) as u32;
            let b = a + 1;
            let c = a + cols as u32;
            let d = c + 1;
            // the diagonal flips at the center column so the mesh mirrors exactly
            if j < v_rings {
                triangles.push([a, c, b]);
                triangles.push([b, c, d]);
            } else {
                triangles.push([a, c, d]);
                triangles.push([a, d, b]);
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = (vertex_count as f64).sqrt();
    let mut id_basis = Vec::with_capacity(3 * vertex_count * k_id);
    let mut id_sigma = Vec::with_capacity(k_id);
    for k in 0..k_id {
        id_basis.extend(displacement_field(&mut rng, &normals, &params, |_| 1.0));
        id_sigma.push(5.0 * scale * 0.85f64.powi(k as i32));
    }
    let mut exp_basis = Vec::with_capacity(3 * vertex_count * k_exp);
    let mut exp_sigma = Vec::with_capacity(k_exp);
    for k in 0..k_exp {
        // expressions concentrate on the lower face
        exp_basis.extend(displacement_field(&mut rng, &normals, &params, |s| {
            0.5 * (1.0 - s) + 0.1
        }));
        exp_sigma.push(3.0 * scale * 0.8f64.powi(k as i32));
    }

    MorphableModel::new(mean_shape, id_basis, id_sigma, exp_basis, exp_sigma, triangles)
}

fn face_relief(x: f64, y: f64) -> f64 {
    let nose = 24.0 * (-(x / 16.0).powi(2) - ((y + 5.0) / 32.0).powi(2)).exp();
    let brow = 6.0 * (-((y - 38.0) / 10.0).powi(2) - (x / 45.0).powi(2)).exp();
    let chin = 5.0 * (-((y + 85.0) / 14.0).powi(2) - (x / 30.0).powi(2)).exp();
    nose + brow + chin
}

fn displacement_field(
    rng: &mut ChaCha8Rng,
    normals: &[[f64; 3]],
    params: &[(f64, f64)],
    window: impl Fn(f64) -> f64,
) -> Vec<f64> {
    let modes: Vec<[f64; 5]> = (0..3)
        .map(|_| {
            [
                rng.random_range(1..=3) as f64,
                rng.random_range(1..=3) as f64,
                rng.random_range(0.0..std::f64::consts::TAU),
                rng.random_range(0.0..std::f64::consts::TAU),
                rng.random_range(-1.0..1.0),
            ]
        })
        .collect();
    let mut col = Vec::with_capacity(3 * normals.len());
    for (n, &(s, t)) in normals.iter().zip(params) {
        let mut d = 0.0;
        for &[p, q, phi, psi, amp] in &modes {
            d += amp * (p * s * 1.5 + phi).cos() * (q * t * 1.5 + psi).cos();
        }
        d *= window(s);
        col.extend_from_slice(&[d * n[0], d * n[1], d * n[2]]);
    }
    let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        col.iter_mut().for_each(|v| *v /= norm);
    }
    col
}

fn normalize3(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Serializes a model in the MDL1 layout:
/// magic, u32 version, u32 V, u32 K_id, u32 K_exp, u32 T, then mean shape,
/// id basis (column-major), id sigma, exp basis, exp sigma as f64 and the
/// triangle indices as u32. All little-endian.
pub fn write_model<W: Write>(model: &MorphableModel, mut w: W) -> io::Result<()> {
    w.write_all(MAGIC)?;
    for v in [
        VERSION,
        model.vertex_count as u32,
        model.id_dim() as u32,
        model.exp_dim() as u32,
        model.triangles.len() as u32,
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    for block in [
        &model.mean_shape,
        &model.id_basis,
        &model.id_sigma,
        &model.exp_basis,
        &model.exp_sigma,
    ] {
        for v in block.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    for tri in model.triangles.iter() {
        for i in tri {
            w.write_all(&i.to_le_bytes())?;
        }
    }
    w.flush()
}

pub fn save_model(model: &MorphableModel, path: impl AsRef<Path>) -> Result<(), ModelError> {
    let file = fs::File::create(path)?;
    write_model(model, io::BufWriter::new(file))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<MorphableModel, ModelError> {
    let bytes = fs::read(path)?;
    parse_model(&bytes)
}

/// Parses an in-memory MDL1 buffer and validates every model invariant.
pub fn parse_model(bytes: &[u8]) -> Result<MorphableModel, ModelError> {
    if bytes.len() < HEADER_LEN {
        if bytes.len() >= 4 && &bytes[..4] != MAGIC {
            return Err(ModelError::BadMagic);
        }
        return Err(ModelError::TruncatedHeader(bytes.len()));
    }
    if &bytes[..4] != MAGIC {
        return Err(ModelError::BadMagic);
    }
    let header = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    let version = header(0);
    if version != VERSION {
        return Err(ModelError::UnsupportedVersion(version));
    }
    let (v, k_id, k_exp, t) = (
        header(1) as u64,
        header(2) as u64,
        header(3) as u64,
        header(4) as u64,
    );
    let floats = 3 * v + 3 * v * k_id + k_id + 3 * v * k_exp + k_exp;
    let expected = 8 * floats + 12 * t;
    let actual = (bytes.len() - HEADER_LEN) as u64;
    if expected != actual {
        return Err(ModelError::PayloadLength { expected, actual });
    }

    let mut cursor = &bytes[HEADER_LEN..];
    let mut take_f64 = |n: u64| -> Vec<f64> {
        let (head, rest) = cursor.split_at(8 * n as usize);
        cursor = rest;
        head.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect()
    };
    let mean_shape = take_f64(3 * v);
    let id_basis = take_f64(3 * v * k_id);
    let id_sigma = take_f64(k_id);
    let exp_basis = take_f64(3 * v * k_exp);
    let exp_sigma = take_f64(k_exp);
    let tri_bytes = &bytes[bytes.len() - 12 * t as usize..];
    let triangles = tri_bytes
        .chunks_exact(12)
        .map(|c| {
            [
                u32::from_le_bytes(c[0..4].try_into().unwrap()),
                u32::from_le_bytes(c[4..8].try_into().unwrap()),
                u32::from_le_bytes(c[8..12].try_into().unwrap()),
            ]
        })
        .collect();
    MorphableModel::new(mean_shape, id_basis, id_sigma, exp_basis, exp_sigma, triangles)
}
