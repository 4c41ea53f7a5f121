//! Surface normals from depth by back-projection and central differences.

use super::camera::{cross, dot, Intrinsics};
use super::raster::DepthImage;

/// Unit normals quantized per channel as `round(n * 127.5 + 127.5)`.
/// Background pixels are `(0, 0, 0)`, which no unit vector encodes to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalMap {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

pub const BACKGROUND: [u8; 3] = [0, 0, 0];

impl NormalMap {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![BACKGROUND; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: [u8; 3]) {
        self.pixels[y * self.width + x] = value;
    }

    /// Decoded camera-space normal, or `None` for background.
    pub fn normal(&self, x: usize, y: usize) -> Option<[f64; 3]> {
        let p = self.get(x, y);
        (p != BACKGROUND).then(|| decode(p))
    }
}

pub fn encode(n: [f64; 3]) -> [u8; 3] {
    n.map(|c| (c * 127.5 + 127.5).round().clamp(0.0, 255.0) as u8)
}

pub fn decode(p: [u8; 3]) -> [f64; 3] {
    p.map(|c| (c as f64 - 127.5) / 127.5)
}

/// Converts a depth image to a camera-space normal map.
///
/// Each pixel whose four direct neighbors are all foreground gets
/// `normalize(t_u x t_v)` with `t_u = P(u+1,v) - P(u-1,v)` and
/// `t_v = P(u,v+1) - P(u,v-1)`, flipped so that `n_z <= 0` (toward the
/// camera). Image borders and pixels next to background stay background.
pub fn depth_to_normals(depth: &DepthImage, intr: &Intrinsics) -> NormalMap {
    let (w, h) = (depth.width, depth.height);
    let mut out = NormalMap::new(w, h);
    if w < 3 || h < 3 {
        return out;
    }
    let point = |i: usize, j: usize| intr.back_project(i, j, depth.get(i, j) as f64);
    for j in 1..h - 1 {
        for i in 1..w - 1 {
            if depth.get(i, j) == 0
                || depth.get(i - 1, j) == 0
                || depth.get(i + 1, j) == 0
                || depth.get(i, j - 1) == 0
                || depth.get(i, j + 1) == 0
            {
                continue;
            }
            let (l, r) = (point(i - 1, j), point(i + 1, j));
            let (u, d) = (point(i, j - 1), point(i, j + 1));
            let tu = [r[0] - l[0], r[1] - l[1], r[2] - l[2]];
            let tv = [d[0] - u[0], d[1] - u[1], d[2] - u[2]];
            let mut n = cross(tu, tv);
            let len = dot(n, n).sqrt();
            if !(len > 0.0) {
                continue;
            }
            n = n.map(|c| c / len);
            if n[2] > 0.0 {
                n = n.map(|c| -c);
            }
            out.set(i, j, encode(n));
        }
    }
    out
}
