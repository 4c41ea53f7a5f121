//! Perspective z-buffer rasterization of triangle meshes into depth images.

use crate::model3d::Mesh;

use super::camera::Camera;

/// 16-bit depth raster in millimeters along the optical axis; 0 is background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u16>,
}

impl DepthImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![0; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: u16) {
        self.pixels[y * self.width + x] = value;
    }

    pub fn covered(&self) -> usize {
        self.pixels.iter().filter(|&&p| p != 0).count()
    }

    /// Image mirrored about its vertical center line.
    pub fn flipped_horizontal(&self) -> Self {
        let mut out = Self::new(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                out.set(self.width - 1 - x, y, self.get(x, y));
            }
        }
        out
    }
}

#[derive(Clone, Copy)]
struct ScreenVertex {
    // offsets from the principal point, in pixels
    x: f64,
    y: f64,
    inv_z: f64,
    near_ok: bool,
}

/// Renders the nearest view-space depth of `mesh` at every pixel center.
///
/// Coverage uses edge functions with a top-left tie rule, depth is
/// interpolated perspective-correctly through 1/z, triangles with any vertex
/// in front of the near plane are dropped, and both windings are drawn.
/// Depths beyond the far plane are left as background.
pub fn render_depth(mesh: &Mesh, camera: &Camera) -> DepthImage {
    let intr = camera.intrinsics;
    let (w, h) = (intr.width, intr.height);
    let rot = camera.rotation();
    let verts: Vec<ScreenVertex> = mesh
        .vertices
        .chunks_exact(3)
        .map(|p| {
            let [x, y, z] = camera.to_view_with(&rot, [p[0], p[1], p[2]]);
            let near_ok = z >= camera.near;
            ScreenVertex {
                x: if near_ok { intr.focal * x / z } else { 0.0 },
                y: if near_ok { intr.focal * y / z } else { 0.0 },
                inv_z: if near_ok { 1.0 / z } else { 0.0 },
                near_ok,
            }
        })
        .collect();

    let mut zbuf = vec![f64::INFINITY; w * h];
    for tri in mesh.triangles.iter() {
        let a = verts[tri[0] as usize];
        let mut b = verts[tri[1] as usize];
        let mut c = verts[tri[2] as usize];
        if !(a.near_ok && b.near_ok && c.near_ok) {
            continue;
        }
        let mut area = edge(a, b, c.x, c.y);
        if area == 0.0 || !area.is_finite() {
            continue;
        }
        if area < 0.0 {
            std::mem::swap(&mut b, &mut c);
            area = -area;
        }

        let min_x = a.x.min(b.x).min(c.x) + intr.cx - 0.5;
        let max_x = a.x.max(b.x).max(c.x) + intr.cx - 0.5;
        let min_y = a.y.min(b.y).min(c.y) + intr.cy - 0.5;
        let max_y = a.y.max(b.y).max(c.y) + intr.cy - 0.5;
        if max_x < 0.0 || max_y < 0.0 || min_x > (w - 1) as f64 || min_y > (h - 1) as f64 {
            continue;
        }
        let x0 = min_x.ceil().max(0.0) as usize;
        let x1 = (max_x.floor() as i64).min(w as i64 - 1);
        let y0 = min_y.ceil().max(0.0) as usize;
        let y1 = (max_y.floor() as i64).min(h as i64 - 1);
        if x1 < x0 as i64 || y1 < y0 as i64 {
            continue;
        }

        let tl_a = top_left(b, c);
        let tl_b = top_left(c, a);
        let tl_c = top_left(a, b);
        for j in y0..=y1 as usize {
            let py = j as f64 + 0.5 - intr.cy;
            for i in x0..=x1 as usize {
                let px = i as f64 + 0.5 - intr.cx;
                let wa = edge(b, c, px, py);
                let wb = edge(c, a, px, py);
                let wc = edge(a, b, px, py);
                if !(inside(wa, tl_a) && inside(wb, tl_b) && inside(wc, tl_c)) {
                    continue;
                }
                let inv_z = (wa * a.inv_z + wb * b.inv_z + wc * c.inv_z) / area;
                if !(inv_z > 0.0) {
                    continue;
                }
                let z = 1.0 / inv_z;
                let slot = &mut zbuf[j * w + i];
                if z < *slot {
                    *slot = z;
                }
            }
        }
    }

    let pixels = zbuf
        .iter()
        .map(|&z| {
            if z.is_finite() && z <= camera.far {
                let mm = z.round().clamp(camera.near.ceil(), u16::MAX as f64);
                mm as u16
            } else {
                0
            }
        })
        .collect();
    DepthImage {
        width: w,
        height: h,
        pixels,
    }
}

/// Twice the signed area of (a, b, p) in a y-down frame.
#[inline]
fn edge(a: ScreenVertex, b: ScreenVertex, px: f64, py: f64) -> f64 {
    (b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x)
}

/// Top edges are horizontal with the interior below; left edges run upward.
#[inline]
fn top_left(a: ScreenVertex, b: ScreenVertex) -> bool {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    (dy == 0.0 && dx > 0.0) || dy < 0.0
}

#[inline]
fn inside(w: f64, top_left: bool) -> bool {
    w > 0.0 || (w == 0.0 && top_left)
}
