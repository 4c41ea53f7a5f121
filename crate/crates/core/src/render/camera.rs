use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CameraError {
    #[error("camera radius must be positive, got {0}")]
    Radius(f64),
    #[error("focal length must be positive, got {0}")]
    Focal(f64),
    #[error("pitch must lie strictly inside (-90, 90) degrees, got {0}")]
    Pitch(f64),
    #[error("image dimensions must be positive")]
    Resolution,
    #[error("clip range must satisfy 0 < near < far, got {near}..{far}")]
    Clip { near: f64, far: f64 },
}

/// Pinhole intrinsics. The principal point is measured in pixels from the
/// top-left image corner; pixel `(i, j)` is sampled at `(i + 0.5, j + 0.5)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    /// Square image with the principal point at the image center.
    pub fn centered(focal: f64, res: usize) -> Self {
        Self {
            focal,
            cx: res as f64 / 2.0,
            cy: res as f64 / 2.0,
            width: res,
            height: res,
        }
    }

    /// Projects a camera-space point (x right, y down, z forward).
    pub fn project(&self, p: [f64; 3]) -> Projection {
        let [x, y, z] = p;
        if z <= 0.0 {
            return Projection::Behind { depth: z };
        }
        Projection::Visible {
            u: self.focal * x / z + self.cx,
            v: self.focal * y / z + self.cy,
            depth: z,
        }
    }

    /// Camera-space point seen through the center of pixel `(i, j)` at view depth `z`.
    pub fn back_project(&self, i: usize, j: usize, z: f64) -> [f64; 3] {
        let px = i as f64 + 0.5 - self.cx;
        let py = j as f64 + 0.5 - self.cy;
        [px * z / self.focal, py * z / self.focal, z]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection {
    Visible { u: f64, v: f64, depth: f64 },
    /// The point lies on or behind the camera plane; callers clip it.
    Behind { depth: f64 },
}

impl Projection {
    pub fn is_visible(&self) -> bool {
        matches!(self, Projection::Visible { .. })
    }
}

pub const DEFAULT_NEAR: f64 = 100.0;
pub const DEFAULT_FAR: f64 = 2000.0;

/// A camera orbiting `target` at `radius`, looking at it with world +y up.
///
/// Yaw rotates about the y axis (positive toward +x), pitch raises the camera
/// toward +y. Yaw = pitch = 0 places the camera on the +z axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub yaw: f64,
    pub pitch: f64,
    pub radius: f64,
    pub target: [f64; 3],
    pub intrinsics: Intrinsics,
    pub near: f64,
    pub far: f64,
}

impl Camera {
    pub fn orbit(
        yaw: f64,
        pitch: f64,
        radius: f64,
        target: [f64; 3],
        intrinsics: Intrinsics,
    ) -> Result<Self, CameraError> {
        let cam = Self {
            yaw,
            pitch,
            radius,
            target,
            intrinsics,
            near: DEFAULT_NEAR,
            far: DEFAULT_FAR,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn with_clip(mut self, near: f64, far: f64) -> Result<Self, CameraError> {
        self.near = near;
        self.far = far;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), CameraError> {
        if !(self.radius > 0.0) {
            return Err(CameraError::Radius(self.radius));
        }
        if !(self.intrinsics.focal > 0.0) {
            return Err(CameraError::Focal(self.intrinsics.focal));
        }
        if !(self.pitch.abs() < 90.0) {
            return Err(CameraError::Pitch(self.pitch));
        }
        if self.intrinsics.width == 0 || self.intrinsics.height == 0 {
            return Err(CameraError::Resolution);
        }
        if !(self.near > 0.0 && self.near < self.far) {
            return Err(CameraError::Clip {
                near: self.near,
                far: self.far,
            });
        }
        Ok(())
    }

    fn direction(&self) -> [f64; 3] {
        let (sy, cy) = self.yaw.to_radians().sin_cos();
        let (sp, cp) = self.pitch.to_radians().sin_cos();
        [cp * sy, sp, cp * cy]
    }

    pub fn position(&self) -> [f64; 3] {
        let d = self.direction();
        [
            self.target[0] + self.radius * d[0],
            self.target[1] + self.radius * d[1],
            self.target[2] + self.radius * d[2],
        ]
    }

    /// Rows are the camera right, down and forward axes in world coordinates.
    pub fn rotation(&self) -> [[f64; 3]; 3] {
        let d = self.direction();
        let forward = [-d[0], -d[1], -d[2]];
        let right = normalize(cross(forward, [0.0, 1.0, 0.0]));
        let down = cross(forward, right);
        [right, down, forward]
    }

    /// World to camera space.
    pub fn to_view(&self, p: [f64; 3]) -> [f64; 3] {
        let rot = self.rotation();
        self.to_view_with(&rot, p)
    }

    pub(crate) fn to_view_with(&self, rot: &[[f64; 3]; 3], p: [f64; 3]) -> [f64; 3] {
        // offsets from the target keep mirrored cameras exact negations
        let d = self.direction();
        let rel = [
            p[0] - self.target[0] - self.radius * d[0],
            p[1] - self.target[1] - self.radius * d[1],
            p[2] - self.target[2] - self.radius * d[2],
        ];
        [dot(rot[0], rel), dot(rot[1], rel), dot(rot[2], rel)]
    }

    pub fn project_vertex(&self, p: [f64; 3]) -> Projection {
        self.intrinsics.project(self.to_view(p))
    }
}

pub const HEMISPHERE_PITCHES: [f64; 3] = [-30.0, 0.0, 30.0];
pub const HEMISPHERE_YAWS: [f64; 4] = [-60.0, -20.0, 20.0, 60.0];

/// Parameters of the pitch x yaw camera grid in front of the face.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HemisphereRig {
    pub radius: f64,
    pub focal: f64,
    pub resolution: usize,
    pub pitches: Vec<f64>,
    pub yaws: Vec<f64>,
    pub near: f64,
    pub far: f64,
}

impl Default for HemisphereRig {
    fn default() -> Self {
        Self {
            radius: 600.0,
            focal: 260.0,
            resolution: 128,
            pitches: HEMISPHERE_PITCHES.to_vec(),
            yaws: HEMISPHERE_YAWS.to_vec(),
            near: DEFAULT_NEAR,
            far: DEFAULT_FAR,
        }
    }
}

impl HemisphereRig {
    pub fn len(&self) -> usize {
        self.pitches.len() * self.yaws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cameras in pitch-major order aimed at `target`.
    pub fn cameras(&self, target: [f64; 3]) -> Result<Vec<Camera>, CameraError> {
        if self.resolution == 0 {
            return Err(CameraError::Resolution);
        }
        let intr = Intrinsics::centered(self.focal, self.resolution);
        let mut out = Vec::with_capacity(self.len());
        for &pitch in &self.pitches {
            for &yaw in &self.yaws {
                out.push(
                    Camera::orbit(yaw, pitch, self.radius, target, intr)?
                        .with_clip(self.near, self.far)?,
                );
            }
        }
        Ok(out)
    }
}

/// The default 3 x 4 grid of cameras around the origin.
pub fn hemisphere_cameras(radius: f64, focal: f64, res: usize) -> Result<Vec<Camera>, CameraError> {
    HemisphereRig {
        radius,
        focal,
        resolution: res,
        ..HemisphereRig::default()
    }
    .cameras([0.0; 3])
}

pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = dot(v, v).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn front(radius: f64, focal: f64) -> Camera {
        Camera::orbit(0.0, 0.0, radius, [0.0; 3], Intrinsics::centered(focal, 128)).unwrap()
    }

    #[test]
    fn twelve_cameras_on_the_sphere() {
        let cams = hemisphere_cameras(600.0, 260.0, 128).unwrap();
        assert_eq!(cams.len(), 12);
        for c in &cams {
            let p = c.position();
            let r = dot(p, p).sqrt();
            assert!((r - 600.0).abs() < 1e-6);
            assert!(p[2] > 0.0, "camera must sit in front of the face");
            // the target projects to the principal point
            match c.project_vertex([0.0; 3]) {
                Projection::Visible { u, v, depth } => {
                    assert!((u - 64.0).abs() < 1e-9 && (v - 64.0).abs() < 1e-9);
                    assert!((depth - 600.0).abs() < 1e-9);
                }
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn optical_axis_point_hits_principal_point() {
        let intr = Intrinsics::centered(200.0, 128);
        assert_eq!(
            intr.project([0.0, 0.0, 750.0]),
            Projection::Visible { u: 64.0, v: 64.0, depth: 750.0 }
        );
    }

    #[test]
    fn doubling_focal_doubles_offsets() {
        let p = [13.0, -7.5, 420.0];
        let a = Intrinsics::centered(100.0, 128).project(p);
        let b = Intrinsics::centered(200.0, 128).project(p);
        let (Projection::Visible { u: ua, v: va, .. }, Projection::Visible { u: ub, v: vb, .. }) =
            (a, b)
        else {
            panic!()
        };
        assert!(((ub - 64.0) - 2.0 * (ua - 64.0)).abs() < 1e-12);
        assert!(((vb - 64.0) - 2.0 * (va - 64.0)).abs() < 1e-12);
    }

    #[test]
    fn forty_five_degree_ray() {
        let intr = Intrinsics::centered(150.0, 128);
        let Projection::Visible { u, v, .. } = intr.project([300.0, 0.0, 300.0]) else {
            panic!()
        };
        assert_eq!(u, 64.0 + 150.0);
        assert_eq!(v, 64.0);
    }

    #[test]
    fn behind_points_are_flagged() {
        let intr = Intrinsics::centered(150.0, 128);
        assert!(!intr.project([0.0, 0.0, -5.0]).is_visible());
        assert!(!intr.project([1.0, 0.0, 0.0]).is_visible());
    }

    #[test]
    fn frontal_camera_axes() {
        let c = front(500.0, 100.0);
        let r = c.rotation();
        assert_eq!(r[0], [1.0, 0.0, 0.0]);
        assert_eq!(r[2], [0.0, 0.0, -1.0]);
        assert!((r[1][1] + 1.0).abs() < 1e-15);
        let v = c.to_view([10.0, 20.0, 0.0]);
        assert!((v[0] - 10.0).abs() < 1e-12);
        assert!((v[1] + 20.0).abs() < 1e-12);
        assert!((v[2] - 500.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_cameras_are_rejected() {
        let intr = Intrinsics::centered(100.0, 64);
        assert_eq!(
            Camera::orbit(0.0, 90.0, 1.0, [0.0; 3], intr).unwrap_err(),
            CameraError::Pitch(90.0)
        );
        assert!(Camera::orbit(0.0, 0.0, 0.0, [0.0; 3], intr).is_err());
        assert!(Camera::orbit(0.0, 0.0, 1.0, [0.0; 3], Intrinsics::centered(-1.0, 64)).is_err());
        assert!(front(10.0, 10.0).with_clip(50.0, 20.0).is_err());
    }
}
