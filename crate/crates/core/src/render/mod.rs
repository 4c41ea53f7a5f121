//! Hemisphere camera rig, depth rasterization, normal derivation and image files.

pub mod camera;
pub mod normals;
pub mod pnm;
pub mod raster;

pub use camera::{hemisphere_cameras, Camera, CameraError, HemisphereRig, Intrinsics, Projection};
pub use normals::{depth_to_normals, NormalMap};
pub use raster::{render_depth, DepthImage};
