//! Virtual depth-face synthesis and confidence-weighted score fusion.
//!
//! - [`model3d`]: linear morphable shape model, toy model and `MDL1` files.
//! - [`render`]: hemisphere cameras, z-buffer depth rendering, normal maps.
//! - [`datagen`]: parallel, seed-deterministic dataset generation.
//! - [`acw`]: confidence heads, interpolated-logit losses and score fusion.
//! - [`evalkit`]: gallery/probe identification and a synthetic embedding protocol.

pub mod acw;
pub mod model3d;
pub mod datagen;
pub mod evalkit;
pub mod render;
