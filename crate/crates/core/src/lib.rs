//! Single-view dynamic video to consistent multi-view video grids and fitted
//! dynamic splat scenes.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod diffusion;
pub mod error;
pub mod geometry;
pub mod guidance;
pub mod image;
pub mod kv;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod projection;
pub mod scalar;
pub mod scene;
pub mod splat4d;
pub mod ten1;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Latent = diffusion::Latent<f64>;
pub type NoiseSchedule = diffusion::NoiseSchedule<f64>;
pub type Camera = projection::Camera<f64>;
pub type SplatScene = splat4d::SplatScene<f64>;
/// Single-precision scene, the checkpoint's storage precision.
pub type SplatScene32 = splat4d::SplatScene<f32>;
