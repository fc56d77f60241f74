//! Dual-camera compressive hyperspectral imaging toolkit.
//!
//! The crate simulates the two-branch acquisition (a coded-aperture
//! snapshot branch plus a panchromatic camera), synthesizes radiance cubes
//! from per-pixel temperature, emissivity, and texture via Planck's law,
//! provides a linear-time state-space scan kernel with a cross-modal
//! non-overlapping scan order, and trains a small physics-informed
//! reconstruction network end to end with verified gradients.

pub mod autodiff;
pub mod cube;
pub mod error;
pub mod forward;
pub mod io;
pub mod metrics;
pub mod net;
pub mod physics;
pub mod rng;
pub mod scan_order;
pub mod ssm;

pub use error::{Error, Result};
