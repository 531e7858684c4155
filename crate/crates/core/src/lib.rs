//! Forward and inverse scattering by sound-soft obstacles buried in the lower
//! half of a two-layered acoustic medium.
//!
//! The forward model is a Nyström discretization of a combined-layer boundary
//! integral equation built on the layered Green function. The inverse side
//! works from phaseless far-field data (intensities of superposed pairs of
//! plane waves): a direct imaging functional locates the obstacles, and a
//! multi-frequency Levenberg-Marquardt iteration recovers their shapes.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bie;
pub mod error;
pub mod geometry;
pub mod imaging;
pub mod layered_green;
pub mod medium;
pub mod newton_lm;
pub mod presets;
pub mod scalar;
pub mod special;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Real;

/// Double-precision medium.
pub type Medium = medium::MediumParams<f64>;
/// Double-precision starlike curve.
pub type Starlike = geometry::StarlikeCurve<f64>;
