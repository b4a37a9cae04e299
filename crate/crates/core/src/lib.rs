//! Geometry and depth-distribution machinery for 360-degree depth estimation
//! that combines a holistic equirectangular branch with regional tangent-patch
//! branches.
//!
//! Conventions used throughout:
//!
//! * longitude `theta` in `[-pi, pi)`, latitude `phi` in `[-pi/2, pi/2]`;
//! * unit direction `(cos phi cos theta, cos phi sin theta, sin phi)`;
//! * equirectangular images are north-up, `width = 2 * height`, and texel
//!   `(row, col)` has its center at `(col + 0.5, row + 0.5)`.

// negated float comparisons are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alignment;
pub mod binfit;
pub mod config;
pub mod distribution;
pub mod error;
pub mod grid;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod pipeline;
pub mod resample;
pub mod sphere;
pub mod synth;

pub use error::{Error, Result};
pub use grid::{ErpGrid, FeatureMap, Grid};
