//! Deformable-registration tumour tracking for 2D cine-MRI.
//!
//! The annotated first frame's mask is propagated to later frames by
//! registering each frame with a cubic B-spline free-form deformation and
//! warping the mask through the estimated transform. The crate also ships
//! the evaluation metrics, a synthetic phantom with analytic ground truth,
//! MetaImage I/O and a small command-line front end.

pub mod bspline;
pub mod cli;
pub mod error;
pub mod filter;
pub mod grid;
pub mod interp;
pub mod io;
pub mod metrics;
pub mod optimizer;
pub mod pyramid;
pub mod registration;
pub mod similarity;
pub mod synth;
pub mod tracker;

pub use error::{Error, Result};
