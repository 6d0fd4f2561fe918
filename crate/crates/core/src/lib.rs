//! Single-view room layout estimation from plane hypotheses.
//!
//! Candidate corners, edges and polygons are generated from intersecting
//! planes; a discrete search picks the polygon subset whose rendering best
//! explains the observed depth and plane segmentation, and a render-and-compare
//! loop adds planes that are hidden from the input.

// `!(x > t)` is used on purpose so that NaN fails the test
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod candidates;
pub mod cost;
pub mod error;
pub mod formats;
pub mod geometry;
pub mod layout;
pub mod metrics;
pub mod pipeline;
pub mod raster;
pub mod refine;
pub mod scene;
pub mod solver;
pub mod synth;

pub use error::{LayoutError, Result};
