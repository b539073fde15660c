//! Expected-appearance registration toolkit.
//!
//! Synthesizes textured views of a labelled surface mesh over sampled
//! camera poses, trains a convolutional pose regressor on them and
//! evaluates predicted poses with the ADD metric.

pub mod augment;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod image;
pub mod mesh;
pub mod nn;
pub mod procedural;
pub mod regressor;
pub mod registry;
pub mod render;
pub mod sampling;
pub mod synthesis;
pub mod texture;

pub use error::{Error, Result};
