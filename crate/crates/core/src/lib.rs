//! Geometric building index.
//!
//! Buildings in very-high-resolution imagery are located through the
//! junctions their outlines form. Junctions are detected a contrario on a
//! single luminance channel and split into L-junctions. Each L-junction is
//! scored by its posterior of lying on a building plus the agreement of its
//! neighbors, and the score is accumulated over the parallelogram it spans.
//! Thresholding the accumulated index at its mean gives the building mask.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod evaluation;
pub mod gbi;
pub mod geometry;
pub mod image_io;
pub mod junction;
pub mod pipeline;
pub mod saliency;

pub use error::{Error, Result};
pub use gbi::{rasterize_gbi, threshold_mean, BuildingMask, GbiMap};
pub use geometry::{decompose_to_l, parallelogram, tau_neighbors, LJunction, Parallelogram};
pub use image_io::{load_image, p_energy, LuminanceImage, RasterImage};
pub use junction::{detect_junctions, read_junctions, write_junctions, DetectorConfig, Junction};
pub use pipeline::{parse_config, Pipeline, PipelineConfig};
pub use saliency::{fit_prior, PriorModel, SaliencyRecord};
