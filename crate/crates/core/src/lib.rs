//! Registration and segmentation toolkit for shortwave-IR hyperspectral
//! datacubes over wider-area DEM + orthophoto coverage.
//!
//! The pipeline registers an unregistered SWIR cube onto a geo-referenced
//! DEM by matching scale-invariant features between a representative SWIR
//! band image and the DEM's orthophoto, quantized into a visual-word
//! vocabulary. Hypothesised alignments are verified with a randomized
//! sample consensus loop that uses a sequential probability ratio test to
//! abandon bad models early. A successful registration associates every
//! SWIR spectrum with an elevation, after which a wetness band-ratio index
//! plus ground-relative height drive a five-class rule-based segmentation
//! (buildings, houses, trees, grass, roads/other).
//!
//! Modules:
//! - [`raster`]: cube / DEM / grayscale image data model and file formats
//! - [`spectral`]: wetness band-ratio index, adaptive threshold, beta diagnostics
//! - [`sift`]: keypoint detection, descriptors, ratio-test matching
//! - [`vocab`]: 3D point aggregation and k-means visual words
//! - [`search`]: 2D-to-3D correspondence search and split-half localization
//! - [`ransac`]: homography fitting and SPRT-accelerated consensus
//! - [`fusion`]: spectrum/elevation association and rule-based classification
//! - [`eval`]: sample library, confusion matrix, precision/recall/accuracy
//! - [`synth`]: deterministic synthetic city-block scene generator
//! - [`pipeline`]: end-to-end orchestration and run reports

pub mod error;
pub mod eval;
pub mod fusion;
pub mod pipeline;
pub mod ransac;
pub mod raster;
pub mod search;
pub mod sift;
pub mod spectral;
pub mod synth;
pub mod vocab;

pub use error::{Error, Result};
