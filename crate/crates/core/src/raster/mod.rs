//! Core raster data model: hyperspectral cube, DEM grid, grayscale image,
//! and the on-disk formats for each.
//!
//! Formats are deliberately minimal and bit-exact:
//! - cube: ASCII key/value header + raw band-sequential 32-bit LE floats
//! - DEM: raw row-major 32-bit LE floats + JSON sidecar with georeference
//! - grayscale: binary PGM (P5), 16-bit big-endian samples
//!
//! All loaded rasters are immutable after construction and safe to share
//! across threads.

mod cube;
mod dem;
mod gray;

pub use cube::{read_cube, write_cube, CubeQuality, HyperCube};
pub use dem::{read_dem, write_dem, DemGrid};
pub use gray::{
    read_pgm, read_pgm8_raw, write_pgm16, write_pgm8_raw, write_ppm, GrayImage, Rgb,
};

/// Min-max normalization shared by band extraction, averaging and image
/// stretching. A constant field maps to 0.5 everywhere.
pub(crate) fn minmax_normalize(values: &[f32]) -> Vec<f32> {
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !(hi > lo) {
        return vec![0.5; values.len()];
    }
    let span = hi - lo;
    values.iter().map(|&v| (v - lo) / span).collect()
}
