//! Scale-invariant keypoint detection and description on grayscale images,
//! plus ratio-test descriptor matching and a binary descriptor container.
//!
//! Detection follows the classic difference-of-Gaussian recipe: a Gaussian
//! pyramid without initial upsampling, 26-neighbor extrema, quadratic
//! sub-pixel refinement, contrast and edge-curvature rejection, orientation
//! histograms with secondary peaks, and a 4x4x8 gradient descriptor with
//! clip-renormalize. Output is canonically sorted so runs are byte-stable.

mod descriptor;
mod extrema;
mod scale_space;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};

use crate::error::{Error, Result};
use crate::raster::GrayImage;

use scale_space::FloatImage;

pub const DESCRIPTOR_DIM: usize = 128;

/// Detector / descriptor parameters. Defaults follow the standard
/// reference values with initial 2x upsampling disabled.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SiftConfig {
    pub base_sigma: f32,
    pub assumed_blur: f32,
    pub intervals: usize,
    /// Octaves continue while min(width, height) >= this.
    pub min_octave_dim: usize,
    /// Threshold on the interpolated DoG magnitude, intensities in [0,1].
    pub contrast_threshold: f32,
    /// Principal-curvature ratio bound for the edge test.
    pub edge_ratio: f32,
    pub max_interp_steps: usize,
    pub orientation_bins: usize,
    pub ori_peak_ratio: f32,
    pub descriptor_width: usize,
    pub descriptor_bins: usize,
    pub clip_threshold: f32,
    /// Optional histogram equalization before detection.
    pub equalize: bool,
}

impl Default for SiftConfig {
    fn default() -> Self {
        SiftConfig {
            base_sigma: 1.6,
            assumed_blur: 0.5,
            intervals: 3,
            min_octave_dim: 16,
            contrast_threshold: 0.03,
            edge_ratio: 10.0,
            max_interp_steps: 5,
            orientation_bins: 36,
            ori_peak_ratio: 0.8,
            descriptor_width: 4,
            descriptor_bins: 8,
            clip_threshold: 0.2,
            equalize: false,
        }
    }
}

/// A refined scale-space extremum in image coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x: f32,
    pub y: f32,
    /// Detection scale sigma, pixels.
    pub scale: f32,
    /// Dominant gradient orientation, radians in [0, 2pi).
    pub orientation: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    pub keypoint: Keypoint,
    pub vector: Vec<f32>,
}

impl Descriptor {
    /// Euclidean distance between descriptor vectors (f64 accumulation).
    pub fn distance(&self, other: &Descriptor) -> f64 {
        euclidean(&self.vector, &other.vector)
    }
}

pub fn euclidean(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0f64;
    for (x, y) in a.iter().zip(b) {
        let d = (*x - *y) as f64;
        acc += d * d;
    }
    acc.sqrt()
}

/// Detect keypoints and compute their descriptors. Deterministic for a
/// fixed input and config; results are sorted by (y, x, scale, orientation).
pub fn detect_and_describe(image: &GrayImage, cfg: &SiftConfig) -> Result<Vec<Descriptor>> {
    if image.width < 32 || image.height < 32 {
        return Err(Error::invalid(format!(
            "image {}x{} too small for one octave (need 32x32)",
            image.width, image.height
        )));
    }
    let data = if cfg.equalize {
        equalize_hist(image.intensities())
    } else {
        image.intensities().to_vec()
    };
    let input = FloatImage::from_data(image.width, image.height, data);
    let octaves = scale_space::build_pyramid(
        &input,
        cfg.base_sigma,
        cfg.assumed_blur,
        cfg.intervals,
        cfg.min_octave_dim,
    );
    let points = extrema::detect_extrema(&octaves, cfg);

    let mut out: Vec<Descriptor> = Vec::new();
    for p in &points {
        let oct = &octaves[p.octave];
        let scale_factor = (1usize << p.octave) as f32;
        // octave-relative sigma at the refined layer
        let sigma_oct = cfg.base_sigma
            * 2f32.powf((p.layer as f32 + p.layer_offset) / cfg.intervals as f32);
        let gauss = &oct.gaussians[p.layer];
        for angle in descriptor::orientations(gauss, p.x, p.y, sigma_oct, cfg) {
            if let Some(vector) = descriptor::describe(gauss, p.x, p.y, sigma_oct, angle, cfg) {
                out.push(Descriptor {
                    keypoint: Keypoint {
                        x: p.x * scale_factor,
                        y: p.y * scale_factor,
                        scale: sigma_oct * scale_factor,
                        orientation: angle,
                    },
                    vector,
                });
            }
        }
    }

    out.sort_by(|a, b| {
        a.keypoint
            .y
            .total_cmp(&b.keypoint.y)
            .then(a.keypoint.x.total_cmp(&b.keypoint.x))
            .then(a.keypoint.scale.total_cmp(&b.keypoint.scale))
            .then(a.keypoint.orientation.total_cmp(&b.keypoint.orientation))
    });
    Ok(out)
}

/// An accepted nearest-neighbor match.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchPair {
    pub query: usize,
    pub target: usize,
    pub distance: f64,
}

/// Two-nearest-neighbor matching with the distance-ratio test: a query
/// matches its nearest target iff d1/d2 <= ratio. Ties in distance break
/// toward the lower target index.
pub fn match_ratio_test(
    queries: &[Descriptor],
    targets: &[Descriptor],
    ratio: f64,
) -> Result<Vec<MatchPair>> {
    if targets.len() < 2 {
        return Err(Error::invalid("ratio test needs at least 2 targets"));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid("ratio must lie in (0,1)"));
    }
    let mut out = Vec::new();
    for (qi, q) in queries.iter().enumerate() {
        let mut d1 = f64::INFINITY;
        let mut d2 = f64::INFINITY;
        let mut t1 = 0usize;
        for (ti, t) in targets.iter().enumerate() {
            let d = q.distance(t);
            if d < d1 {
                d2 = d1;
                d1 = d;
                t1 = ti;
            } else if d < d2 {
                d2 = d;
            }
        }
        // d2 == 0 means two identical best targets: ambiguous, rejected
        if d2 > 0.0 && d1 / d2 <= ratio {
            out.push(MatchPair {
                query: qi,
                target: t1,
                distance: d1,
            });
        }
    }
    Ok(out)
}

/// Histogram equalization over 256 levels for low-contrast inputs.
fn equalize_hist(values: &[f32]) -> Vec<f32> {
    let mut hist = [0usize; 256];
    for &v in values {
        hist[((v * 255.0).round() as usize).min(255)] += 1;
    }
    let mut cdf = [0f32; 256];
    let mut acc = 0usize;
    for (i, &h) in hist.iter().enumerate() {
        acc += h;
        cdf[i] = acc as f32 / values.len() as f32;
    }
    values
        .iter()
        .map(|&v| cdf[((v * 255.0).round() as usize).min(255)])
        .collect()
}

// ---------------------------------------------------------------------------
// Binary descriptor container
// ---------------------------------------------------------------------------

/// Write descriptors: `count: u32 LE`, `dim: u32 LE`, then `count` keypoint
/// records (x, y, scale, orientation as f32 LE), then `count * dim` f32 LE
/// vector components.
pub fn write_descriptors(descriptors: &[Descriptor], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut u32buf = [0u8; 4];
    LittleEndian::write_u32(&mut u32buf, descriptors.len() as u32);
    w.write_all(&u32buf).map_err(|e| Error::io(path, e))?;
    LittleEndian::write_u32(&mut u32buf, DESCRIPTOR_DIM as u32);
    w.write_all(&u32buf).map_err(|e| Error::io(path, e))?;
    let mut f32buf = [0u8; 4];
    let mut put = |w: &mut BufWriter<fs::File>, v: f32| -> Result<()> {
        LittleEndian::write_f32(&mut f32buf, v);
        w.write_all(&f32buf).map_err(|e| Error::io(path, e))
    };
    for d in descriptors {
        put(&mut w, d.keypoint.x)?;
        put(&mut w, d.keypoint.y)?;
        put(&mut w, d.keypoint.scale)?;
        put(&mut w, d.keypoint.orientation)?;
    }
    for d in descriptors {
        if d.vector.len() != DESCRIPTOR_DIM {
            return Err(Error::invalid("descriptor vector dimension != 128"));
        }
        for &v in &d.vector {
            put(&mut w, v)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_descriptors(path: impl AsRef<Path>) -> Result<Vec<Descriptor>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 8 {
        return Err(Error::format(path, "truncated descriptor container"));
    }
    let count = LittleEndian::read_u32(&bytes[0..4]) as usize;
    let dim = LittleEndian::read_u32(&bytes[4..8]) as usize;
    if dim != DESCRIPTOR_DIM {
        return Err(Error::format(path, format!("unsupported dim {dim}")));
    }
    let expect = 8 + count * 4 * 4 + count * dim * 4;
    if bytes.len() != expect {
        return Err(Error::format(
            path,
            format!("container is {} bytes, expected {}", bytes.len(), expect),
        ));
    }
    let mut keypoints = Vec::with_capacity(count);
    let mut pos = 8usize;
    for _ in 0..count {
        let x = LittleEndian::read_f32(&bytes[pos..]);
        let y = LittleEndian::read_f32(&bytes[pos + 4..]);
        let scale = LittleEndian::read_f32(&bytes[pos + 8..]);
        let orientation = LittleEndian::read_f32(&bytes[pos + 12..]);
        keypoints.push(Keypoint {
            x,
            y,
            scale,
            orientation,
        });
        pos += 16;
    }
    let mut out = Vec::with_capacity(count);
    for kp in keypoints {
        let mut vector = vec![0f32; dim];
        LittleEndian::read_f32_into(&bytes[pos..pos + dim * 4], &mut vector);
        pos += dim * 4;
        out.push(Descriptor {
            keypoint: kp,
            vector,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
