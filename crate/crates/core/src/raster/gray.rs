//! Single-channel image in [0,1] plus binary PGM (P5) and PPM (P6) i/o.
//!
//! Intensity images round-trip through 16-bit big-endian PGM; segment maps
//! use 8-bit PGM with raw code values (no normalization).

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::minmax_normalize;

#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    intensities: Vec<f32>,
}

pub type Rgb = [u8; 3];

impl GrayImage {
    pub fn new(width: usize, height: usize, intensities: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        if intensities.len() != width * height {
            return Err(Error::invalid(format!(
                "intensity count {} != width*height = {}",
                intensities.len(),
                width * height
            )));
        }
        if intensities.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("intensities must lie in [0,1]"));
        }
        Ok(GrayImage {
            width,
            height,
            intensities,
        })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.intensities[y * self.width + x]
    }

    pub fn intensities(&self) -> &[f32] {
        &self.intensities
    }

    /// Min-max stretched copy (constant image maps to 0.5).
    pub fn normalized(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            intensities: minmax_normalize(&self.intensities),
        }
    }
}

/// Write 16-bit big-endian binary PGM. Values are quantized as
/// `round(v * 65535)`.
pub fn write_pgm16(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write!(w, "P5\n{} {}\n65535\n", img.width, img.height).map_err(|e| Error::io(path, e))?;
    for &v in &img.intensities {
        let q = (v * 65535.0).round() as u16;
        w.write_all(&q.to_be_bytes()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Read a binary PGM (maxval up to 65535) and normalize samples to [0,1]
/// by dividing by the declared maxval.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (width, height, maxval, data) = parse_pgm(path, &bytes)?;
    let inv = 1.0 / maxval as f32;
    let intensities: Vec<f32> = if maxval > 255 {
        data.chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f32 * inv)
            .collect()
    } else {
        data.iter().map(|&b| b as f32 * inv).collect()
    };
    GrayImage::new(width, height, intensities)
}

/// Write raw 8-bit codes (e.g. segment-map labels) as binary PGM with
/// maxval 255. No scaling is applied.
pub fn write_pgm8_raw(codes: &[u8], width: usize, height: usize, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if codes.len() != width * height {
        return Err(Error::invalid("code count != width*height"));
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write!(w, "P5\n{width} {height}\n255\n").map_err(|e| Error::io(path, e))?;
    w.write_all(codes).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Read raw 8-bit codes from a binary PGM written by [`write_pgm8_raw`].
pub fn read_pgm8_raw(path: impl AsRef<Path>) -> Result<(Vec<u8>, usize, usize)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (width, height, maxval, data) = parse_pgm(path, &bytes)?;
    if maxval > 255 {
        return Err(Error::format(path, "expected 8-bit PGM"));
    }
    Ok((data.to_vec(), width, height))
}

/// Write an RGB byte raster as binary PPM (P6).
pub fn write_ppm(pixels: &[Rgb], width: usize, height: usize, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if pixels.len() != width * height {
        return Err(Error::invalid("pixel count != width*height"));
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write!(w, "P6\n{width} {height}\n255\n").map_err(|e| Error::io(path, e))?;
    for px in pixels {
        w.write_all(px).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Parse a P5 header and return (width, height, maxval, sample bytes).
fn parse_pgm<'a>(path: &Path, bytes: &'a [u8]) -> Result<(usize, usize, usize, &'a [u8])> {
    let bad = |reason: &str| Error::format(path, reason);
    if bytes.len() < 2 || &bytes[0..2] != b"P5" {
        return Err(bad("not a binary PGM (missing P5 magic)"));
    }
    // header tokens: magic, width, height, maxval; separated by whitespace,
    // with possible `#` comment lines
    let mut pos = 2usize;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // skip whitespace and comments
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated PGM header"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse()
            .map_err(|_| bad("bad PGM header number"))?;
    }
    // single whitespace byte after maxval
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(bad("missing separator after maxval"));
    }
    pos += 1;
    let (width, height, maxval) = (fields[0], fields[1], fields[2]);
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(bad("bad PGM dimensions or maxval"));
    }
    let bytes_per = if maxval > 255 { 2 } else { 1 };
    let expect = width * height * bytes_per;
    let data = &bytes[pos..];
    if data.len() != expect {
        return Err(bad("PGM payload size mismatch"));
    }
    Ok((width, height, maxval, data))
}
