//! Elevation raster with a linear georeference, stored as raw 32-bit LE
//! floats plus a JSON sidecar (`<data file>.json`).

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Elevation grid in meters. Pixel (row, col) has its center at scene
/// coordinates `(origin_x + col * pixel_size, origin_y + row * pixel_size)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DemGrid {
    pub width: usize,
    pub height: usize,
    pub pixel_size: f64,
    pub origin_x: f64,
    pub origin_y: f64,
    elevations: Vec<f32>,
}

#[derive(Serialize, Deserialize)]
struct DemSidecar {
    width: usize,
    height: usize,
    pixel_size_m: f64,
    origin_x: f64,
    origin_y: f64,
}

impl DemGrid {
    pub fn new(
        width: usize,
        height: usize,
        pixel_size: f64,
        origin_x: f64,
        origin_y: f64,
        elevations: Vec<f32>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("DEM dimensions must be positive"));
        }
        if !(pixel_size > 0.0) {
            return Err(Error::invalid("DEM pixel size must be > 0"));
        }
        if elevations.len() != width * height {
            return Err(Error::invalid(format!(
                "elevation count {} != width*height = {}",
                elevations.len(),
                width * height
            )));
        }
        if elevations.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("DEM contains non-finite elevations"));
        }
        Ok(DemGrid {
            width,
            height,
            pixel_size,
            origin_x,
            origin_y,
            elevations,
        })
    }

    /// Flat grid helper with the default 1 m pixel size and zero origin.
    pub fn flat(width: usize, height: usize, elevation: f32) -> Result<Self> {
        DemGrid::new(width, height, 1.0, 0.0, 0.0, vec![elevation; width * height])
    }

    #[inline]
    pub fn elevation(&self, row: usize, col: usize) -> f32 {
        self.elevations[row * self.width + col]
    }

    pub fn elevations(&self) -> &[f32] {
        &self.elevations
    }

    /// Scene coordinates of a pixel center.
    pub fn pixel_to_world(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.origin_x + col as f64 * self.pixel_size,
            self.origin_y + row as f64 * self.pixel_size,
        )
    }

    /// Fractional pixel coordinates (col, row) of a scene point.
    pub fn world_to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (x - self.origin_x) / self.pixel_size,
            (y - self.origin_y) / self.pixel_size,
        )
    }

    /// Bilinear elevation at fractional pixel coordinates; `None` outside
    /// the grid (pixel-center convention: valid domain is
    /// `[0, width-1] x [0, height-1]`).
    pub fn sample_bilinear(&self, col: f64, row: f64) -> Option<f64> {
        if !(col >= 0.0 && row >= 0.0) {
            return None;
        }
        let max_c = (self.width - 1) as f64;
        let max_r = (self.height - 1) as f64;
        if col > max_c || row > max_r {
            return None;
        }
        if self.width == 1 || self.height == 1 {
            // degenerate axis: fall back to nearest
            let c = (col.round() as usize).min(self.width - 1);
            let r = (row.round() as usize).min(self.height - 1);
            return Some(self.elevation(r, c) as f64);
        }
        let c0 = (col.floor() as usize).min(self.width - 2);
        let r0 = (row.floor() as usize).min(self.height - 2);
        let fc = col - c0 as f64;
        let fr = row - r0 as f64;
        let v00 = self.elevation(r0, c0) as f64;
        let v01 = self.elevation(r0, c0 + 1) as f64;
        let v10 = self.elevation(r0 + 1, c0) as f64;
        let v11 = self.elevation(r0 + 1, c0 + 1) as f64;
        Some(v00 * (1.0 - fr) * (1.0 - fc) + v01 * (1.0 - fr) * fc + v10 * fr * (1.0 - fc)
            + v11 * fr * fc)
    }
}

/// Read a DEM written by [`write_dem`]: raw grid at `data_path`, sidecar at
/// `<data_path>.json`.
pub fn read_dem(data_path: impl AsRef<Path>) -> Result<DemGrid> {
    let data_path = data_path.as_ref();
    let sidecar_path = sidecar_path(data_path);
    let sidecar_text =
        fs::read_to_string(&sidecar_path).map_err(|e| Error::io(&sidecar_path, e))?;
    let sc: DemSidecar = serde_json::from_str(&sidecar_text)
        .map_err(|e| Error::format(&sidecar_path, format!("bad sidecar: {e}")))?;

    let bytes = fs::read(data_path).map_err(|e| Error::io(data_path, e))?;
    let expect = sc.width * sc.height * 4;
    if bytes.len() != expect {
        return Err(Error::format(
            data_path,
            format!("grid is {} bytes, sidecar declares {}", bytes.len(), expect),
        ));
    }
    let mut elevations = vec![0f32; sc.width * sc.height];
    LittleEndian::read_f32_into(&bytes, &mut elevations);
    DemGrid::new(sc.width, sc.height, sc.pixel_size_m, sc.origin_x, sc.origin_y, elevations)
}

pub fn write_dem(dem: &DemGrid, data_path: impl AsRef<Path>) -> Result<()> {
    let data_path = data_path.as_ref();
    let sc = DemSidecar {
        width: dem.width,
        height: dem.height,
        pixel_size_m: dem.pixel_size,
        origin_x: dem.origin_x,
        origin_y: dem.origin_y,
    };
    let sidecar_path = sidecar_path(data_path);
    let text = serde_json::to_string_pretty(&sc)
        .map_err(|e| Error::format(&sidecar_path, e.to_string()))?;
    fs::write(&sidecar_path, text).map_err(|e| Error::io(&sidecar_path, e))?;

    let file = fs::File::create(data_path).map_err(|e| Error::io(data_path, e))?;
    let mut w = BufWriter::new(file);
    let mut buf = [0u8; 4];
    for &v in &dem.elevations {
        LittleEndian::write_f32(&mut buf, v);
        w.write_all(&buf).map_err(|e| Error::io(data_path, e))?;
    }
    w.flush().map_err(|e| Error::io(data_path, e))
}

fn sidecar_path(data_path: &Path) -> std::path::PathBuf {
    let mut s = data_path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}
