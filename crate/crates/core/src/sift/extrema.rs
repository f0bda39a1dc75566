//! DoG extremum detection with sub-pixel quadratic refinement and the
//! contrast / edge-response rejection tests.

use super::scale_space::{FloatImage, Octave};
use super::SiftConfig;

/// Margin (pixels) kept clear of the octave border.
pub(crate) const BORDER: usize = 5;

/// A refined extremum in octave coordinates.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ScalePoint {
    pub octave: usize,
    /// DoG layer the refined point settled on (integer part).
    pub layer: usize,
    /// Octave-relative sub-pixel coordinates.
    pub x: f32,
    pub y: f32,
    /// Sub-layer offset from the quadratic fit, in [-0.5, 0.5].
    pub layer_offset: f32,
}

pub(crate) fn detect_extrema(octaves: &[Octave], cfg: &SiftConfig) -> Vec<ScalePoint> {
    let prefilter = 0.5 * cfg.contrast_threshold;
    let mut found = Vec::new();
    for (oct_idx, oct) in octaves.iter().enumerate() {
        let (w, h) = (oct.dogs[0].width, oct.dogs[0].height);
        if w <= 2 * BORDER || h <= 2 * BORDER {
            continue;
        }
        for layer in 1..=cfg.intervals {
            for y in BORDER..h - BORDER {
                for x in BORDER..w - BORDER {
                    let v = oct.dogs[layer].get(x, y);
                    if v.abs() <= prefilter {
                        continue;
                    }
                    if !is_local_extremum(&oct.dogs, layer, x, y, v) {
                        continue;
                    }
                    if let Some(p) = refine(oct, oct_idx, layer, x, y, cfg) {
                        found.push(p);
                    }
                }
            }
        }
    }
    found
}

fn is_local_extremum(dogs: &[FloatImage], layer: usize, x: usize, y: usize, v: f32) -> bool {
    let sign = v > 0.0;
    for dl in -1i32..=1 {
        let img = &dogs[(layer as i32 + dl) as usize];
        for dy in -1i32..=1 {
            for dx in -1i32..=1 {
                if dl == 0 && dy == 0 && dx == 0 {
                    continue;
                }
                let n = img.get((x as i32 + dx) as usize, (y as i32 + dy) as usize);
                if sign {
                    if n >= v {
                        return false;
                    }
                } else if n <= v {
                    return false;
                }
            }
        }
    }
    true
}

/// 3D gradient of the DoG stack at an integer location (central differences).
fn gradient(dogs: &[FloatImage], l: usize, x: usize, y: usize) -> [f32; 3] {
    let d = &dogs[l];
    [
        (d.get(x + 1, y) - d.get(x - 1, y)) * 0.5,
        (d.get(x, y + 1) - d.get(x, y - 1)) * 0.5,
        (dogs[l + 1].get(x, y) - dogs[l - 1].get(x, y)) * 0.5,
    ]
}

/// 3D Hessian of the DoG stack at an integer location.
fn hessian(dogs: &[FloatImage], l: usize, x: usize, y: usize) -> [[f32; 3]; 3] {
    let d = &dogs[l];
    let v = d.get(x, y);
    let dxx = d.get(x + 1, y) + d.get(x - 1, y) - 2.0 * v;
    let dyy = d.get(x, y + 1) + d.get(x, y - 1) - 2.0 * v;
    let dss = dogs[l + 1].get(x, y) + dogs[l - 1].get(x, y) - 2.0 * v;
    let dxy = (d.get(x + 1, y + 1) - d.get(x - 1, y + 1) - d.get(x + 1, y - 1)
        + d.get(x - 1, y - 1))
        * 0.25;
    let dxs = (dogs[l + 1].get(x + 1, y) - dogs[l + 1].get(x - 1, y) - dogs[l - 1].get(x + 1, y)
        + dogs[l - 1].get(x - 1, y))
        * 0.25;
    let dys = (dogs[l + 1].get(x, y + 1) - dogs[l + 1].get(x, y - 1) - dogs[l - 1].get(x, y + 1)
        + dogs[l - 1].get(x, y - 1))
        * 0.25;
    [[dxx, dxy, dxs], [dxy, dyy, dys], [dxs, dys, dss]]
}

/// Solve the symmetric 3x3 system H u = -g. Returns `None` when H is
/// numerically singular (divergent fit).
fn solve_offset(h: [[f32; 3]; 3], g: [f32; 3]) -> Option<[f32; 3]> {
    let m = h;
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    if det.abs() < 1e-12 {
        return None;
    }
    let inv_det = 1.0 / det;
    // adjugate * (-g)
    let adj = [
        [
            m[1][1] * m[2][2] - m[1][2] * m[2][1],
            m[0][2] * m[2][1] - m[0][1] * m[2][2],
            m[0][1] * m[1][2] - m[0][2] * m[1][1],
        ],
        [
            m[1][2] * m[2][0] - m[1][0] * m[2][2],
            m[0][0] * m[2][2] - m[0][2] * m[2][0],
            m[0][2] * m[1][0] - m[0][0] * m[1][2],
        ],
        [
            m[1][0] * m[2][1] - m[1][1] * m[2][0],
            m[0][1] * m[2][0] - m[0][0] * m[2][1],
            m[0][0] * m[1][1] - m[0][1] * m[1][0],
        ],
    ];
    let mut u = [0f32; 3];
    for (i, row) in adj.iter().enumerate() {
        u[i] = -(row[0] * g[0] + row[1] * g[1] + row[2] * g[2]) * inv_det;
    }
    Some(u)
}

fn refine(
    oct: &Octave,
    oct_idx: usize,
    layer0: usize,
    x0: usize,
    y0: usize,
    cfg: &SiftConfig,
) -> Option<ScalePoint> {
    let dogs = &oct.dogs;
    let (w, h) = (dogs[0].width, dogs[0].height);
    let (mut l, mut x, mut y) = (layer0 as i32, x0 as i32, y0 as i32);
    let mut offset = [0f32; 3];
    let mut converged = false;

    for _ in 0..cfg.max_interp_steps {
        let g = gradient(dogs, l as usize, x as usize, y as usize);
        let hm = hessian(dogs, l as usize, x as usize, y as usize);
        offset = solve_offset(hm, g)?;
        if offset[0].abs() < 0.5 && offset[1].abs() < 0.5 && offset[2].abs() < 0.5 {
            converged = true;
            break;
        }
        x += offset[0].round() as i32;
        y += offset[1].round() as i32;
        l += offset[2].round() as i32;
        if l < 1
            || l > cfg.intervals as i32
            || x < BORDER as i32
            || x >= (w - BORDER) as i32
            || y < BORDER as i32
            || y >= (h - BORDER) as i32
        {
            return None;
        }
    }
    if !converged {
        return None;
    }

    let (lu, xu, yu) = (l as usize, x as usize, y as usize);
    // interpolated contrast
    let g = gradient(dogs, lu, xu, yu);
    let v = dogs[lu].get(xu, yu)
        + 0.5 * (g[0] * offset[0] + g[1] * offset[1] + g[2] * offset[2]);
    if v.abs() < cfg.contrast_threshold {
        return None;
    }

    // edge response: principal curvature ratio of the 2x2 spatial Hessian
    let d = &dogs[lu];
    let c = d.get(xu, yu);
    let dxx = d.get(xu + 1, yu) + d.get(xu - 1, yu) - 2.0 * c;
    let dyy = d.get(xu, yu + 1) + d.get(xu, yu - 1) - 2.0 * c;
    let dxy = (d.get(xu + 1, yu + 1) - d.get(xu - 1, yu + 1) - d.get(xu + 1, yu - 1)
        + d.get(xu - 1, yu - 1))
        * 0.25;
    let tr = dxx + dyy;
    let det = dxx * dyy - dxy * dxy;
    let r = cfg.edge_ratio;
    if det <= 0.0 || tr * tr * r >= (r + 1.0) * (r + 1.0) * det {
        return None;
    }

    Some(ScalePoint {
        octave: oct_idx,
        layer: lu,
        x: xu as f32 + offset[0],
        y: yu as f32 + offset[1],
        layer_offset: offset[2],
    })
}
