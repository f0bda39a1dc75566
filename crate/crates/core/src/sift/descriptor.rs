//! Orientation assignment and the 4x4x8 gradient-histogram descriptor.

use std::f32::consts::PI;

use super::scale_space::FloatImage;
use super::SiftConfig;

const TWO_PI: f32 = 2.0 * PI;

/// Gradient magnitude and angle (in [0, 2pi)) at an interior pixel.
#[inline]
fn grad(img: &FloatImage, x: usize, y: usize) -> Option<(f32, f32)> {
    if x == 0 || y == 0 || x + 1 >= img.width || y + 1 >= img.height {
        return None;
    }
    let dx = img.get(x + 1, y) - img.get(x - 1, y);
    let dy = img.get(x, y + 1) - img.get(x, y - 1);
    let mag = (dx * dx + dy * dy).sqrt();
    let mut angle = dy.atan2(dx);
    if angle < 0.0 {
        angle += TWO_PI;
    }
    Some((mag, angle))
}

/// Dominant gradient orientations around a point, as angles in [0, 2pi).
/// Secondary peaks within `ori_peak_ratio` of the maximum each produce an
/// orientation.
pub(crate) fn orientations(
    img: &FloatImage,
    x: f32,
    y: f32,
    sigma_oct: f32,
    cfg: &SiftConfig,
) -> Vec<f32> {
    let bins = cfg.orientation_bins;
    let sigma_w = 1.5 * sigma_oct;
    let radius = (3.0 * sigma_w).round() as i32;
    let (xc, yc) = (x.round() as i32, y.round() as i32);
    let inv_denom = -0.5 / (sigma_w * sigma_w);

    let mut hist = vec![0f32; bins];
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let (px, py) = (xc + dx, yc + dy);
            if px <= 0 || py <= 0 || px + 1 >= img.width as i32 || py + 1 >= img.height as i32 {
                continue;
            }
            if let Some((mag, angle)) = grad(img, px as usize, py as usize) {
                let w = ((dx * dx + dy * dy) as f32 * inv_denom).exp();
                let mut bin = (angle * bins as f32 / TWO_PI).floor() as i32;
                if bin >= bins as i32 {
                    bin -= bins as i32;
                }
                hist[bin as usize] += w * mag;
            }
        }
    }

    // two passes of circular 3-tap smoothing
    for _ in 0..2 {
        let prev = hist.clone();
        for i in 0..bins {
            let l = prev[(i + bins - 1) % bins];
            let r = prev[(i + 1) % bins];
            hist[i] = (l + prev[i] + r) / 3.0;
        }
    }

    let max = hist.iter().cloned().fold(0f32, f32::max);
    if max <= 0.0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    for i in 0..bins {
        let l = hist[(i + bins - 1) % bins];
        let c = hist[i];
        let r = hist[(i + 1) % bins];
        if c > l && c > r && c >= cfg.ori_peak_ratio * max {
            // parabolic refinement of the peak bin
            let denom = l - 2.0 * c + r;
            let shift = if denom.abs() < 1e-12 {
                0.0
            } else {
                0.5 * (l - r) / denom
            };
            let mut angle = (i as f32 + shift + 0.5) * TWO_PI / bins as f32;
            if angle < 0.0 {
                angle += TWO_PI;
            }
            if angle >= TWO_PI {
                angle -= TWO_PI;
            }
            out.push(angle);
        }
    }
    out
}

/// 128-component descriptor: 4x4 spatial histograms x 8 orientation bins,
/// trilinear soft-binning, Gaussian windowing, normalize / clip / renormalize.
/// Returns `None` when the patch has no gradient energy.
pub(crate) fn describe(
    img: &FloatImage,
    x: f32,
    y: f32,
    sigma_oct: f32,
    angle: f32,
    cfg: &SiftConfig,
) -> Option<Vec<f32>> {
    let d = cfg.descriptor_width; // 4
    let n = cfg.descriptor_bins; // 8
    let cos_t = angle.cos();
    let sin_t = angle.sin();
    let bins_per_rad = n as f32 / TWO_PI;
    let hist_width = 3.0 * sigma_oct;
    let radius = (hist_width * std::f32::consts::SQRT_2 * (d as f32 + 1.0) * 0.5 + 0.5) as i32;
    let (xc, yc) = (x.round() as i32, y.round() as i32);
    let exp_denom = -2.0 / (d as f32 * d as f32); // 1/(2*(0.5 d)^2)

    // (d+2)^2 * (n+2) working histogram with a guard ring for interpolation
    let stride_o = n + 2;
    let stride_c = (d + 2) * stride_o;
    let mut hist = vec![0f32; (d + 2) * stride_c];

    for dy in -radius..=radius {
        for dx in -radius..=radius {
            // rotated offset in histogram units
            let c_rot = (dx as f32 * cos_t + dy as f32 * sin_t) / hist_width;
            let r_rot = (-dx as f32 * sin_t + dy as f32 * cos_t) / hist_width;
            let rbin = r_rot + d as f32 / 2.0 - 0.5;
            let cbin = c_rot + d as f32 / 2.0 - 0.5;
            if rbin <= -1.0 || rbin >= d as f32 || cbin <= -1.0 || cbin >= d as f32 {
                continue;
            }
            let (px, py) = (xc + dx, yc + dy);
            if px <= 0 || py <= 0 || px + 1 >= img.width as i32 || py + 1 >= img.height as i32 {
                continue;
            }
            let Some((mag, ori)) = grad(img, px as usize, py as usize) else {
                continue;
            };
            let mut rel = ori - angle;
            while rel < 0.0 {
                rel += TWO_PI;
            }
            while rel >= TWO_PI {
                rel -= TWO_PI;
            }
            let obin = rel * bins_per_rad;
            let w = ((c_rot * c_rot + r_rot * r_rot) * exp_denom).exp() * mag;

            // trilinear distribution over (rbin, cbin, obin)
            let r0 = rbin.floor();
            let c0 = cbin.floor();
            let o0 = obin.floor();
            let dr = rbin - r0;
            let dc = cbin - c0;
            let dor = obin - o0;
            let r0 = r0 as i32;
            let c0 = c0 as i32;
            let o0 = o0 as i32;
            for ri in 0..2 {
                let rw = if ri == 0 { 1.0 - dr } else { dr };
                let rr = r0 + ri + 1; // guard ring offset
                for ci in 0..2 {
                    let cw = if ci == 0 { 1.0 - dc } else { dc };
                    let cc = c0 + ci + 1;
                    for oi in 0..2 {
                        let ow = if oi == 0 { 1.0 - dor } else { dor };
                        let oo = (o0 + oi).rem_euclid(n as i32) as usize;
                        let idx =
                            rr as usize * stride_c + cc as usize * stride_o + (oo + 1);
                        hist[idx] += w * rw * cw * ow;
                    }
                }
            }
        }
    }

    // gather interior cells into the flat vector
    let mut vec_out = vec![0f32; d * d * n];
    for r in 0..d {
        for c in 0..d {
            for o in 0..n {
                vec_out[(r * d + c) * n + o] =
                    hist[(r + 1) * stride_c + (c + 1) * stride_o + (o + 1)];
            }
        }
    }

    // normalize, clip, renormalize
    let norm: f32 = vec_out.iter().map(|v| v * v).sum::<f32>().sqrt();
    if norm < 1e-12 {
        return None;
    }
    for v in vec_out.iter_mut() {
        *v = (*v / norm).min(cfg.clip_threshold);
    }
    let norm2: f32 = vec_out.iter().map(|v| v * v).sum::<f32>().sqrt();
    if norm2 < 1e-12 {
        return None;
    }
    for v in vec_out.iter_mut() {
        *v /= norm2;
    }
    Some(vec_out)
}
