//! Wetness band-ratio index, scene-adaptive threshold, and beta-distribution
//! diagnostics for the inverse-ratio statistic.
//!
//! The index divides the summed response over the 1.55-1.75 um window by the
//! summed response over the 2.09-2.35 um window. Live vegetation and wet
//! surfaces slope downward across that span (ratio > 1); dry manmade
//! surfaces slope upward (ratio < 1). Window membership is inclusive on
//! both ends.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raster::{DemGrid, HyperCube};

/// Numerator window, micrometers (inclusive).
pub const NUM_WINDOW: (f64, f64) = (1.55, 1.75);
/// Denominator window, micrometers (inclusive).
pub const DEN_WINDOW: (f64, f64) = (2.09, 2.35);

/// Sentinel stored for pixels whose denominator fell below the guard.
/// Valid ratios are strictly positive, so any negative value is safe.
pub const WETNESS_SENTINEL: f64 = -1.0;

/// Relative denominator guard: eps = `EPS_DEN_REL` x (scene max value).
const EPS_DEN_REL: f64 = 1e-9;

/// How the two window responses are aggregated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WetnessMode {
    /// Plain sums over each window. With unequal band counts a flat
    /// spectrum's ratio is N1/N2, not 1.
    SumLiteral,
    /// Each sum divided by its band count, restoring flat-spectrum
    /// neutrality.
    MeanNormalized,
}

impl Default for WetnessMode {
    fn default() -> Self {
        WetnessMode::SumLiteral
    }
}

/// Per-pixel wetness ratios for a scene. `width` = cube samples,
/// `height` = cube lines. Invalid pixels hold [`WETNESS_SENTINEL`].
#[derive(Debug, Clone, PartialEq)]
pub struct WetnessMap {
    pub width: usize,
    pub height: usize,
    pub ratios: Vec<f64>,
}

impl WetnessMap {
    #[inline]
    pub fn ratio(&self, x: usize, y: usize) -> f64 {
        self.ratios[y * self.width + x]
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.ratio(x, y) != WETNESS_SENTINEL
    }

    pub fn valid_count(&self) -> usize {
        self.ratios.iter().filter(|&&r| r != WETNESS_SENTINEL).count()
    }

    /// Repackage as the raw-grid + sidecar format for inspection.
    pub fn to_grid(&self) -> DemGrid {
        let vals: Vec<f32> = self.ratios.iter().map(|&r| r as f32).collect();
        DemGrid::new(self.width, self.height, 1.0, 0.0, 0.0, vals)
            .expect("wetness map dims are valid by construction")
    }
}

/// Band indices covered by each window, with the axis validated once per
/// cube so per-pixel evaluation is a plain indexed sum.
#[derive(Debug, Clone)]
pub struct WetnessBands {
    pub numerator: Vec<usize>,
    pub denominator: Vec<usize>,
    pub mode: WetnessMode,
}

impl WetnessBands {
    pub fn for_axis(wavelengths: &[f64], mode: WetnessMode) -> Result<Self> {
        let in_window = |lo: f64, hi: f64| -> Vec<usize> {
            wavelengths
                .iter()
                .enumerate()
                .filter(|(_, &w)| w >= lo && w <= hi)
                .map(|(i, _)| i)
                .collect()
        };
        let numerator = in_window(NUM_WINDOW.0, NUM_WINDOW.1);
        let denominator = in_window(DEN_WINDOW.0, DEN_WINDOW.1);
        if numerator.is_empty() {
            return Err(Error::invalid(format!(
                "wavelength axis has no bands in the {:.2}-{:.2} um numerator window",
                NUM_WINDOW.0, NUM_WINDOW.1
            )));
        }
        if denominator.is_empty() {
            return Err(Error::invalid(format!(
                "wavelength axis has no bands in the {:.2}-{:.2} um denominator window",
                DEN_WINDOW.0, DEN_WINDOW.1
            )));
        }
        Ok(WetnessBands {
            numerator,
            denominator,
            mode,
        })
    }

    /// Ratio for one spectrum, or `None` when the denominator sum falls at
    /// or below `eps_den` (shadow / dead-sensor pixels).
    pub fn index(&self, spectrum: &[f32], eps_den: f64) -> Option<f64> {
        let mut num = 0f64;
        for &i in &self.numerator {
            num += spectrum[i] as f64;
        }
        let mut den = 0f64;
        for &i in &self.denominator {
            den += spectrum[i] as f64;
        }
        if self.mode == WetnessMode::MeanNormalized {
            num /= self.numerator.len() as f64;
            den /= self.denominator.len() as f64;
        }
        if den <= eps_den {
            return None;
        }
        Some(num / den)
    }
}

/// Wetness ratio of a single spectrum under the literal (summed) index.
/// The denominator guard is scaled from the spectrum's own peak value.
pub fn wetness_index(spectrum: &[f32], wavelengths: &[f64]) -> Result<f64> {
    if spectrum.len() != wavelengths.len() {
        return Err(Error::invalid("spectrum and wavelength axis length differ"));
    }
    let bands = WetnessBands::for_axis(wavelengths, WetnessMode::SumLiteral)?;
    let peak = spectrum.iter().fold(0f64, |m, &v| m.max(v.abs() as f64));
    bands
        .index(spectrum, EPS_DEN_REL * peak)
        .ok_or_else(|| Error::invalid("denominator window sum below guard"))
}

/// Apply the index to every pixel of a cube. Pixels failing the
/// denominator guard carry [`WETNESS_SENTINEL`] and are excluded from
/// threshold estimation.
pub fn wetness_map(cube: &HyperCube, mode: WetnessMode) -> Result<WetnessMap> {
    let bands = WetnessBands::for_axis(&cube.wavelengths, mode)?;
    let scene_max = cube.values().iter().fold(0f64, |m, &v| m.max(v.abs() as f64));
    let eps_den = EPS_DEN_REL * scene_max;

    let (w, h) = (cube.samples, cube.lines);
    let ratios: Vec<f64> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let (y, x) = (i / w, i % w);
            let spectrum = cube.spectrum(y, x);
            bands.index(&spectrum, eps_den).unwrap_or(WETNESS_SENTINEL)
        })
        .collect();

    Ok(WetnessMap {
        width: w,
        height: h,
        ratios,
    })
}

/// Halfway between the lowest and highest valid ratios in the scene.
pub fn adaptive_threshold(map: &WetnessMap) -> Result<f64> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &r in &map.ratios {
        if r != WETNESS_SENTINEL {
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    if lo > hi {
        return Err(Error::invalid("wetness map has no valid pixels"));
    }
    Ok((lo + hi) / 2.0)
}

// ---------------------------------------------------------------------------
// Beta-distribution diagnostics for the inverse-ratio statistic
// ---------------------------------------------------------------------------

/// Shape parameters of a beta distribution on (0,1).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct BetaParams {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite() && beta > 0.0 && beta.is_finite()) {
            return Err(Error::invalid("beta shape parameters must be positive"));
        }
        Ok(BetaParams { alpha, beta })
    }
}

/// Lanczos approximation of ln Gamma(x) for x > 0 (g = 7, 9 terms).
fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // reflection keeps the small-argument branch accurate
        return std::f64::consts::PI.ln()
            - (std::f64::consts::PI * x).sin().ln()
            - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = 0.99999999999980993;
    for (i, &c) in COEF.iter().enumerate() {
        acc += c / (x + (i + 1) as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

fn ln_beta_fn(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Beta density at `x` in the open interval (0,1).
pub fn beta_pdf(x: f64, p: BetaParams) -> Result<f64> {
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::invalid("beta pdf argument must lie in (0,1)"));
    }
    let ln_pdf =
        (p.alpha - 1.0) * x.ln() + (p.beta - 1.0) * (1.0 - x).ln() - ln_beta_fn(p.alpha, p.beta);
    Ok(ln_pdf.exp())
}

/// Method-of-moments fit: alpha = m(m(1-m)/v - 1), beta = (1-m)(m(1-m)/v - 1),
/// with m the sample mean and v the unbiased sample variance.
pub fn beta_fit_moments(samples: &[f64]) -> Result<BetaParams> {
    if samples.len() < 2 {
        return Err(Error::invalid("beta fit needs at least 2 samples"));
    }
    if samples.iter().any(|&s| !(s > 0.0 && s < 1.0)) {
        return Err(Error::invalid("beta fit samples must lie in (0,1)"));
    }
    let n = samples.len() as f64;
    let m = samples.iter().sum::<f64>() / n;
    let v = samples.iter().map(|&s| (s - m) * (s - m)).sum::<f64>() / (n - 1.0);
    if v == 0.0 {
        return Err(Error::invalid("beta fit needs nonzero sample variance"));
    }
    if v >= m * (1.0 - m) {
        return Err(Error::invalid(
            "sample variance too large for the beta family (v >= m(1-m))",
        ));
    }
    let k = m * (1.0 - m) / v - 1.0;
    BetaParams::new(m * k, (1.0 - m) * k)
}
