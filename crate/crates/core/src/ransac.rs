//! Planar-transform fitting and randomized consensus with SPRT early
//! termination.
//!
//! World points enter in DEM plane coordinates (x, y); elevation rides
//! along in the correspondence but does not constrain the 2D alignment.
//! A hypothesis is verified by scanning correspondences in random order
//! while a sequential probability ratio accumulates; clearly-bad models
//! are abandoned after a handful of evaluations, which is where the
//! speedup over plain consensus comes from. Registration is accepted when
//! the final model has more than `min_inliers_exceed` inliers.
//!
//! The SPRT internals (initial epsilon/delta, the threshold fixed-point
//! iteration, and the re-estimation rules) are engineering reconstructions
//! around the published test, not published constants.

use nalgebra::{DMatrix, SMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Row-major 3x3 projective transform, normalized so the bottom-right
/// entry is 1 where possible (Frobenius norm 1 otherwise).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HomographyModel {
    pub m: [[f64; 3]; 3],
}

impl HomographyModel {
    pub fn identity() -> Self {
        HomographyModel {
            m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        HomographyModel {
            m: [[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]],
        }
    }

    /// Normalize scale: bottom-right entry to 1, or Frobenius norm 1 when
    /// that entry vanishes.
    pub fn normalized(m: [[f64; 3]; 3]) -> Self {
        let h22 = m[2][2];
        let mut out = m;
        if h22.abs() > 1e-12 {
            for row in out.iter_mut() {
                for v in row.iter_mut() {
                    *v /= h22;
                }
            }
        } else {
            let frob: f64 = m.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
            for row in out.iter_mut() {
                for v in row.iter_mut() {
                    *v /= frob;
                }
            }
        }
        HomographyModel { m: out }
    }

    /// Project a point; `None` when it maps to the plane at infinity.
    pub fn project(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        let m = &self.m;
        let w = m[2][0] * x + m[2][1] * y + m[2][2];
        if w.abs() < 1e-12 {
            return None;
        }
        Some((
            (m[0][0] * x + m[0][1] * y + m[0][2]) / w,
            (m[1][0] * x + m[1][1] * y + m[1][2]) / w,
        ))
    }
}

/// One 2D-to-2D constraint: an image point and its world-plane target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointPair {
    pub image: (f64, f64),
    pub world: (f64, f64),
}

/// Transform family fitted inside the consensus loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Homography,
    /// Rotation + uniform scale + translation; 2-pair minimal sets for
    /// constrained scenes.
    Similarity,
}

impl ModelKind {
    pub fn minimal_pairs(self) -> usize {
        match self {
            ModelKind::Homography => 4,
            ModelKind::Similarity => 2,
        }
    }
}

/// Hartley normalization: centroid to the origin, mean distance sqrt(2).
fn normalize_points(pts: &[(f64, f64)]) -> Option<(Vec<(f64, f64)>, [[f64; 3]; 3])> {
    let n = pts.len() as f64;
    let (mut cx, mut cy) = (0f64, 0f64);
    for &(x, y) in pts {
        cx += x;
        cy += y;
    }
    cx /= n;
    cy /= n;
    let mut mean_d = 0f64;
    for &(x, y) in pts {
        mean_d += ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
    }
    mean_d /= n;
    if mean_d < 1e-12 {
        return None; // all points coincide
    }
    let s = std::f64::consts::SQRT_2 / mean_d;
    let out = pts
        .iter()
        .map(|&(x, y)| ((x - cx) * s, (y - cy) * s))
        .collect();
    let t = [[s, 0.0, -s * cx], [0.0, s, -s * cy], [0.0, 0.0, 1.0]];
    Some((out, t))
}

fn mat_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0f64; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for (k, bk) in b.iter().enumerate() {
                out[i][j] += a[i][k] * bk[j];
            }
        }
    }
    out
}

fn invert_similarity_transform(t: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    // t is [s, 0, -s cx; 0, s, -s cy; 0 0 1]
    let s = t[0][0];
    let inv = 1.0 / s;
    [
        [inv, 0.0, -t[0][2] * inv / s * s], // -(-s cx)/s = cx
        [0.0, inv, -t[1][2] * inv / s * s],
        [0.0, 0.0, 1.0],
    ]
}

/// True when any 3 of the points are (nearly) collinear, relative to the
/// point-set span.
fn has_collinear_triple(pts: &[(f64, f64)]) -> bool {
    let span = pts
        .iter()
        .flat_map(|&(x, y)| [x.abs(), y.abs()])
        .fold(1f64, f64::max);
    let eps = 1e-9 * span * span;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            for k in j + 1..pts.len() {
                let (ax, ay) = pts[i];
                let (bx, by) = pts[j];
                let (cx, cy) = pts[k];
                let area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax);
                if area.abs() <= eps {
                    return true;
                }
            }
        }
    }
    false
}

/// Direct linear transform with isotropic normalization of both sides.
/// Exact interpolation for 4 non-degenerate pairs, least squares beyond.
/// The null vector comes from the smallest eigenpair of the 9x9 normal
/// matrix, the same path used for the post-consensus refit.
pub fn fit_homography_dlt(pairs: &[PointPair]) -> Result<HomographyModel> {
    if pairs.len() < 4 {
        return Err(Error::invalid(format!(
            "homography needs at least 4 pairs, got {}",
            pairs.len()
        )));
    }
    let src: Vec<(f64, f64)> = pairs.iter().map(|p| p.image).collect();
    let dst: Vec<(f64, f64)> = pairs.iter().map(|p| p.world).collect();
    if pairs.len() == 4 && (has_collinear_triple(&src) || has_collinear_triple(&dst)) {
        return Err(Error::Degenerate(
            "3 of 4 points are collinear".to_string(),
        ));
    }
    let (src_n, t_src) =
        normalize_points(&src).ok_or_else(|| Error::Degenerate("coincident source points".into()))?;
    let (dst_n, t_dst) =
        normalize_points(&dst).ok_or_else(|| Error::Degenerate("coincident target points".into()))?;

    // normal matrix A^T A accumulated row by row
    let mut ata = SMatrix::<f64, 9, 9>::zeros();
    let mut add_row = |row: [f64; 9]| {
        for i in 0..9 {
            for j in i..9 {
                ata[(i, j)] += row[i] * row[j];
            }
        }
    };
    for (s, d) in src_n.iter().zip(&dst_n) {
        let (x, y) = *s;
        let (u, v) = *d;
        add_row([-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u]);
        add_row([0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v]);
    }
    for i in 0..9 {
        for j in 0..i {
            ata[(i, j)] = ata[(j, i)];
        }
    }

    let eig = ata.symmetric_eigen();
    let mut min_i = 0usize;
    for i in 1..9 {
        if eig.eigenvalues[i] < eig.eigenvalues[min_i] {
            min_i = i;
        }
    }
    let h = eig.eigenvectors.column(min_i);
    let hn = [
        [h[0], h[1], h[2]],
        [h[3], h[4], h[5]],
        [h[6], h[7], h[8]],
    ];

    // denormalize: H = T_dst^-1 * Hn * T_src
    let t_dst_inv = invert_similarity_transform(&t_dst);
    let hm = mat_mul(&mat_mul(&t_dst_inv, &hn), &t_src);
    let model = HomographyModel::normalized(hm);
    if model.m.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("homography fit produced non-finite entries".into()));
    }
    Ok(model)
}

/// Least-squares similarity transform (rotation, uniform scale,
/// translation) embedded as a homography. Exact for 2 distinct pairs.
pub fn fit_similarity(pairs: &[PointPair]) -> Result<HomographyModel> {
    if pairs.len() < 2 {
        return Err(Error::invalid("similarity needs at least 2 pairs"));
    }
    let n = pairs.len() as f64;
    let (mut sx, mut sy, mut dx, mut dy) = (0f64, 0f64, 0f64, 0f64);
    for p in pairs {
        sx += p.image.0;
        sy += p.image.1;
        dx += p.world.0;
        dy += p.world.1;
    }
    let (sx, sy, dx, dy) = (sx / n, sy / n, dx / n, dy / n);
    let (mut sab, mut scross, mut snorm) = (0f64, 0f64, 0f64);
    for p in pairs {
        let (ax, ay) = (p.image.0 - sx, p.image.1 - sy);
        let (bx, by) = (p.world.0 - dx, p.world.1 - dy);
        sab += ax * bx + ay * by;
        scross += ax * by - ay * bx;
        snorm += ax * ax + ay * ay;
    }
    if snorm < 1e-12 {
        return Err(Error::Degenerate("coincident source points".into()));
    }
    let a = sab / snorm;
    let b = scross / snorm;
    let tx = dx - a * sx + b * sy;
    let ty = dy - b * sx - a * sy;
    Ok(HomographyModel::normalized([
        [a, -b, tx],
        [b, a, ty],
        [0.0, 0.0, 1.0],
    ]))
}

fn fit_model(kind: ModelKind, pairs: &[PointPair]) -> Result<HomographyModel> {
    match kind {
        ModelKind::Homography => fit_homography_dlt(pairs),
        ModelKind::Similarity => fit_similarity(pairs),
    }
}

/// Euclidean distance between the projected image point and its world
/// target, in world pixels. Projection onto the plane at infinity counts
/// as an infinite error (outlier).
pub fn reprojection_error(model: &HomographyModel, pair: &PointPair) -> f64 {
    match model.project(pair.image.0, pair.image.1) {
        Some((x, y)) => ((x - pair.world.0).powi(2) + (y - pair.world.1).powi(2)).sqrt(),
        None => f64::INFINITY,
    }
}

/// Consensus-loop configuration. Acceptance requires strictly more than
/// `min_inliers_exceed` inliers.
#[derive(Debug, Clone, Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RansacConfig {
    pub tolerance_px: f64,
    pub confidence: f64,
    pub sprt: bool,
    pub model: ModelKind,
    pub max_iterations: usize,
    pub min_inliers_exceed: usize,
}

impl Default for RansacConfig {
    fn default() -> Self {
        RansacConfig {
            tolerance_px: 2.0,
            confidence: 0.99,
            sprt: true,
            model: ModelKind::Homography,
            max_iterations: 10_000,
            min_inliers_exceed: 5,
        }
    }
}

/// Sequential probability ratio test state for hypothesis verification.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SprtState {
    /// Inlier ratio estimate for a good model.
    pub epsilon: f64,
    /// Inlier rate of a bad (random) model.
    pub delta: f64,
    /// Decision threshold: reject once the likelihood ratio exceeds it.
    pub a: f64,
    pub models_tested: usize,
    pub points_evaluated: usize,
}

impl SprtState {
    fn new(epsilon: f64, delta: f64) -> Self {
        assert!(0.0 < delta && delta < epsilon && epsilon < 1.0);
        let mut s = SprtState {
            epsilon,
            delta,
            a: 1.0,
            models_tested: 0,
            points_evaluated: 0,
        };
        s.recompute_threshold();
        s
    }

    /// Fixed-point iteration for the decision threshold:
    /// A <- C * t_M / m_S + 1 + ln A, with C from the error rates and
    /// t_M = 100 (model fit cost in point evaluations), m_S = 1.
    fn recompute_threshold(&mut self) {
        const T_M: f64 = 100.0;
        const M_S: f64 = 1.0;
        let (e, d) = (self.epsilon, self.delta);
        let c = (1.0 - d) * ((1.0 - d) / (1.0 - e)).ln() + d * (d / e).ln();
        let base = c * T_M / M_S + 1.0;
        let mut a = base.max(1.5);
        for _ in 0..200 {
            let next = base + a.ln();
            if (next - a).abs() < 1e-4 {
                a = next;
                break;
            }
            a = next;
        }
        self.a = a.max(1.0 + 1e-6);
    }
}

/// Outcome of the consensus loop. `accepted` iff the inlier count exceeds
/// the configured bound; `points_evaluated` counts verification error
/// evaluations only.
#[derive(Debug, Clone)]
pub struct RansacResult {
    pub model: HomographyModel,
    pub inlier_ids: Vec<usize>,
    pub iterations: usize,
    pub points_evaluated: usize,
    pub accepted: bool,
    pub sprt: SprtState,
}

fn splitmix(seed: u64, salt: u64) -> u64 {
    let mut z = seed
        .wrapping_add(salt.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sample `m` distinct indices from `0..n` (partial Fisher-Yates), and the
/// full verification order, both as pure functions of (seed, iteration) so
/// SPRT-on and SPRT-off runs walk the same hypothesis stream.
fn draw_iteration(seed: u64, iter: usize, n: usize, m: usize) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed, iter as u64));
    let mut idx: Vec<usize> = (0..n).collect();
    for j in 0..m.min(n) {
        let swap = rng.gen_range(j..n);
        idx.swap(j, swap);
    }
    let sample = idx[..m].to_vec();
    let mut order: Vec<usize> = (0..n).collect();
    for j in (1..n).rev() {
        let swap = rng.gen_range(0..=j);
        order.swap(j, swap);
    }
    (sample, order)
}

/// Randomized consensus with optional SPRT early termination. With
/// `sprt: false` the contract is identical but every hypothesis is
/// verified exhaustively.
pub fn ransac(pairs: &[PointPair], cfg: &RansacConfig, seed: u64) -> Result<RansacResult> {
    let m = cfg.model.minimal_pairs();
    if pairs.len() < m {
        return Err(Error::invalid(format!(
            "consensus needs at least {m} pairs, got {}",
            pairs.len()
        )));
    }
    if !(cfg.confidence > 0.0 && cfg.confidence < 1.0) {
        return Err(Error::invalid("confidence must lie in (0,1)"));
    }
    let n = pairs.len();
    let tol = cfg.tolerance_px;

    let mut sprt = SprtState::new(0.2, 0.05);
    // values A was last computed from, for the 5% re-computation rule
    let mut a_basis = (sprt.epsilon, sprt.delta);
    let mut delta_sum = 0f64;
    let mut delta_count = 0usize;

    let mut best: Option<(Vec<usize>, HomographyModel, f64)> = None;
    let mut adaptive_n = cfg.max_iterations;
    let mut iterations = 0usize;
    let mut degenerate_draws = 0usize;

    while iterations < adaptive_n.min(cfg.max_iterations) {
        let iter = iterations;
        iterations += 1;
        let (sample, order) = draw_iteration(seed, iter, n, m);

        let minimal: Vec<PointPair> = sample.iter().map(|&i| pairs[i]).collect();
        let model = match fit_model(cfg.model, &minimal) {
            Ok(mdl) => mdl,
            Err(_) => {
                degenerate_draws += 1;
                if degenerate_draws > 10 * adaptive_n.min(cfg.max_iterations).max(100) {
                    return Err(Error::Degenerate(
                        "all sampled minimal sets degenerate".into(),
                    ));
                }
                continue;
            }
        };
        sprt.models_tested += 1;

        // verify in the shuffled order
        let mut inliers: Vec<usize> = Vec::new();
        let mut err_sum = 0f64;
        let mut evaluated = 0usize;
        let mut rejected_early = false;
        let mut lambda = 1f64;
        let lr_in = sprt.delta / sprt.epsilon;
        let lr_out = (1.0 - sprt.delta) / (1.0 - sprt.epsilon);
        for &pi in &order {
            let e = reprojection_error(&model, &pairs[pi]);
            evaluated += 1;
            sprt.points_evaluated += 1;
            if e <= tol {
                inliers.push(pi);
                err_sum += e;
                lambda *= lr_in;
            } else {
                lambda *= lr_out;
            }
            if cfg.sprt && lambda > sprt.a {
                rejected_early = true;
                break;
            }
        }

        let mut is_new_best = false;
        if !rejected_early {
            let better = match &best {
                None => !inliers.is_empty(),
                Some((bi, _, be)) => {
                    inliers.len() > bi.len() || (inliers.len() == bi.len() && err_sum < *be)
                }
            };
            if better {
                is_new_best = true;
                let ratio = inliers.len() as f64 / n as f64;
                best = Some((std::mem::take(&mut inliers), model, err_sum));
                if ratio > sprt.epsilon {
                    sprt.epsilon = ratio.min(1.0 - 1e-9);
                }
                // adaptive cap from the best inlier ratio so far
                let denom = (1.0 - ratio.powi(m as i32)).max(1e-12);
                adaptive_n = if ratio >= 1.0 {
                    1
                } else {
                    ((1.0 - cfg.confidence).ln() / denom.ln()).ceil().max(1.0) as usize
                };
            }
        }
        if !is_new_best {
            // every verified non-best model feeds the bad-model inlier rate
            let frac = if evaluated > 0 {
                inliers.len() as f64 / evaluated as f64
            } else {
                0.0
            };
            delta_sum += frac;
            delta_count += 1;
            let mean = delta_sum / delta_count as f64;
            sprt.delta = mean.clamp(0.01, sprt.epsilon / 2.0);
        }
        // recompute the threshold when either rate drifted > 5% relative
        let drift = |now: f64, was: f64| (now - was).abs() > 0.05 * was.abs();
        if drift(sprt.epsilon, a_basis.0) || drift(sprt.delta, a_basis.1) {
            sprt.delta = sprt.delta.clamp(0.01, sprt.epsilon / 2.0);
            sprt.recompute_threshold();
            a_basis = (sprt.epsilon, sprt.delta);
        }
    }

    let Some((minimal_inliers, minimal_model, _)) = best else {
        return Ok(RansacResult {
            model: HomographyModel::identity(),
            inlier_ids: Vec::new(),
            iterations,
            points_evaluated: sprt.points_evaluated,
            accepted: false,
            sprt,
        });
    };

    // least-squares refit on the inlier set, then re-derive the inliers
    // under the refined model so the reported pair is self-consistent
    let (model, inlier_ids) = if minimal_inliers.len() > m {
        let subset: Vec<PointPair> = minimal_inliers.iter().map(|&i| pairs[i]).collect();
        match fit_model(cfg.model, &subset) {
            Ok(refined) => {
                let re_in: Vec<usize> = (0..n)
                    .filter(|&i| reprojection_error(&refined, &pairs[i]) <= tol)
                    .collect();
                if re_in.len() >= minimal_inliers.len() {
                    (refined, re_in)
                } else {
                    (minimal_model, minimal_inliers)
                }
            }
            Err(_) => (minimal_model, minimal_inliers),
        }
    } else {
        (minimal_model, minimal_inliers)
    };

    let accepted = inlier_ids.len() > cfg.min_inliers_exceed;
    Ok(RansacResult {
        model,
        inlier_ids,
        iterations,
        points_evaluated: sprt.points_evaluated,
        accepted,
        sprt,
    })
}
