//! Visual-word vocabulary: orthophoto descriptors are aggregated onto the
//! DEM pixels they were observed at (one 3D point per occupied pixel), and
//! the descriptor population is quantized into k words with seeded
//! k-means++ / Lloyd iterations.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::DemGrid;
use crate::sift::Descriptor;

/// A DEM pixel observed by one or more descriptors. `x, y` are scene
/// meters at the pixel center, `z` the grid elevation there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point3D {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// (row, col) of the containing DEM pixel.
    pub pixel: (usize, usize),
    /// Indices into the descriptor set that landed on this pixel.
    pub descriptor_ids: Vec<usize>,
}

/// Aggregate descriptors by containing DEM pixel. The orthophoto is pixel
/// registered to the DEM, so the mapping is identity up to rounding.
/// Descriptors falling outside the grid are dropped; the count is returned
/// for the run report.
pub fn lift_to_3d(descriptors: &[Descriptor], dem: &DemGrid) -> (Vec<Point3D>, usize) {
    use std::collections::BTreeMap;
    let mut by_pixel: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    let mut dropped = 0usize;
    for (id, d) in descriptors.iter().enumerate() {
        let col = d.keypoint.x.round() as i64;
        let row = d.keypoint.y.round() as i64;
        if col < 0 || row < 0 || col >= dem.width as i64 || row >= dem.height as i64 {
            dropped += 1;
            continue;
        }
        by_pixel
            .entry((row as usize, col as usize))
            .or_default()
            .push(id);
    }
    let points = by_pixel
        .into_iter()
        .map(|((row, col), descriptor_ids)| {
            let (x, y) = dem.pixel_to_world(row, col);
            Point3D {
                x,
                y,
                z: dem.elevation(row, col) as f64,
                pixel: (row, col),
                descriptor_ids,
            }
        })
        .collect();
    (points, dropped)
}

/// Result of a k-means run. `wcss_history[i]` is the objective right after
/// the i-th assignment step, so it is non-increasing.
#[derive(Debug, Clone)]
pub struct KmeansResult {
    pub centroids: Vec<Vec<f32>>,
    pub assignments: Vec<usize>,
    pub wcss_history: Vec<f64>,
    pub iterations: usize,
}

#[inline]
fn sq_dist(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = 0f64;
    for (x, y) in a.iter().zip(b) {
        let d = (*x - *y) as f64;
        acc += d * d;
    }
    acc
}

fn nearest_centroid(v: &[f32], centroids: &[Vec<f32>]) -> (usize, f64) {
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(v, c);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    (best, best_d)
}

/// Seeded k-means++ initialization followed by Lloyd iterations until the
/// assignment reaches a fixpoint or `max_iters`. Deterministic for a fixed
/// seed; empty clusters are re-seeded from the point farthest from its
/// centroid.
pub fn kmeans(
    vectors: &[Vec<f32>],
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<KmeansResult> {
    use rand::{Rng, SeedableRng};
    let n = vectors.len();
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if n < k {
        return Err(Error::invalid(format!("need at least k = {k} vectors, got {n}")));
    }

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);

    // k-means++ seeding
    let mut centroids: Vec<Vec<f32>> = Vec::with_capacity(k);
    centroids.push(vectors[rng.gen_range(0..n)].clone());
    let mut d2: Vec<f64> = vectors.iter().map(|v| sq_dist(v, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let chosen = if total > 0.0 {
            let mut u = rng.gen::<f64>() * total;
            let mut idx = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    idx = i;
                    break;
                }
                u -= w;
            }
            idx
        } else {
            rng.gen_range(0..n)
        };
        let c = vectors[chosen].clone();
        for (i, v) in vectors.iter().enumerate() {
            let d = sq_dist(v, &c);
            if d < d2[i] {
                d2[i] = d;
            }
        }
        centroids.push(c);
    }

    let mut assignments = vec![0usize; n];
    let mut wcss_history: Vec<f64> = Vec::new();
    let mut iterations = 0usize;

    for _iter in 0..max_iters {
        iterations += 1;
        // assignment step (parallel, order-preserving)
        let new_assign: Vec<(usize, f64)> = vectors
            .par_iter()
            .map(|v| nearest_centroid(v, &centroids))
            .collect();
        let changed = new_assign
            .iter()
            .zip(&assignments)
            .filter(|((a, _), b)| a != *b)
            .count();
        let wcss: f64 = new_assign.iter().map(|(_, d)| d).sum();
        if let Some(&prev) = wcss_history.last() {
            debug_assert!(
                wcss <= prev + prev.abs() * 1e-9 + 1e-9,
                "WCSS increased: {prev} -> {wcss}"
            );
        }
        wcss_history.push(wcss);
        for (i, (a, _)) in new_assign.iter().enumerate() {
            assignments[i] = *a;
        }
        if changed == 0 && iterations > 1 {
            break;
        }

        // update step: per-cluster means, accumulated in input order
        let dim = vectors[0].len();
        let mut sums = vec![vec![0f64; dim]; k];
        let mut counts = vec![0usize; k];
        for (v, &a) in vectors.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, &x) in sums[a].iter_mut().zip(v) {
                *s += x as f64;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                for (dst, s) in centroids[c].iter_mut().zip(&sums[c]) {
                    *dst = (s * inv) as f32;
                }
            }
        }

        // re-seed empty clusters from the globally farthest point
        let empties: Vec<usize> = (0..k).filter(|&c| counts[c] == 0).collect();
        if !empties.is_empty() {
            let mut taken = vec![false; n];
            for e in empties {
                let mut far = None;
                let mut far_d = -1.0f64;
                for (i, v) in vectors.iter().enumerate() {
                    if taken[i] {
                        continue;
                    }
                    let d = sq_dist(v, &centroids[assignments[i]]);
                    if d > far_d {
                        far_d = d;
                        far = Some(i);
                    }
                }
                if let Some(i) = far {
                    centroids[e] = vectors[i].clone();
                    assignments[i] = e;
                    taken[i] = true;
                }
            }
        }
    }

    Ok(KmeansResult {
        centroids,
        assignments,
        wcss_history,
        iterations,
    })
}

/// The quantized model: word centroids plus, per word, the 3D points whose
/// descriptors map to it.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    pub centroids: Vec<Vec<f32>>,
    /// Per word, sorted unique ids into the point list.
    pub word_to_points: Vec<Vec<usize>>,
    /// Per descriptor id, its assigned word.
    pub descriptor_word: Vec<usize>,
}

impl Vocabulary {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }
}

/// Cluster all retained descriptors (those aggregated into `points`) and
/// derive the word-to-point index.
pub fn build_vocabulary(
    descriptors: &[Descriptor],
    points: &[Point3D],
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<Vocabulary> {
    let vectors: Vec<Vec<f32>> = descriptors.iter().map(|d| d.vector.clone()).collect();
    let km = kmeans(&vectors, k, seed, max_iters)?;

    let mut word_to_points = vec![Vec::new(); k];
    for (pid, p) in points.iter().enumerate() {
        let mut seen = std::collections::BTreeSet::new();
        for &did in &p.descriptor_ids {
            seen.insert(km.assignments[did]);
        }
        for w in seen {
            word_to_points[w].push(pid);
        }
    }
    Ok(Vocabulary {
        centroids: km.centroids,
        word_to_points,
        descriptor_word: km.assignments,
    })
}

#[derive(Serialize, Deserialize)]
struct VocabIndex {
    points: Vec<Point3D>,
    word_to_points: Vec<Vec<usize>>,
    descriptor_word: Vec<usize>,
}

/// Persist centroids as binary (`k: u32`, `dim: u32`, centroids f32 LE) and
/// the word/point index as JSON.
pub fn write_vocabulary(
    vocab: &Vocabulary,
    points: &[Point3D],
    bin_path: impl AsRef<Path>,
    json_path: impl AsRef<Path>,
) -> Result<()> {
    let bin_path = bin_path.as_ref();
    let dim = vocab.centroids.first().map(|c| c.len()).unwrap_or(0);
    let file = fs::File::create(bin_path).map_err(|e| Error::io(bin_path, e))?;
    let mut w = BufWriter::new(file);
    let mut buf = [0u8; 4];
    LittleEndian::write_u32(&mut buf, vocab.k() as u32);
    w.write_all(&buf).map_err(|e| Error::io(bin_path, e))?;
    LittleEndian::write_u32(&mut buf, dim as u32);
    w.write_all(&buf).map_err(|e| Error::io(bin_path, e))?;
    for c in &vocab.centroids {
        for &v in c {
            LittleEndian::write_f32(&mut buf, v);
            w.write_all(&buf).map_err(|e| Error::io(bin_path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(bin_path, e))?;

    let json_path = json_path.as_ref();
    let index = VocabIndex {
        points: points.to_vec(),
        word_to_points: vocab.word_to_points.clone(),
        descriptor_word: vocab.descriptor_word.clone(),
    };
    let text = serde_json::to_string(&index).map_err(|e| Error::format(json_path, e.to_string()))?;
    fs::write(json_path, text).map_err(|e| Error::io(json_path, e))
}

pub fn read_vocabulary(
    bin_path: impl AsRef<Path>,
    json_path: impl AsRef<Path>,
) -> Result<(Vocabulary, Vec<Point3D>)> {
    let bin_path = bin_path.as_ref();
    let bytes = fs::read(bin_path).map_err(|e| Error::io(bin_path, e))?;
    if bytes.len() < 8 {
        return Err(Error::format(bin_path, "truncated vocabulary"));
    }
    let k = LittleEndian::read_u32(&bytes[0..4]) as usize;
    let dim = LittleEndian::read_u32(&bytes[4..8]) as usize;
    if bytes.len() != 8 + k * dim * 4 {
        return Err(Error::format(bin_path, "vocabulary size mismatch"));
    }
    let mut centroids = Vec::with_capacity(k);
    let mut pos = 8;
    for _ in 0..k {
        let mut c = vec![0f32; dim];
        LittleEndian::read_f32_into(&bytes[pos..pos + dim * 4], &mut c);
        pos += dim * 4;
        centroids.push(c);
    }

    let json_path = json_path.as_ref();
    let text = fs::read_to_string(json_path).map_err(|e| Error::io(json_path, e))?;
    let index: VocabIndex =
        serde_json::from_str(&text).map_err(|e| Error::format(json_path, e.to_string()))?;
    if index.word_to_points.len() != k {
        return Err(Error::format(json_path, "word count disagrees with centroid file"));
    }
    Ok((
        Vocabulary {
            centroids,
            word_to_points: index.word_to_points,
            descriptor_word: index.descriptor_word,
        },
        index.points,
    ))
}
