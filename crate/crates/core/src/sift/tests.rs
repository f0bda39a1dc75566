use super::scale_space::{build_pyramid, gaussian_blur, FloatImage};
use super::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn image_from(data: Vec<f32>, w: usize, h: usize) -> GrayImage {
    GrayImage::new(w, h, data).unwrap()
}

/// Sum of random Gaussian bumps on a mid-gray background; enough structure
/// for the detector without any special tuning.
fn bump_field(w: usize, h: usize, n: usize, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = vec![0.5f32; w * h];
    for _ in 0..n {
        let cx = rng.gen_range(8.0..(w as f32 - 8.0));
        let cy = rng.gen_range(8.0..(h as f32 - 8.0));
        let sigma = rng.gen_range(1.5f32..5.0);
        let amp = rng.gen_range(0.15f32..0.4) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let inv = -0.5 / (sigma * sigma);
        for y in 0..h {
            for x in 0..w {
                let dx = x as f32 - cx;
                let dy = y as f32 - cy;
                data[y * w + x] += amp * ((dx * dx + dy * dy) * inv).exp();
            }
        }
    }
    for v in data.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    image_from(data, w, h)
}

fn gaussian_blob(w: usize, h: usize, cx: f32, cy: f32, sigma: f32) -> GrayImage {
    let inv = -0.5 / (sigma * sigma);
    let mut data = vec![0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let dx = x as f32 - cx;
            let dy = y as f32 - cy;
            data[y * w + x] = ((dx * dx + dy * dy) * inv).exp();
        }
    }
    image_from(data, w, h)
}

#[test]
fn constant_image_has_no_keypoints() {
    let img = image_from(vec![0.4; 64 * 64], 64, 64);
    let ds = detect_and_describe(&img, &SiftConfig::default()).unwrap();
    assert!(ds.is_empty());
}

#[test]
fn too_small_image_is_rejected() {
    let img = image_from(vec![0.4; 31 * 40], 31, 40);
    assert!(detect_and_describe(&img, &SiftConfig::default()).is_err());
}

/// Brute-force DoG response scan: blur the image at a ladder of sigmas,
/// difference consecutive levels, and return the location and lower sigma
/// of the strongest response anywhere.
fn dog_oracle(img: &GrayImage, sigmas: &[f32]) -> (f32, f32, f32) {
    let base = FloatImage::from_data(img.width, img.height, img.intensities().to_vec());
    let blurred: Vec<FloatImage> = sigmas.iter().map(|&s| gaussian_blur(&base, s)).collect();
    let mut best = (0usize, 0usize, 0usize, 0f32);
    for i in 0..blurred.len() - 1 {
        for y in 0..img.height {
            for x in 0..img.width {
                let d = (blurred[i + 1].get(x, y) - blurred[i].get(x, y)).abs();
                if d > best.3 {
                    best = (x, y, i, d);
                }
            }
        }
    }
    (best.0 as f32, best.1 as f32, sigmas[best.2])
}

#[test]
fn gaussian_blob_detected_near_center_at_matching_scale() {
    let blob_sigma = 4.0f32;
    let img = gaussian_blob(64, 64, 32.0, 32.0, blob_sigma);
    let ds = detect_and_describe(&img, &SiftConfig::default()).unwrap();
    assert!(!ds.is_empty(), "no keypoints on a bright blob");

    // oracle scan over a dense sigma ladder
    let sigmas: Vec<f32> = (0..12).map(|i| 1.6 * 2f32.powf(i as f32 / 4.0)).collect();
    let (ox, oy, _osigma) = dog_oracle(&img, &sigmas);
    assert!((ox - 32.0).abs() <= 1.5 && (oy - 32.0).abs() <= 1.5);

    let best = ds
        .iter()
        .min_by(|a, b| {
            let da = (a.keypoint.x - 32.0).hypot(a.keypoint.y - 32.0);
            let db = (b.keypoint.x - 32.0).hypot(b.keypoint.y - 32.0);
            da.total_cmp(&db)
        })
        .unwrap();
    let dist = (best.keypoint.x - 32.0).hypot(best.keypoint.y - 32.0);
    assert!(dist <= 1.5, "keypoint {dist} px from blob center");
    let ratio = best.keypoint.scale / blob_sigma;
    assert!(
        (1.0 / 1.5..=1.5).contains(&ratio),
        "scale {} vs blob sigma {}",
        best.keypoint.scale,
        blob_sigma
    );
}

#[test]
fn descriptor_norms_are_unit() {
    let img = bump_field(96, 96, 30, 9);
    let ds = detect_and_describe(&img, &SiftConfig::default()).unwrap();
    assert!(ds.len() >= 10, "expected a healthy keypoint count");
    for d in &ds {
        let norm: f32 = d.vector.iter().map(|v| v * v).sum::<f32>().sqrt();
        assert!((norm - 1.0).abs() <= 1e-6, "norm {norm}");
        assert!(d.vector.iter().all(|&v| v >= 0.0));
    }
}

#[test]
fn detection_is_deterministic() {
    let img = bump_field(96, 96, 25, 4);
    let a = detect_and_describe(&img, &SiftConfig::default()).unwrap();
    let b = detect_and_describe(&img, &SiftConfig::default()).unwrap();
    assert_eq!(a, b);
}

/// Rotate a square image 90 degrees clockwise: (x, y) -> (h-1-y, x).
fn rotate90cw(img: &GrayImage) -> GrayImage {
    let (w, h) = (img.width, img.height);
    let mut data = vec![0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let nx = h - 1 - y;
            let ny = x;
            data[ny * h + nx] = img.get(x, y);
        }
    }
    GrayImage::new(h, w, data).unwrap()
}

#[test]
fn rotation_90_repeatability() {
    let img = bump_field(96, 96, 30, 21);
    let rot = rotate90cw(&img);
    let a = detect_and_describe(&img, &SiftConfig::default()).unwrap();
    let b = detect_and_describe(&rot, &SiftConfig::default()).unwrap();
    assert!(!a.is_empty() && !b.is_empty());

    // map rotated keypoints back into original coordinates
    let h = img.height as f32;
    let back: Vec<(f32, f32, f32)> = b
        .iter()
        .map(|d| (d.keypoint.y, h - 1.0 - d.keypoint.x, d.keypoint.scale))
        .collect();

    let mut matched = 0usize;
    for d in &a {
        let hit = back.iter().any(|&(bx, by, bs)| {
            (bx - d.keypoint.x).hypot(by - d.keypoint.y) <= 1.5
                && (bs / d.keypoint.scale) <= 1.3
                && (d.keypoint.scale / bs) <= 1.3
        });
        if hit {
            matched += 1;
        }
    }
    let repeatability = matched as f32 / a.len() as f32;
    assert!(
        repeatability >= 0.8,
        "repeatability {repeatability} ({matched}/{})",
        a.len()
    );
}

fn shift_errors(shift: (usize, usize), max_scale: f32) -> Vec<f32> {
    // same pattern pasted at two offsets inside a larger flat canvas
    let pat = bump_field(96, 96, 45, 33);
    let paste = |ox: usize, oy: usize| -> GrayImage {
        let mut data = vec![0.5f32; 144 * 144];
        for y in 0..96 {
            for x in 0..96 {
                data[(y + oy) * 144 + (x + ox)] = pat.get(x, y);
            }
        }
        image_from(data, 144, 144)
    };
    let img_a = paste(8, 8);
    let img_b = paste(8 + shift.0, 8 + shift.1);
    let a = detect_and_describe(&img_a, &SiftConfig::default()).unwrap();
    let b = detect_and_describe(&img_b, &SiftConfig::default()).unwrap();

    // interior of the pasted pattern in image-a coordinates
    let interior = |kx: f32, ky: f32| kx > 24.0 && kx < 88.0 && ky > 24.0 && ky < 88.0;
    a.iter()
        .filter(|d| interior(d.keypoint.x, d.keypoint.y) && d.keypoint.scale <= max_scale)
        .map(|d| {
            let (ex, ey) = (d.keypoint.x + shift.0 as f32, d.keypoint.y + shift.1 as f32);
            b.iter()
                .map(|o| (o.keypoint.x - ex).hypot(o.keypoint.y - ey))
                .fold(f32::INFINITY, f32::min)
        })
        .collect()
}

#[test]
fn integer_shift_moves_interior_keypoints() {
    // arbitrary offset: keypoints whose octave grid resolves the shift
    // (octave 0 here) reproduce within half a pixel
    let fine = shift_errors((5, 3), 3.5);
    assert!(fine.len() >= 5, "too few interior keypoints ({})", fine.len());
    for e in &fine {
        assert!(*e <= 0.5, "fine-scale keypoint moved {e} px off the shift");
    }

    // octave-aligned offset: every interior keypoint reproduces
    let all = shift_errors((8, 4), f32::INFINITY);
    assert!(all.len() >= 5);
    for e in &all {
        assert!(*e <= 0.5, "keypoint moved {e} px off the aligned shift");
    }
}

#[test]
fn pyramid_structure_sanity() {
    let img = FloatImage::from_data(64, 64, vec![0.0; 64 * 64]);
    let octs = build_pyramid(&img, 1.6, 0.5, 3, 16);
    assert_eq!(octs.len(), 3); // 64, 32, 16
}

fn unit_desc(vector: Vec<f32>) -> Descriptor {
    Descriptor {
        keypoint: Keypoint {
            x: 0.0,
            y: 0.0,
            scale: 1.0,
            orientation: 0.0,
        },
        vector,
    }
}

fn axis_vec(i: usize) -> Vec<f32> {
    let mut v = vec![0f32; DESCRIPTOR_DIM];
    v[i] = 1.0;
    v
}

#[test]
fn match_exact_hit_and_ambiguity() {
    let targets = vec![unit_desc(axis_vec(0)), unit_desc(axis_vec(1)), unit_desc(axis_vec(2))];
    // identical to target 0, orthogonal to the rest
    let queries = vec![unit_desc(axis_vec(0))];
    let m = match_ratio_test(&queries, &targets, 0.7).unwrap();
    assert_eq!(m.len(), 1);
    assert_eq!((m[0].query, m[0].target), (0, 0));
    assert_eq!(m[0].distance, 0.0);

    // equidistant from two targets: ratio 1 > 0.7, rejected
    let mut mid = vec![0f32; DESCRIPTOR_DIM];
    mid[0] = 0.5;
    mid[1] = 0.5;
    let m = match_ratio_test(&[unit_desc(mid)], &targets, 0.7).unwrap();
    assert!(m.is_empty());
}

#[test]
fn match_requires_two_targets() {
    let t = vec![unit_desc(axis_vec(0))];
    assert!(match_ratio_test(&[], &t, 0.7).is_err());
}

/// Exhaustive double-loop oracle with the same tie and ratio rules.
fn match_oracle(queries: &[Descriptor], targets: &[Descriptor], ratio: f64) -> Vec<MatchPair> {
    let mut out = Vec::new();
    for (qi, q) in queries.iter().enumerate() {
        let mut dists: Vec<(f64, usize)> = targets
            .iter()
            .enumerate()
            .map(|(ti, t)| {
                let mut acc = 0f64;
                for k in 0..DESCRIPTOR_DIM {
                    let d = (q.vector[k] - t.vector[k]) as f64;
                    acc += d * d;
                }
                (acc.sqrt(), ti)
            })
            .collect();
        dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let (d1, t1) = dists[0];
        let (d2, _) = dists[1];
        if d2 > 0.0 && d1 / d2 <= ratio {
            out.push(MatchPair {
                query: qi,
                target: t1,
                distance: d1,
            });
        }
    }
    out
}

fn random_descriptors(n: usize, seed: u64) -> Vec<Descriptor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut v: Vec<f32> = (0..DESCRIPTOR_DIM).map(|_| rng.gen_range(0f32..1.0)).collect();
            let norm: f32 = v.iter().map(|x| x * x).sum::<f32>().sqrt();
            for x in v.iter_mut() {
                *x /= norm;
            }
            unit_desc(v)
        })
        .collect()
}

#[test]
fn match_agrees_with_exhaustive_oracle() {
    let queries = random_descriptors(50, 100);
    let targets = random_descriptors(50, 200);
    for ratio in [0.7, 0.9, 0.99] {
        let got = match_ratio_test(&queries, &targets, ratio).unwrap();
        let want = match_oracle(&queries, &targets, ratio);
        assert_eq!(got, want);
    }
}

#[test]
fn match_invariant_under_target_permutation() {
    let queries = random_descriptors(20, 7);
    let targets = random_descriptors(30, 8);
    let base = match_ratio_test(&queries, &targets, 0.9).unwrap();

    // reverse the target order and map indices back
    let reversed: Vec<Descriptor> = targets.iter().rev().cloned().collect();
    let rev = match_ratio_test(&queries, &reversed, 0.9).unwrap();
    let remapped: Vec<MatchPair> = rev
        .into_iter()
        .map(|m| MatchPair {
            query: m.query,
            target: targets.len() - 1 - m.target,
            distance: m.distance,
        })
        .collect();
    assert_eq!(base, remapped);
}

#[test]
fn descriptor_container_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.desc");
    let ds = random_descriptors(17, 55);
    write_descriptors(&ds, &path).unwrap();
    let back = read_descriptors(&path).unwrap();
    assert_eq!(ds, back);
    // empty container round-trips too
    let empty_path = dir.path().join("e.desc");
    write_descriptors(&[], &empty_path).unwrap();
    assert!(read_descriptors(&empty_path).unwrap().is_empty());
}
