//! Gaussian scale-space pyramid and difference-of-Gaussian stack.

/// Dense f32 image used internally by the detector. Unlike
/// `raster::GrayImage` values are unconstrained (DoG layers go negative).
#[derive(Debug, Clone)]
pub(crate) struct FloatImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl FloatImage {
    pub fn new(width: usize, height: usize) -> Self {
        FloatImage {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        FloatImage {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }
}

/// One octave of the pyramid: `intervals + 3` blurred images and the
/// `intervals + 2` DoG layers between them.
pub(crate) struct Octave {
    pub gaussians: Vec<FloatImage>,
    pub dogs: Vec<FloatImage>,
}

/// Separable Gaussian blur with clamped borders. `sigma <= 0` copies.
pub(crate) fn gaussian_blur(src: &FloatImage, sigma: f32) -> FloatImage {
    if sigma <= 0.0 {
        return src.clone();
    }
    let radius = (4.0 * sigma).ceil() as isize;
    let mut kernel = Vec::with_capacity(2 * radius as usize + 1);
    let inv = -0.5 / (sigma * sigma);
    let mut sum = 0f32;
    for i in -radius..=radius {
        let v = ((i * i) as f32 * inv).exp();
        kernel.push(v);
        sum += v;
    }
    for k in kernel.iter_mut() {
        *k /= sum;
    }

    let (w, h) = (src.width, src.height);
    // horizontal pass
    let mut tmp = FloatImage::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0f32;
            for (ki, &kv) in kernel.iter().enumerate() {
                let sx = (x as isize + ki as isize - radius).clamp(0, w as isize - 1) as usize;
                acc += kv * src.get(sx, y);
            }
            tmp.set(x, y, acc);
        }
    }
    // vertical pass
    let mut out = FloatImage::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0f32;
            for (ki, &kv) in kernel.iter().enumerate() {
                let sy = (y as isize + ki as isize - radius).clamp(0, h as isize - 1) as usize;
                acc += kv * tmp.get(x, sy);
            }
            out.set(x, y, acc);
        }
    }
    out
}

/// Decimate by 2 (every other pixel).
fn downsample(src: &FloatImage) -> FloatImage {
    let w = (src.width / 2).max(1);
    let h = (src.height / 2).max(1);
    let mut out = FloatImage::new(w, h);
    for y in 0..h {
        for x in 0..w {
            out.set(x, y, src.get(x * 2, y * 2));
        }
    }
    out
}

/// Build the full pyramid. The input is assumed to carry `assumed_blur`
/// already; the seed image is brought up to `base_sigma` without any
/// initial upsampling. Octaves continue while min(width, height) stays at
/// or above `min_dim`.
pub(crate) fn build_pyramid(
    input: &FloatImage,
    base_sigma: f32,
    assumed_blur: f32,
    intervals: usize,
    min_dim: usize,
) -> Vec<Octave> {
    let seed_sigma = (base_sigma * base_sigma - assumed_blur * assumed_blur)
        .max(0.0)
        .sqrt();
    let mut current = gaussian_blur(input, seed_sigma);

    let k = 2f32.powf(1.0 / intervals as f32);
    // incremental blurs between consecutive gaussian layers
    let mut increments = Vec::with_capacity(intervals + 2);
    for i in 1..intervals + 3 {
        let prev = base_sigma * k.powi(i as i32 - 1);
        increments.push(prev * (k * k - 1.0).sqrt());
    }

    let mut octaves = Vec::new();
    while current.width.min(current.height) >= min_dim {
        let mut gaussians = Vec::with_capacity(intervals + 3);
        gaussians.push(current);
        for inc in &increments {
            let next = gaussian_blur(gaussians.last().unwrap(), *inc);
            gaussians.push(next);
        }
        let mut dogs = Vec::with_capacity(intervals + 2);
        for i in 0..intervals + 2 {
            let a = &gaussians[i];
            let b = &gaussians[i + 1];
            let data: Vec<f32> = b.data.iter().zip(&a.data).map(|(x, y)| x - y).collect();
            dogs.push(FloatImage::from_data(a.width, a.height, data));
        }
        // base of the next octave: the gaussian with twice the base sigma
        current = downsample(&gaussians[intervals]);
        octaves.push(Octave { gaussians, dogs });
    }
    octaves
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blur_preserves_constant() {
        let img = FloatImage::from_data(8, 8, vec![0.25; 64]);
        let out = gaussian_blur(&img, 2.0);
        for &v in &out.data {
            assert!((v - 0.25).abs() < 1e-6);
        }
    }

    #[test]
    fn pyramid_octave_count_stops_below_min_dim() {
        let img = FloatImage::new(64, 48);
        let octs = build_pyramid(&img, 1.6, 0.5, 3, 16);
        // 48 -> 24 -> 12(stop): octaves at 48 and 24
        assert_eq!(octs.len(), 2);
        assert_eq!(octs[0].gaussians.len(), 6);
        assert_eq!(octs[0].dogs.len(), 5);
        assert_eq!(octs[1].gaussians[0].width, 32);
    }
}
