use super::Image;

const KEYS_A: f64 = -0.5;

/// Keys cubic convolution kernel with `a = -0.5`.
pub fn keys_kernel(x: f64) -> f64 {
    let x = x.abs();
    if x < 1.0 {
        ((KEYS_A + 2.0) * x - (KEYS_A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        (((x - 5.0) * x + 8.0) * x - 4.0) * KEYS_A
    } else {
        0.0
    }
}

/// Per-output-sample taps along one axis: first source index plus weights.
struct AxisTaps {
    starts: Vec<isize>,
    weights: Vec<Vec<f64>>,
}

impl AxisTaps {
    fn new(src: usize, dst: usize) -> Self {
        let scale = src as f64 / dst as f64;
        // Downsampling stretches the kernel so it also acts as the prefilter.
        let stretch = scale.max(1.0);
        let radius = 2.0 * stretch;
        let mut starts = Vec::with_capacity(dst);
        let mut weights = Vec::with_capacity(dst);
        for i in 0..dst {
            let center = (i as f64 + 0.5) * scale - 0.5;
            let lo = (center - radius).ceil() as isize;
            let hi = (center + radius).floor() as isize;
            let mut w: Vec<f64> = (lo..=hi).map(|j| keys_kernel((j as f64 - center) / stretch)).collect();
            let sum: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= sum);
            starts.push(lo);
            weights.push(w);
        }
        AxisTaps { starts, weights }
    }

    #[inline]
    fn apply(&self, i: usize, n: usize, sample: impl Fn(usize) -> f64) -> f64 {
        let start = self.starts[i];
        let last = n as isize - 1;
        self.weights[i].iter().enumerate().map(|(k, w)| w * sample((start + k as isize).clamp(0, last) as usize)).sum()
    }
}

/// Separable Keys bicubic resize with clamped edges.
///
/// Output samples are clamped into the input's declared range.
pub fn bicubic_resize(img: &Image, out_w: usize, out_h: usize) -> Image {
    assert!(out_w >= 1 && out_h >= 1, "output dimensions must be positive");
    if img.dims() == (out_w, out_h) {
        return img.clone();
    }
    let out = resize_plane(img.pixels(), img.width(), img.height(), out_w, out_h);
    Image::from_clamped(out_w, out_h, img.range(), out).expect("resize preserves geometry invariants")
}

/// Bicubic resize of a raw row-major plane, without clamping.
pub fn resize_plane(src: &[f64], w: usize, h: usize, out_w: usize, out_h: usize) -> Vec<f64> {
    assert_eq!(src.len(), w * h);
    if (w, h) == (out_w, out_h) {
        return src.to_vec();
    }
    let tx = AxisTaps::new(w, out_w);
    let ty = AxisTaps::new(h, out_h);

    let mut horizontal = vec![0.0; out_w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        let out = &mut horizontal[y * out_w..(y + 1) * out_w];
        for (x, o) in out.iter_mut().enumerate() {
            *o = tx.apply(x, w, |j| row[j]);
        }
    }
    let mut out = vec![0.0; out_w * out_h];
    for y in 0..out_h {
        for x in 0..out_w {
            out[y * out_w + x] = ty.apply(y, h, |j| horizontal[j * out_w + x]);
        }
    }
    out
}
