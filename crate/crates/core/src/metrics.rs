//! Reference-based quality metrics and mean opinion scores.
//!
//! All reference metrics operate on the 0..255 scale; inputs in another
//! declared range are rejected rather than silently converted.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{Image, Range};

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("image dimensions differ: {a:?} vs {b:?}")]
    DimensionMismatch { a: (usize, usize), b: (usize, usize) },
    #[error("metrics are computed on the 0..255 scale, got {0:?}")]
    WrongRange(Range),
    #[error("image {w}x{h} is smaller than the {window}x{window} SSIM window")]
    TooSmall { w: usize, h: usize, window: usize },
    #[error("rating set is empty")]
    EmptyRatings,
    #[error("rating {0} outside 1..=5")]
    InvalidScore(u8),
}

const PEAK: f64 = 255.0;
pub const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = (0.01 * PEAK) * (0.01 * PEAK);
const SSIM_C2: f64 = (0.03 * PEAK) * (0.03 * PEAK);

/// Peak signal-to-noise ratio; identical images have no finite value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Psnr {
    Db(f64),
    #[serde(with = "infinite_marker")]
    Infinite,
}

mod infinite_marker {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("inf")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let s = String::deserialize(d)?;
        if s == "inf" {
            Ok(())
        } else {
            Err(serde::de::Error::custom(format!("expected \"inf\", got {s:?}")))
        }
    }
}

impl Psnr {
    pub fn from_mse(mse: f64) -> Psnr {
        if mse == 0.0 {
            Psnr::Infinite
        } else {
            Psnr::Db(10.0 * (PEAK * PEAK / mse).log10())
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Psnr::Db(v) => Some(v),
            Psnr::Infinite => None,
        }
    }

    /// Arithmetic mean in dB; any infinite member makes the mean infinite.
    pub fn mean(values: &[Psnr]) -> Option<Psnr> {
        if values.is_empty() {
            return None;
        }
        let mut sum = 0.0;
        for v in values {
            match v {
                Psnr::Db(d) => sum += d,
                Psnr::Infinite => return Some(Psnr::Infinite),
            }
        }
        Some(Psnr::Db(sum / values.len() as f64))
    }
}

impl std::fmt::Display for Psnr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Psnr::Db(v) => write!(f, "{v:.2}"),
            Psnr::Infinite => write!(f, "inf"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub psnr_db: Psnr,
    pub ssim: f64,
    pub mse: f64,
}

fn check_pair(a: &Image, b: &Image) -> Result<(), MetricError> {
    if a.dims() != b.dims() {
        return Err(MetricError::DimensionMismatch { a: a.dims(), b: b.dims() });
    }
    for img in [a, b] {
        if img.range() != Range::Byte255 {
            return Err(MetricError::WrongRange(img.range()));
        }
    }
    Ok(())
}

/// Mean of squared per-pixel differences.
pub fn mse(a: &Image, b: &Image) -> Result<f64, MetricError> {
    check_pair(a, b)?;
    let sum: f64 = a.pixels().iter().zip(b.pixels()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / a.pixels().len() as f64)
}

pub fn psnr(a: &Image, b: &Image) -> Result<Psnr, MetricError> {
    mse(a, b).map(Psnr::from_mse)
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Separable valid-mode Gaussian filtering.
fn filter_valid(src: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            tmp[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * src[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * tmp[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Per-window SSIM values over every position where the 11x11 window fits.
pub fn ssim_map(a: &Image, b: &Image) -> Result<Vec<f64>, MetricError> {
    check_pair(a, b)?;
    let (w, h) = a.dims();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(MetricError::TooSmall { w, h, window: SSIM_WINDOW });
    }
    let k = gaussian_window();
    let (x, y) = (a.pixels(), b.pixels());
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(p, q)| p * q).collect();
    let mu_x = filter_valid(x, w, h, &k);
    let mu_y = filter_valid(y, w, h, &k);
    let e_xx = filter_valid(&xx, w, h, &k);
    let e_yy = filter_valid(&yy, w, h, &k);
    let e_xy = filter_valid(&xy, w, h, &k);
    Ok((0..mu_x.len())
        .map(|i| {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let vx = e_xx[i] - mx * mx;
            let vy = e_yy[i] - my * my;
            let cxy = e_xy[i] - mx * my;
            // l * c * s with C3 = C2 / 2 collapses to the two-factor form.
            let v = ((2.0 * mx * my + SSIM_C1) * (2.0 * cxy + SSIM_C2)) / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2));
            v.clamp(-1.0, 1.0)
        })
        .collect())
}

/// Mean structural similarity (11x11 Gaussian window, sigma 1.5).
pub fn ssim(a: &Image, b: &Image) -> Result<f64, MetricError> {
    let map = ssim_map(a, b)?;
    Ok(map.iter().sum::<f64>() / map.len() as f64)
}

pub fn report(sr: &Image, hr: &Image) -> Result<MetricReport, MetricError> {
    let m = mse(sr, hr)?;
    Ok(MetricReport { psnr_db: Psnr::from_mse(m), ssim: ssim(sr, hr)?, mse: m })
}

/// A validated list of 1..=5 opinion scores.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingSet {
    scores: Vec<u8>,
}

impl RatingSet {
    pub fn new(scores: Vec<u8>) -> Result<Self, MetricError> {
        if scores.is_empty() {
            return Err(MetricError::EmptyRatings);
        }
        if let Some(&bad) = scores.iter().find(|s| !(1..=5).contains(*s)) {
            return Err(MetricError::InvalidScore(bad));
        }
        Ok(RatingSet { scores })
    }

    pub fn scores(&self) -> &[u8] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Mean opinion score: the arithmetic mean of the ratings.
pub fn mos(ratings: &RatingSet) -> f64 {
    ratings.scores.iter().map(|&s| s as f64).sum::<f64>() / ratings.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn constant(v: f64, n: usize) -> Image {
        Image::filled(n, n, Range::Byte255, v).unwrap()
    }

    fn noise(n: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pixels = (0..n * n).map(|_| rng.random_range(0.0..=255.0)).collect();
        Image::new(n, n, Range::Byte255, pixels).unwrap()
    }

    #[test]
    fn mse_examples() {
        let x = noise(12, 1);
        assert_eq!(mse(&x, &x).unwrap(), 0.0);
        assert_eq!(mse(&constant(10.0, 4), &constant(12.0, 4)).unwrap(), 4.0);
        let a = Image::new(2, 1, Range::Byte255, vec![0.0, 255.0]).unwrap();
        let b = Image::new(2, 1, Range::Byte255, vec![255.0, 0.0]).unwrap();
        assert_eq!(mse(&a, &b).unwrap(), 65025.0);
    }

    #[test]
    fn mse_rejects_mismatch_and_range() {
        let a = constant(1.0, 4);
        let b = constant(1.0, 5);
        assert!(matches!(mse(&a, &b), Err(MetricError::DimensionMismatch { .. })));
        let s = Image::filled(4, 4, Range::Signed11, 0.0).unwrap();
        assert_eq!(mse(&a, &s), Err(MetricError::WrongRange(Range::Signed11)));
    }

    #[test]
    fn psnr_examples() {
        let a = Image::new(2, 1, Range::Byte255, vec![0.0, 255.0]).unwrap();
        let b = Image::new(2, 1, Range::Byte255, vec![255.0, 0.0]).unwrap();
        assert_eq!(psnr(&a, &b).unwrap(), Psnr::Db(0.0));
        let p = psnr(&constant(100.0, 8), &constant(101.0, 8)).unwrap().finite().unwrap();
        assert!((p - 10.0 * 65025f64.log10()).abs() < 1e-12);
        assert!((p - 48.1308).abs() < 1e-3);
        assert_eq!(psnr(&a, &a).unwrap(), Psnr::Infinite);
    }

    #[test]
    fn psnr_serializes_sentinel() {
        assert_eq!(serde_json::to_string(&Psnr::Infinite).unwrap(), "\"inf\"");
    }

    #[test]
    fn psnr_decreases_with_noise() {
        let base = noise(16, 2);
        let base = Image::new(16, 16, Range::Byte255, base.pixels().iter().map(|v| v * 0.5 + 60.0).collect()).unwrap();
        let mut last = f64::INFINITY;
        for amp in [1.0, 2.0, 4.0, 8.0, 16.0] {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let noisy: Vec<f64> = base.pixels().iter().map(|v| v + amp * rng.random_range(-1.0..1.0)).collect();
            let noisy = Image::new(16, 16, Range::Byte255, noisy).unwrap();
            let p = psnr(&base, &noisy).unwrap().finite().unwrap();
            assert!(p < last);
            last = p;
        }
    }

    #[test]
    fn ssim_identity_and_constant() {
        let x = noise(20, 3);
        assert!((ssim(&x, &x).unwrap() - 1.0).abs() < 1e-9);
        let c = constant(42.0, 11);
        assert!((ssim(&c, &c).unwrap() - 1.0).abs() < 1e-9);
        assert!(ssim(&constant(0.0, 16), &constant(255.0, 16)).unwrap() < 0.01);
    }

    #[test]
    fn ssim_rejects_small_images() {
        let c = constant(1.0, 10);
        assert!(matches!(ssim(&c, &c), Err(MetricError::TooSmall { .. })));
    }

    #[test]
    fn ssim_matches_direct_window_sum() {
        // Brute-force one window directly from the 2-D Gaussian weights.
        let a = noise(11, 4);
        let b = noise(11, 5);
        let k = gaussian_window();
        let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for y in 0..11 {
            for x in 0..11 {
                let w = k[x] * k[y];
                mx += w * a.get(x, y);
                my += w * b.get(x, y);
            }
        }
        for y in 0..11 {
            for x in 0..11 {
                let w = k[x] * k[y];
                sxx += w * (a.get(x, y) - mx).powi(2);
                syy += w * (b.get(x, y) - my).powi(2);
                sxy += w * (a.get(x, y) - mx) * (b.get(x, y) - my);
            }
        }
        let l = (2.0 * mx * my + SSIM_C1) / (mx * mx + my * my + SSIM_C1);
        let c = (2.0 * sxx.sqrt() * syy.sqrt() + SSIM_C2) / (sxx + syy + SSIM_C2);
        let s = (sxy + SSIM_C2 / 2.0) / (sxx.sqrt() * syy.sqrt() + SSIM_C2 / 2.0);
        assert!((ssim(&a, &b).unwrap() - l * c * s).abs() < 1e-9);
    }

    #[test]
    fn mos_examples() {
        assert_eq!(mos(&RatingSet::new(vec![2, 3, 4]).unwrap()), 3.0);
        assert_eq!(mos(&RatingSet::new(vec![5; 5]).unwrap()), 5.0);
        assert_eq!(mos(&RatingSet::new(vec![1]).unwrap()), 1.0);
        assert_eq!(RatingSet::new(vec![]), Err(MetricError::EmptyRatings));
        assert_eq!(RatingSet::new(vec![3, 6]), Err(MetricError::InvalidScore(6)));
    }

    proptest! {
        #[test]
        fn offset_law_is_exact(c in -60i32..60, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a: Vec<f64> = (0..64).map(|_| rng.random_range(60..190) as f64).collect();
            let b: Vec<f64> = a.iter().map(|v| v + c as f64).collect();
            let a = Image::new(8, 8, Range::Byte255, a).unwrap();
            let b = Image::new(8, 8, Range::Byte255, b).unwrap();
            prop_assert_eq!(mse(&a, &b).unwrap(), (c * c) as f64);
        }

        #[test]
        fn ssim_symmetric_and_bounded(s1 in 0u64..500, s2 in 0u64..500) {
            let a = noise(13, s1);
            let b = noise(13, s2 + 1000);
            let ab = ssim(&a, &b).unwrap();
            let ba = ssim(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&ab));
        }

        #[test]
        fn mos_within_bounds(scores in proptest::collection::vec(1u8..=5, 1..40)) {
            let m = mos(&RatingSet::new(scores).unwrap());
            prop_assert!((1.0..=5.0).contains(&m));
        }
    }
}
