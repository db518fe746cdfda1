//! Single-channel raster images and the geometric operations on them.

mod io;
mod resample;
pub mod synth;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{decode, decode_png, encode_png, load, save};
pub use resample::{bicubic_resize, keys_kernel, resize_plane};

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("image dimensions must be at least 1x1, got {width}x{height}")]
    EmptyImage { width: usize, height: usize },
    #[error("pixel buffer holds {got} samples, expected {expected}")]
    BufferLength { expected: usize, got: usize },
    #[error("sample {value} at index {index} lies outside the {range:?} range")]
    OutOfRange { index: usize, value: f64, range: Range },
    #[error("unsupported color type {0}: only grayscale images are accepted")]
    UnsupportedColor(String),
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("malformed image data: {0}")]
    Malformed(String),
    #[error("crop size must be positive")]
    ZeroCropSize,
    #[error("crop {size}x{size} does not fit in a {width}x{height} image")]
    CropTooLarge { size: usize, width: usize, height: usize },
    #[error("invalid scale factor {0}: expected 2, 4 or 8")]
    InvalidScale(u32),
    #[error("image {width}x{height} is too small to downsample by {scale}")]
    TooSmallForScale { width: usize, height: usize, scale: u32 },
    #[error("png decoding failed: {0}")]
    PngDecode(#[from] png::DecodingError),
    #[error("png encoding failed: {0}")]
    PngEncode(#[from] png::EncodingError),
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Value range a raster's samples are declared to live in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Range {
    /// `[0, 1]`
    Unit01,
    /// `[-1, 1]`, the network input range.
    Signed11,
    /// `[0, 255]`, the range all metrics are computed in.
    Byte255,
}

impl Range {
    pub fn bounds(self) -> (f64, f64) {
        match self {
            Range::Unit01 => (0.0, 1.0),
            Range::Signed11 => (-1.0, 1.0),
            Range::Byte255 => (0.0, 255.0),
        }
    }

    fn to_unit(self, v: f64) -> f64 {
        match self {
            Range::Unit01 => v,
            Range::Signed11 => (v + 1.0) / 2.0,
            Range::Byte255 => v / 255.0,
        }
    }

    fn unit_to_range(self, u: f64) -> f64 {
        match self {
            Range::Unit01 => u,
            Range::Signed11 => u * 2.0 - 1.0,
            Range::Byte255 => u * 255.0,
        }
    }

    pub fn clamp(self, v: f64) -> f64 {
        let (lo, hi) = self.bounds();
        v.clamp(lo, hi)
    }
}

/// Integer upscaling factor, restricted to 2, 4 and 8.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct ScaleFactor(u32);

impl ScaleFactor {
    pub const X2: ScaleFactor = ScaleFactor(2);
    pub const X4: ScaleFactor = ScaleFactor(4);
    pub const X8: ScaleFactor = ScaleFactor(8);

    pub fn new(r: u32) -> Result<Self, ImageError> {
        match r {
            2 | 4 | 8 => Ok(ScaleFactor(r)),
            other => Err(ImageError::InvalidScale(other)),
        }
    }

    pub fn get(self) -> u32 {
        self.0
    }

    pub fn as_usize(self) -> usize {
        self.0 as usize
    }

    /// Number of 2x stages composing this factor.
    pub fn doublings(self) -> u32 {
        self.0.trailing_zeros()
    }
}

impl TryFrom<u32> for ScaleFactor {
    type Error = ImageError;
    fn try_from(r: u32) -> Result<Self, Self::Error> {
        ScaleFactor::new(r)
    }
}

impl From<ScaleFactor> for u32 {
    fn from(s: ScaleFactor) -> u32 {
        s.0
    }
}

impl std::fmt::Display for ScaleFactor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Row-major grayscale raster with an explicit value range.
///
/// Construction validates dimensions, buffer length and that every sample
/// lies inside the declared range, so any `Image` in hand is well formed.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    range: Range,
    pixels: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, range: Range, pixels: Vec<f64>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyImage { width, height });
        }
        if pixels.len() != width * height {
            return Err(ImageError::BufferLength { expected: width * height, got: pixels.len() });
        }
        let (lo, hi) = range.bounds();
        if let Some((index, &value)) = pixels.iter().enumerate().find(|(_, v)| !(**v >= lo && **v <= hi)) {
            return Err(ImageError::OutOfRange { index, value, range });
        }
        Ok(Image { width, height, range, pixels })
    }

    /// Builds an image, clamping every sample into `range` first.
    pub fn from_clamped(width: usize, height: usize, range: Range, mut pixels: Vec<f64>) -> Result<Self, ImageError> {
        for p in &mut pixels {
            *p = if p.is_nan() { range.bounds().0 } else { range.clamp(*p) };
        }
        Image::new(width, height, range, pixels)
    }

    pub fn filled(width: usize, height: usize, range: Range, value: f64) -> Result<Self, ImageError> {
        Image::new(width, height, range, vec![value; width * height])
    }

    /// Samples `f(x, y)` over the grid and clamps into `range`.
    pub fn from_fn(width: usize, height: usize, range: Range, f: impl Fn(usize, usize) -> f64) -> Result<Self, ImageError> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Image::from_clamped(width, height, range, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        1
    }

    pub fn range(&self) -> Range {
        self.range
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Affine map of every sample into `target`.
    pub fn rescale_range(&self, target: Range) -> Image {
        if target == self.range {
            return self.clone();
        }
        let pixels = self.pixels.iter().map(|&v| target.clamp(target.unit_to_range(self.range.to_unit(v)))).collect();
        Image { width: self.width, height: self.height, range: target, pixels }
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Image, ImageError> {
        if w == 0 || h == 0 {
            return Err(ImageError::ZeroCropSize);
        }
        if x0 + w > self.width || y0 + h > self.height {
            return Err(ImageError::CropTooLarge { size: w.max(h), width: self.width, height: self.height });
        }
        let mut pixels = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            pixels.extend_from_slice(&self.pixels[y * self.width + x0..y * self.width + x0 + w]);
        }
        Ok(Image { width: w, height: h, range: self.range, pixels })
    }

    /// Centered crop to the largest dimensions divisible by `multiple`.
    pub fn center_crop_to_multiple(&self, multiple: usize) -> Result<Image, ImageError> {
        let w = self.width / multiple * multiple;
        let h = self.height / multiple * multiple;
        if w == 0 || h == 0 {
            return Err(ImageError::TooSmallForScale { width: self.width, height: self.height, scale: multiple as u32 });
        }
        self.crop((self.width - w) / 2, (self.height - h) / 2, w, h)
    }

    /// Seeded uniform `size`x`size` crop. Offsets are drawn from
    /// `[0, W-size] x [0, H-size]`.
    pub fn random_crop(&self, size: usize, seed: u64) -> Result<Image, ImageError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.random_crop_with(size, &mut rng)
    }

    pub fn random_crop_with<R: Rng>(&self, size: usize, rng: &mut R) -> Result<Image, ImageError> {
        if size == 0 {
            return Err(ImageError::ZeroCropSize);
        }
        if size > self.width || size > self.height {
            return Err(ImageError::CropTooLarge { size, width: self.width, height: self.height });
        }
        let x0 = rng.random_range(0..=self.width - size);
        let y0 = rng.random_range(0..=self.height - size);
        self.crop(x0, y0, size, size)
    }

    /// Upscales with bicubic so the shorter side is at least `size`,
    /// preserving aspect ratio. Images already large enough are returned as is.
    pub fn fit_for_crop(&self, size: usize) -> Image {
        let short = self.width.min(self.height);
        if short >= size {
            return self.clone();
        }
        let factor = size as f64 / short as f64;
        let w = ((self.width as f64 * factor).round() as usize).max(size);
        let h = ((self.height as f64 * factor).round() as usize).max(size);
        bicubic_resize(self, w, h)
    }

    /// Bicubic downsample by `scale` after center-cropping to a multiple of it,
    /// returning the cropped HR image alongside the LR rendition.
    pub fn degrade(&self, scale: ScaleFactor) -> Result<(Image, Image), ImageError> {
        let r = scale.as_usize();
        let hr = self.center_crop_to_multiple(r)?;
        let lr = bicubic_resize(&hr, hr.width / r, hr.height / r);
        Ok((hr, lr))
    }

    pub fn upscale(&self, scale: ScaleFactor) -> Image {
        let r = scale.as_usize();
        bicubic_resize(self, self.width * r, self.height * r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, Range::Byte255, |x, y| ((x * 7 + y * 13) % 256) as f64).unwrap()
    }

    #[test]
    fn rejects_bad_buffers() {
        assert!(matches!(Image::new(0, 3, Range::Unit01, vec![]), Err(ImageError::EmptyImage { .. })));
        assert!(matches!(Image::new(2, 2, Range::Unit01, vec![0.0; 3]), Err(ImageError::BufferLength { .. })));
        assert!(matches!(Image::new(1, 1, Range::Signed11, vec![1.5]), Err(ImageError::OutOfRange { index: 0, .. })));
        assert!(Image::new(1, 1, Range::Byte255, vec![f64::NAN]).is_err());
    }

    #[test]
    fn rescale_endpoints_and_midpoint() {
        let img = Image::new(3, 1, Range::Byte255, vec![255.0, 127.5, 0.0]).unwrap();
        let s = img.rescale_range(Range::Signed11);
        assert_eq!(s.pixels(), &[1.0, 0.0, -1.0]);
        let back = Image::new(1, 1, Range::Signed11, vec![-0.5]).unwrap().rescale_range(Range::Byte255);
        assert!((back.pixels()[0] - 63.75).abs() < 1e-12);
    }

    #[test]
    fn rescale_round_trip_is_identity() {
        let img = ramp(17, 9);
        for mid in [Range::Signed11, Range::Unit01] {
            let back = img.rescale_range(mid).rescale_range(Range::Byte255);
            for (a, b) in img.pixels().iter().zip(back.pixels()) {
                assert!((a - b).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn crop_of_exact_size_is_identity() {
        let img = ramp(224, 224);
        for seed in [0, 1, 99] {
            assert_eq!(img.random_crop(224, seed).unwrap(), img);
        }
    }

    #[test]
    fn crop_offsets_stay_in_bounds_and_are_deterministic() {
        let img = Image::from_fn(256, 256, Range::Byte255, |x, y| ((x + 256 * y) % 255) as f64).unwrap();
        for seed in 0..50 {
            let c = img.random_crop(224, seed).unwrap();
            assert_eq!(c.dims(), (224, 224));
            // The top-left sample encodes its own offset.
            let v = c.get(0, 0) as usize;
            let found = (0..=32).flat_map(|y| (0..=32).map(move |x| (x, y))).any(|(x, y)| (x + 256 * y) % 255 == v);
            assert!(found);
            assert_eq!(c, img.random_crop(224, seed).unwrap());
        }
    }

    #[test]
    fn crop_errors() {
        let img = ramp(10, 10);
        assert!(matches!(img.random_crop(0, 1), Err(ImageError::ZeroCropSize)));
        assert!(matches!(img.random_crop(11, 1), Err(ImageError::CropTooLarge { .. })));
    }

    #[test]
    fn fit_for_crop_grows_short_side() {
        let img = ramp(100, 50);
        let fitted = img.fit_for_crop(224);
        assert_eq!(fitted.height(), 224);
        assert_eq!(fitted.width(), 448);
        assert!(fitted.random_crop(224, 3).is_ok());
        assert_eq!(ramp(300, 300).fit_for_crop(224).dims(), (300, 300));
    }

    #[test]
    fn degrade_crops_to_multiple() {
        let img = ramp(230, 227);
        let (hr, lr) = img.degrade(ScaleFactor::X4).unwrap();
        assert_eq!(hr.dims(), (228, 224));
        assert_eq!(lr.dims(), (57, 56));
        let (hr8, lr8) = ramp(224, 224).degrade(ScaleFactor::X8).unwrap();
        assert_eq!(hr8.dims(), (224, 224));
        assert_eq!(lr8.dims(), (28, 28));
    }

    #[test]
    fn scale_factor_validation() {
        assert!(ScaleFactor::new(3).is_err());
        assert_eq!(ScaleFactor::X8.doublings(), 3);
        assert_eq!(ScaleFactor::X4.doublings(), 2);
    }
}
