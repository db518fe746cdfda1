//! Gradient features of the bicubic-upscaled LR image.

use crate::image::Image;

/// Number of filter responses concatenated per patch.
pub const FEATURE_MAPS: usize = 4;

const FIRST: [f64; 3] = [-1.0, 0.0, 1.0];
const SECOND: [f64; 5] = [1.0, 0.0, -2.0, 0.0, 1.0];

/// The four response planes: first-order horizontal and vertical, then
/// second-order horizontal and vertical. Borders are clamped.
#[derive(Debug, Clone)]
pub struct FeatureMaps {
    pub width: usize,
    pub height: usize,
    pub maps: [Vec<f64>; FEATURE_MAPS],
}

fn filter(src: &[f64], w: usize, h: usize, taps: &[f64], horizontal: bool) -> Vec<f64> {
    let half = (taps.len() / 2) as isize;
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &t) in taps.iter().enumerate() {
                let off = k as isize - half;
                let (sx, sy) = if horizontal {
                    ((x as isize + off).clamp(0, w as isize - 1) as usize, y)
                } else {
                    (x, (y as isize + off).clamp(0, h as isize - 1) as usize)
                };
                acc += t * src[sy * w + sx];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

impl FeatureMaps {
    pub fn new(upscaled: &Image) -> Self {
        let (w, h) = upscaled.dims();
        let p = upscaled.pixels();
        FeatureMaps {
            width: w,
            height: h,
            maps: [
                filter(p, w, h, &FIRST, true),
                filter(p, w, h, &FIRST, false),
                filter(p, w, h, &SECOND, true),
                filter(p, w, h, &SECOND, false),
            ],
        }
    }

    /// Feature vector of the `p`×`p` patch at (`x`, `y`): each map's patch in
    /// row-major order, maps concatenated.
    pub fn patch(&self, x: usize, y: usize, p: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(FEATURE_MAPS * p * p);
        for map in &self.maps {
            for row in y..y + p {
                out.extend_from_slice(&map[row * self.width + x..row * self.width + x + p]);
            }
        }
        out
    }
}

/// Row-major `p`×`p` crop of a raw plane.
pub(crate) fn plane_patch(plane: &[f64], width: usize, x: usize, y: usize, p: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(p * p);
    for row in y..y + p {
        out.extend_from_slice(&plane[row * width + x..row * width + x + p]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Range;

    #[test]
    fn responses_on_a_ramp() {
        let img = Image::from_fn(12, 10, Range::Byte255, |x, y| 2.0 * x as f64 + 5.0 * y as f64).unwrap();
        let f = FeatureMaps::new(&img);
        let at = |m: usize, x: usize, y: usize| f.maps[m][y * 12 + x];
        assert_eq!(at(0, 5, 5), 4.0);
        assert_eq!(at(1, 5, 5), 10.0);
        assert_eq!(at(2, 5, 5), 0.0);
        assert_eq!(at(3, 5, 5), 0.0);
        // Clamped left border: x-1 maps to x.
        assert_eq!(at(0, 0, 3), 2.0);
    }

    #[test]
    fn constant_image_has_zero_features() {
        let img = Image::filled(9, 9, Range::Byte255, 90.0).unwrap();
        let f = FeatureMaps::new(&img);
        let v = f.patch(2, 3, 5);
        assert_eq!(v.len(), 100);
        assert!(v.iter().all(|&x| x == 0.0));
    }
}
