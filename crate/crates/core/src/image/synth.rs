//! Seeded synthetic test imagery.
//!
//! Textures mix oriented sinusoids over a range of periods with hard-edged
//! shapes, so both smooth gradients and sharp edges appear, loosely
//! mimicking tissue boundaries in MR slices.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Image, Range};

enum Shape {
    Disk { cx: f64, cy: f64, r: f64, level: f64 },
    Rect { x0: f64, y0: f64, x1: f64, y1: f64, level: f64 },
}

/// A `width`x`height` textured image in the `Byte255` range.
pub fn textured(width: usize, height: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_7e27);
    let waves: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            let period = rng.random_range(5.0..24.0);
            let theta = rng.random_range(0.0..PI);
            let phase = rng.random_range(0.0..2.0 * PI);
            let amp = rng.random_range(10.0..28.0);
            (2.0 * PI / period * theta.cos(), 2.0 * PI / period * theta.sin(), phase, amp)
        })
        .collect();
    let (w, h) = (width as f64, height as f64);
    let shapes: Vec<Shape> = (0..rng.random_range(3..7))
        .map(|_| {
            let level = rng.random_range(-45.0..45.0);
            if rng.random_bool(0.5) {
                Shape::Disk {
                    cx: rng.random_range(0.0..w),
                    cy: rng.random_range(0.0..h),
                    r: rng.random_range(0.08..0.35) * w.min(h),
                    level,
                }
            } else {
                let (x0, y0) = (rng.random_range(0.0..w), rng.random_range(0.0..h));
                Shape::Rect { x0, y0, x1: x0 + rng.random_range(0.1..0.5) * w, y1: y0 + rng.random_range(0.1..0.5) * h, level }
            }
        })
        .collect();
    let base = rng.random_range(100.0..150.0);
    let tilt = (rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6));

    Image::from_fn(width, height, Range::Byte255, |x, y| {
        let (fx, fy) = (x as f64, y as f64);
        let mut v = base + tilt.0 * (fx - w / 2.0) + tilt.1 * (fy - h / 2.0);
        for &(kx, ky, phase, amp) in &waves {
            v += amp * (kx * fx + ky * fy + phase).sin();
        }
        for s in &shapes {
            match *s {
                Shape::Disk { cx, cy, r, level } if (fx - cx).powi(2) + (fy - cy).powi(2) <= r * r => v += level,
                Shape::Rect { x0, y0, x1, y1, level } if fx >= x0 && fx < x1 && fy >= y0 && fy < y1 => v += level,
                _ => {}
            }
        }
        v
    })
    .expect("positive dimensions")
}

/// `count` textures with consecutive seeds starting at `seed`.
pub fn corpus(count: usize, width: usize, height: usize, seed: u64) -> Vec<Image> {
    (0..count as u64).map(|i| textured(width, height, seed.wrapping_add(i))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_varied() {
        let a = textured(32, 32, 4);
        assert_eq!(a, textured(32, 32, 4));
        assert_ne!(a, textured(32, 32, 5));
        let (lo, hi) = a.pixels().iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
        assert!(hi - lo > 40.0);
    }
}
