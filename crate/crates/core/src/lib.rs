//! Grayscale single-image super resolution.
//!
//! The crate is split along the pipeline:
//!
//! * [`image`]: the [`Image`] raster, PNG/PGM I/O, range handling, cropping and
//!   Keys bicubic resampling (both the degradation operator and the baseline
//!   upscaler).
//! * [`metrics`]: MSE, PSNR, SSIM and mean opinion scores.
//! * [`sparse`]: coupled-dictionary sparse coding SR with backprojection.
//! * [`nn`]: a small dense tensor engine with reverse-mode gradients and Adam.
//! * [`models`]: SRCNN, the residual generator, the discriminator, the loss
//!   stack and the training schedules.

pub mod image;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod sparse;

pub use image::{Image, ImageError, Range, ScaleFactor};
