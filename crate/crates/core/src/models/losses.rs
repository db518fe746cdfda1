//! Pixel, feature, content, adversarial, perceptual, and discriminator losses.
//! Each `*_grad` variant also returns the gradient with respect to its
//! first argument.

use super::feature::FeatureExtractor;
use super::ModelError;
use crate::nn::Tensor;

/// Floor applied inside every logarithm.
pub const LOG_FLOOR: f64 = 1e-12;

/// Weight of the adversarial term in the perceptual loss.
pub const ADV_WEIGHT: f64 = 1e-3;

fn same_shape(a: &Tensor, b: &Tensor) -> Result<(), ModelError> {
    if a.shape() != b.shape() {
        return Err(ModelError::Shape(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// Mean squared difference over every HR sample (batch included).
pub fn mse_loss(sr: &Tensor, hr: &Tensor) -> Result<f64, ModelError> {
    mse_loss_grad(sr, hr).map(|(l, _)| l)
}

pub fn mse_loss_grad(sr: &Tensor, hr: &Tensor) -> Result<(f64, Tensor), ModelError> {
    same_shape(sr, hr)?;
    let n = sr.len() as f64;
    let mut grad = Tensor::zeros_like(sr);
    let mut sum = 0.0;
    for ((g, a), b) in grad.data_mut().iter_mut().zip(sr.data()).zip(hr.data()) {
        let d = a - b;
        sum += d * d;
        *g = 2.0 * d / n;
    }
    Ok((sum / n, grad))
}

/// Mean squared difference of the extractor's features on the 3-channel
/// replications of `sr` and `hr`, averaged over every feature sample.
pub fn feature_loss(sr: &Tensor, hr: &Tensor, phi: &FeatureExtractor) -> Result<f64, ModelError> {
    same_shape(sr, hr)?;
    let fs = phi.features(sr)?;
    let fh = phi.features(hr)?;
    let n = fs.len() as f64;
    Ok(fs.data().iter().zip(fh.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n)
}

pub fn feature_loss_grad(sr: &Tensor, hr: &Tensor, phi: &FeatureExtractor) -> Result<(f64, Tensor), ModelError> {
    same_shape(sr, hr)?;
    let fh = phi.features(hr)?;
    let tape = phi.tape(sr)?;
    let fs = tape.output();
    let n = fs.len() as f64;
    let mut g = Tensor::zeros_like(fs);
    let mut sum = 0.0;
    for ((gi, a), b) in g.data_mut().iter_mut().zip(fs.data()).zip(fh.data()) {
        let d = a - b;
        sum += d * d;
        *gi = 2.0 * d / n;
    }
    let grad = phi.backward(&tape, &g)?;
    Ok((sum / n, grad))
}

pub fn content_loss(mse: f64, feat: f64, mse_weight: f64, vgg_weight: f64) -> Result<f64, ModelError> {
    if mse_weight < 0.0 || vgg_weight < 0.0 {
        return Err(ModelError::InvalidPlan(format!("negative loss weights ({mse_weight}, {vgg_weight})")));
    }
    Ok(mse_weight * mse + vgg_weight * feat)
}

fn check_probability(d: f64) -> Result<(), ModelError> {
    // Sigmoid outputs can round to exactly 0 or 1; the log floor covers both.
    if !(0.0..=1.0).contains(&d) {
        return Err(ModelError::OutOfRange(d));
    }
    Ok(())
}

fn neg_log(x: f64) -> f64 {
    -x.max(LOG_FLOOR).ln()
}

fn neg_log_slope(x: f64) -> f64 {
    if x > LOG_FLOOR {
        -1.0 / x
    } else {
        0.0
    }
}

/// `Σ −ln D(G(lr))` over the batch.
pub fn adversarial_gen_loss(d_out: &[f64]) -> Result<f64, ModelError> {
    adversarial_gen_loss_grad(d_out).map(|(l, _)| l)
}

pub fn adversarial_gen_loss_grad(d_out: &[f64]) -> Result<(f64, Vec<f64>), ModelError> {
    d_out.iter().try_for_each(|&d| check_probability(d))?;
    Ok((d_out.iter().map(|&d| neg_log(d)).sum(), d_out.iter().map(|&d| neg_log_slope(d)).collect()))
}

pub fn perceptual_loss(content: f64, gen: f64) -> f64 {
    perceptual_loss_weighted(content, gen, ADV_WEIGHT)
}

pub fn perceptual_loss_weighted(content: f64, gen: f64, adv_weight: f64) -> f64 {
    content + adv_weight * gen
}

/// `−Σ ln D(hr) − Σ ln(1 − D(G(lr)))`.
pub fn discriminator_loss(d_real: &[f64], d_fake: &[f64]) -> Result<f64, ModelError> {
    discriminator_loss_grad(d_real, d_fake).map(|(l, _, _)| l)
}

/// Loss plus gradients with respect to `d_real` and `d_fake`.
pub fn discriminator_loss_grad(d_real: &[f64], d_fake: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>), ModelError> {
    d_real.iter().chain(d_fake).try_for_each(|&d| check_probability(d))?;
    let loss = d_real.iter().map(|&d| neg_log(d)).sum::<f64>() + d_fake.iter().map(|&d| neg_log(1.0 - d)).sum::<f64>();
    let g_real = d_real.iter().map(|&d| neg_log_slope(d)).collect();
    let g_fake = d_fake.iter().map(|&d| -neg_log_slope(1.0 - d)).collect();
    Ok((loss, g_real, g_fake))
}
