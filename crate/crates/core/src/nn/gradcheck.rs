//! Central finite-difference gradient checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::network::{Mode, Network};
use super::tensor::Tensor;
use super::NnError;

/// Relative error with a small absolute floor so exact zeros compare cleanly.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-7);
    (analytic - numeric).abs() / denom
}

pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic.iter().zip(numeric).map(|(&a, &n)| relative_error(a, n)).fold(0.0, f64::max)
}

/// Central differences of `f` with respect to every entry of `x`.
pub fn numeric_gradient(x: &mut [f64], eps: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + eps;
            let plus = f(x);
            x[i] = orig - eps;
            let minus = f(x);
            x[i] = orig;
            (plus - minus) / (2.0 * eps)
        })
        .collect()
}

/// Central differences of `loss` with respect to every network parameter,
/// in [`Network::params`] order.
pub fn numeric_param_gradient(net: &mut Network, eps: f64, mut loss: impl FnMut(&Network) -> f64) -> Vec<f64> {
    let mut out = Vec::new();
    for li in 0..net.layers.len() {
        for pi in 0..net.layers[li].params.len() {
            for k in 0..net.layers[li].params[pi].len() {
                let orig = net.layers[li].params[pi].data()[k];
                net.layers[li].params[pi].data_mut()[k] = orig + eps;
                let plus = loss(net);
                net.layers[li].params[pi].data_mut()[k] = orig - eps;
                let minus = loss(net);
                net.layers[li].params[pi].data_mut()[k] = orig;
                out.push((plus - minus) / (2.0 * eps));
            }
        }
    }
    out
}

/// Checks backward against finite differences of the scalar loss
/// `sum(c * output)` with fixed pseudo-random coefficients `c`. Covers every
/// parameter and every input element; returns the maximum relative error.
pub fn grad_check(net: &Network, input: &Tensor, eps: f64) -> Result<f64, NnError> {
    let out_shape = net.output_shape(input.shape())?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x6c0e);
    let coeffs: Vec<f64> = (0..out_shape.iter().product()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let coeff = Tensor::new(out_shape, coeffs.clone())?;
    let loss = |n: &Network, x: &Tensor| -> f64 {
        let out = n.forward(x, Mode::Train).expect("shape already validated").into_output();
        out.data().iter().zip(&coeffs).map(|(a, b)| a * b).sum()
    };

    let tape = net.forward(input, Mode::Train)?;
    let (grads, input_grad) = net.backward(&tape, &coeff)?;

    let mut probe = net.clone();
    let numeric_params = numeric_param_gradient(&mut probe, eps, |n| loss(n, input));
    let mut x = input.data().to_vec();
    let shape = input.shape().to_vec();
    let numeric_input = numeric_gradient(&mut x, eps, |xs| loss(net, &Tensor::new(shape.clone(), xs.to_vec()).expect("same shape")));
    let e_params = max_relative_error(&grads.flat_values(), &numeric_params);
    let e_input = max_relative_error(input_grad.data(), &numeric_input);
    Ok(e_params.max(e_input))
}
