//! Fixed feature extractors for the feature-space loss.

use super::ModelError;
use crate::nn::{LayerSpec, Mode, Network, Padding, Tape, Tensor};

/// Channels the extractor consumes; grayscale inputs are replicated.
pub const EXTRACTOR_CHANNELS: usize = 3;

/// A frozen network truncated at its tap. Parameters are never updated.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureExtractor {
    net: Network,
    tap: usize,
}

impl FeatureExtractor {
    /// Keeps the first `tap` layers of `net`. The network must accept
    /// 3-channel input and keep spatial resolution until the tap.
    pub fn new(mut net: Network, tap: usize) -> Result<Self, ModelError> {
        if tap > net.layers.len() {
            return Err(ModelError::InvalidPlan(format!("tap {tap} beyond {} layers", net.layers.len())));
        }
        net.layers.truncate(tap);
        for (i, layer) in net.layers.iter().enumerate() {
            match layer.spec {
                LayerSpec::Conv2d { stride, .. } if stride != 1 => {
                    return Err(ModelError::InvalidPlan(format!("extractor layer {i} has stride {stride}")));
                }
                LayerSpec::Conv2d { padding: Padding::None, .. }
                | LayerSpec::Flatten
                | LayerSpec::Dense { .. }
                | LayerSpec::PixelShuffle { .. }
                | LayerSpec::BatchNorm { .. } => {
                    return Err(ModelError::InvalidPlan(format!(
                        "extractor layer {i} ({}) changes geometry or has batch state",
                        layer.spec.name()
                    )));
                }
                _ => {}
            }
        }
        Ok(FeatureExtractor { net, tap })
    }

    /// Pass-through extractor: features are the replicated input.
    pub fn identity() -> Self {
        FeatureExtractor { net: Network::new(), tap: 0 }
    }

    /// Seeded stand-in for a pretrained network: four 3×3 stride-1 convs
    /// (3→16→16→32→32) with relu, tapped after the last one.
    pub fn surrogate(seed: u64) -> Self {
        let mut net = Network::new();
        for (i, o) in [(3, 16), (16, 16), (16, 32), (32, 32)] {
            net.push(LayerSpec::conv(i, o, 3, Padding::Reflective)).expect("valid");
            net.push(LayerSpec::Relu).expect("valid");
        }
        net.init_kaiming(seed);
        net.meta.insert("kind".into(), "feature_extractor".into());
        FeatureExtractor::new(net, 8).expect("valid surrogate")
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn tap(&self) -> usize {
        self.tap
    }

    /// Replicates a 1-channel batch to the extractor's channel count.
    pub fn replicate(x: &Tensor) -> Result<Tensor, ModelError> {
        let Some((n, 1, h, w)) = x.dims4() else {
            return Err(ModelError::Shape(format!("expected [n, 1, h, w], got {:?}", x.shape())));
        };
        let mut out = Vec::with_capacity(n * EXTRACTOR_CHANNELS * h * w);
        for i in 0..n {
            let plane = &x.data()[i * h * w..(i + 1) * h * w];
            for _ in 0..EXTRACTOR_CHANNELS {
                out.extend_from_slice(plane);
            }
        }
        Ok(Tensor::new(vec![n, EXTRACTOR_CHANNELS, h, w], out)?)
    }

    pub fn features(&self, x: &Tensor) -> Result<Tensor, ModelError> {
        Ok(self.net.infer(&Self::replicate(x)?)?)
    }

    pub(crate) fn tape(&self, x: &Tensor) -> Result<Tape, ModelError> {
        Ok(self.net.forward(&Self::replicate(x)?, Mode::Train)?)
    }

    /// Gradient with respect to the 1-channel input, summed over replicas.
    pub(crate) fn backward(&self, tape: &Tape, grad_features: &Tensor) -> Result<Tensor, ModelError> {
        let g3 = self.net.backward_input(tape, grad_features)?;
        let (n, c, h, w) = g3.dims4().expect("4-D");
        let mut out = vec![0.0; n * h * w];
        for i in 0..n {
            for ch in 0..c {
                let plane = &g3.data()[(i * c + ch) * h * w..(i * c + ch + 1) * h * w];
                for (o, v) in out[i * h * w..(i + 1) * h * w].iter_mut().zip(plane) {
                    *o += v;
                }
            }
        }
        Ok(Tensor::new(vec![n, 1, h, w], out)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn surrogate_keeps_resolution() {
        let phi = FeatureExtractor::surrogate(1);
        let x = Tensor::filled(&[2, 1, 7, 9], 0.2);
        assert_eq!(phi.features(&x).unwrap().shape(), &[2, 32, 7, 9]);
        assert_eq!(phi, FeatureExtractor::surrogate(1));
    }

    #[test]
    fn rejects_strided_or_single_channel_misuse() {
        let mut net = Network::new();
        net.push(LayerSpec::Conv2d { in_ch: 3, out_ch: 4, kh: 3, kw: 3, stride: 2, padding: Padding::Zero }).unwrap();
        assert!(FeatureExtractor::new(net.clone(), 1).is_err());
        assert!(FeatureExtractor::new(net.clone(), 0).is_ok());
        assert!(FeatureExtractor::new(net, 2).is_err());
        assert!(FeatureExtractor::identity().features(&Tensor::zeros(&[1, 3, 4, 4])).is_err());
    }
}
