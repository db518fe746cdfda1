use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::layer::{Cache, Layer, LayerSpec};
use super::tensor::Tensor;
use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Feed-forward layer stack with optional additive skip edges.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Network {
    pub layers: Vec<Layer>,
    /// Free-form descriptive tags persisted with checkpoints.
    pub meta: BTreeMap<String, String>,
}

/// Activations and per-layer caches retained by a forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    /// `activations[0]` is the input, `activations[k]` the output of layer `k - 1`.
    pub activations: Vec<Tensor>,
    caches: Vec<Cache>,
    mode: Mode,
}

impl Tape {
    pub fn output(&self) -> &Tensor {
        self.activations.last().expect("tape holds at least the input")
    }

    pub fn into_output(mut self) -> Tensor {
        self.activations.pop().expect("tape holds at least the input")
    }
}

/// Parameter gradients aligned with [`Network::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub per_layer: Vec<Vec<Tensor>>,
}

impl Gradients {
    pub fn flat(&self) -> impl Iterator<Item = &Tensor> {
        self.per_layer.iter().flatten()
    }

    pub fn flat_values(&self) -> Vec<f64> {
        self.flat().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.per_layer.iter_mut().flatten().zip(other.per_layer.iter().flatten()) {
            a.add_assign(b);
        }
    }
}

/// Kaiming normal weights with variance `2 / fan_in`.
pub fn kaiming_init(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let fan_in: usize = shape[1..].iter().product();
    let std = (2.0 / fan_in.max(1) as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("finite std");
    let data = (0..shape.iter().product()).map(|_| normal.sample(rng)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape is valid")
}

pub fn kaiming_init_seeded(shape: &[usize], seed: u64) -> Tensor {
    kaiming_init(shape, &mut ChaCha8Rng::seed_from_u64(seed))
}

impl Network {
    pub fn new() -> Self {
        Network::default()
    }

    pub fn push(&mut self, spec: LayerSpec) -> Result<usize, NnError> {
        if let LayerSpec::Add { from } = spec {
            if from > self.layers.len() {
                return Err(NnError::InvalidSpec(format!("skip source {from} is not an earlier activation")));
            }
        }
        self.layers.push(Layer::new(spec)?);
        Ok(self.layers.len())
    }

    /// Index of the activation the next pushed layer will produce.
    pub fn next_activation(&self) -> usize {
        self.layers.len() + 1
    }

    /// Kaiming-initializes conv/dense weights (biases zero) from one seeded stream.
    pub fn init_kaiming(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut self.layers {
            if matches!(layer.spec, LayerSpec::Conv2d { .. } | LayerSpec::Dense { .. }) {
                let shape = layer.params[0].shape().to_vec();
                layer.params[0] = kaiming_init(&shape, &mut rng);
                layer.params[1] = Tensor::zeros_like(&layer.params[1]);
            }
        }
    }

    pub fn params(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flat_map(|l| l.params.iter())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.layers.iter_mut().flat_map(|l| l.params.iter_mut())
    }

    pub fn param_count(&self) -> usize {
        self.params().map(Tensor::len).sum()
    }

    /// Checks that every layer accepts its incoming shape; returns the output shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, NnError> {
        let mut shapes = vec![input.to_vec()];
        for (i, layer) in self.layers.iter().enumerate() {
            let cur = shapes.last().expect("non-empty");
            if let LayerSpec::Add { from } = layer.spec {
                if shapes[from] != *cur {
                    return Err(NnError::LayerShape {
                        layer: i,
                        kind: layer.spec.name(),
                        detail: format!("skip source {:?} does not match {:?}", shapes[from], cur),
                    });
                }
            }
            let next = layer.spec.output_shape(cur).map_err(|detail| NnError::LayerShape { layer: i, kind: layer.spec.name(), detail })?;
            shapes.push(next);
        }
        Ok(shapes.pop().expect("non-empty"))
    }

    pub fn forward(&self, input: &Tensor, mode: Mode) -> Result<Tape, NnError> {
        self.output_shape(input.shape())?;
        if input.data().iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFinite);
        }
        let train = mode == Mode::Train;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut caches = Vec::with_capacity(self.layers.len());
        activations.push(input.clone());
        for layer in &self.layers {
            let skip = match layer.spec {
                LayerSpec::Add { from } => Some(&activations[from]),
                _ => None,
            };
            let (out, cache) = layer.forward(activations.last().expect("non-empty"), skip, train);
            activations.push(out);
            if train {
                caches.push(cache);
            } else {
                caches.push(Cache::None);
            }
        }
        Ok(Tape { activations, caches, mode })
    }

    pub fn infer(&self, input: &Tensor) -> Result<Tensor, NnError> {
        Ok(self.forward(input, Mode::Eval)?.into_output())
    }

    /// Reverse pass. Returns parameter gradients and the input gradient.
    pub fn backward(&self, tape: &Tape, grad_out: &Tensor) -> Result<(Gradients, Tensor), NnError> {
        self.backward_impl(tape, grad_out, true)
    }

    /// Reverse pass that only propagates to the input (frozen networks).
    pub fn backward_input(&self, tape: &Tape, grad_out: &Tensor) -> Result<Tensor, NnError> {
        self.backward_impl(tape, grad_out, false).map(|(_, g)| g)
    }

    fn backward_impl(&self, tape: &Tape, grad_out: &Tensor, want_params: bool) -> Result<(Gradients, Tensor), NnError> {
        if tape.mode != Mode::Train || tape.activations.len() != self.layers.len() + 1 {
            return Err(NnError::NoTape);
        }
        if grad_out.shape() != tape.output().shape() {
            return Err(NnError::ShapeMismatch { expected: tape.output().shape().to_vec(), got: grad_out.shape().to_vec() });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; tape.activations.len()];
        *grads.last_mut().expect("non-empty") = Some(grad_out.clone());
        let mut per_layer = vec![Vec::new(); self.layers.len()];
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let Some(g) = grads[i + 1].take() else {
                if want_params {
                    per_layer[i] = layer.params.iter().map(Tensor::zeros_like).collect();
                }
                continue;
            };
            let (gi, gp) = layer.backward(&tape.activations[i], &tape.activations[i + 1], &tape.caches[i], &g, want_params);
            if let LayerSpec::Add { from } = layer.spec {
                accumulate(&mut grads[from], &g);
            }
            accumulate(&mut grads[i], &gi);
            per_layer[i] = if want_params { gp } else { vec![] };
        }
        let input_grad = grads[0].take().unwrap_or_else(|| Tensor::zeros_like(&tape.activations[0]));
        Ok((Gradients { per_layer }, input_grad))
    }

    /// Applies the batch statistics recorded on a train-mode tape.
    pub fn update_running_stats(&mut self, tape: &Tape) {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            if let LayerSpec::BatchNorm { .. } = layer.spec {
                let (n, _, h, w) = tape.activations[i].dims4().expect("4-D");
                layer.update_running_stats(&tape.caches[i], n * h * w);
            }
        }
    }
}

fn accumulate(slot: &mut Option<Tensor>, g: &Tensor) {
    match slot {
        Some(t) => t.add_assign(g),
        None => *slot = Some(g.clone()),
    }
}
