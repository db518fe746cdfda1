use std::fmt;
use std::str::FromStr;

use super::conv::{self, ConvGeom};
use super::tensor::Tensor;
use super::NnError;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    None,
    Zero,
    Reflective,
}

/// Hyperparameters of one layer; parameter shapes follow from these.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Conv2d {
        in_ch: usize,
        out_ch: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        padding: Padding,
    },
    Relu,
    LeakyRelu {
        slope: f64,
    },
    Prelu {
        channels: usize,
    },
    BatchNorm {
        channels: usize,
    },
    /// Adds activation `from` (0 is the network input, `k` the output of layer
    /// `k - 1`) to the incoming activation.
    Add {
        from: usize,
    },
    PixelShuffle {
        factor: usize,
    },
    Sigmoid,
    Flatten,
    Dense {
        inputs: usize,
        outputs: usize,
    },
}

impl LayerSpec {
    pub fn conv(in_ch: usize, out_ch: usize, k: usize, padding: Padding) -> Self {
        LayerSpec::Conv2d { in_ch, out_ch, kh: k, kw: k, stride: 1, padding }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::Relu => "relu",
            LayerSpec::LeakyRelu { .. } => "leaky_relu",
            LayerSpec::Prelu { .. } => "prelu",
            LayerSpec::BatchNorm { .. } => "batch_norm",
            LayerSpec::Add { .. } => "elementwise_add",
            LayerSpec::PixelShuffle { .. } => "pixel_shuffle",
            LayerSpec::Sigmoid => "sigmoid",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
        }
    }

    pub(crate) fn param_shapes(&self) -> Vec<Vec<usize>> {
        match *self {
            LayerSpec::Conv2d { in_ch, out_ch, kh, kw, .. } => vec![vec![out_ch, in_ch, kh, kw], vec![out_ch]],
            LayerSpec::Prelu { channels } => vec![vec![channels]],
            LayerSpec::BatchNorm { channels } => vec![vec![channels], vec![channels]],
            LayerSpec::Dense { inputs, outputs } => vec![vec![outputs, inputs], vec![outputs]],
            _ => vec![],
        }
    }

    /// Default (non-random) parameter values.
    pub(crate) fn default_params(&self) -> Vec<Tensor> {
        match *self {
            LayerSpec::Prelu { channels } => vec![Tensor::filled(&[channels], 0.25)],
            LayerSpec::BatchNorm { channels } => vec![Tensor::filled(&[channels], 1.0), Tensor::zeros(&[channels])],
            _ => self.param_shapes().iter().map(|s| Tensor::zeros(s)).collect(),
        }
    }

    pub(crate) fn default_buffers(&self) -> Vec<Tensor> {
        match *self {
            LayerSpec::BatchNorm { channels } => vec![Tensor::zeros(&[channels]), Tensor::filled(&[channels], 1.0)],
            _ => vec![],
        }
    }

    fn validate(&self) -> Result<(), NnError> {
        let ok = match *self {
            LayerSpec::Conv2d { in_ch, out_ch, kh, kw, stride, .. } => in_ch > 0 && out_ch > 0 && kh > 0 && kw > 0 && stride > 0,
            LayerSpec::Prelu { channels } | LayerSpec::BatchNorm { channels } => channels > 0,
            LayerSpec::PixelShuffle { factor } => factor >= 2,
            LayerSpec::Dense { inputs, outputs } => inputs > 0 && outputs > 0,
            LayerSpec::LeakyRelu { slope } => slope.is_finite(),
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(NnError::InvalidSpec(self.to_string()))
        }
    }

    pub(crate) fn conv_geom(&self, input: &Tensor) -> Option<ConvGeom> {
        if let LayerSpec::Conv2d { in_ch, out_ch, kh, kw, stride, padding } = *self {
            let (n, _, h, w) = input.dims4()?;
            let (pad_y, pad_x) = match padding {
                Padding::None => (0, 0),
                Padding::Zero | Padding::Reflective => ((kh - 1) / 2, (kw - 1) / 2),
            };
            Some(ConvGeom { n, in_ch, out_ch, h, w, kh, kw, stride, pad_y, pad_x, padding })
        } else {
            None
        }
    }

    /// Output shape for `input`, or a description of why it does not fit.
    pub(crate) fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, String> {
        let four = |s: &[usize]| -> Result<(usize, usize, usize, usize), String> {
            match *s {
                [n, c, h, w] => Ok((n, c, h, w)),
                _ => Err(format!("expected a 4-D activation, got {s:?}")),
            }
        };
        match *self {
            LayerSpec::Conv2d { in_ch, out_ch, kh, kw, stride, padding } => {
                let (n, c, h, w) = four(input)?;
                if c != in_ch {
                    return Err(format!("conv expects {in_ch} channels, got {c}"));
                }
                let (py, px) = match padding {
                    Padding::None => (0, 0),
                    _ => ((kh - 1) / 2, (kw - 1) / 2),
                };
                if h + 2 * py < kh || w + 2 * px < kw {
                    return Err(format!("{h}x{w} input smaller than the {kh}x{kw} kernel"));
                }
                Ok(vec![n, out_ch, (h + 2 * py - kh) / stride + 1, (w + 2 * px - kw) / stride + 1])
            }
            LayerSpec::Prelu { channels } | LayerSpec::BatchNorm { channels } => {
                let (_, c, _, _) = four(input)?;
                if c != channels {
                    return Err(format!("expects {channels} channels, got {c}"));
                }
                Ok(input.to_vec())
            }
            LayerSpec::PixelShuffle { factor } => {
                let (n, c, h, w) = four(input)?;
                if c % (factor * factor) != 0 {
                    return Err(format!("{c} channels not divisible by {}", factor * factor));
                }
                Ok(vec![n, c / (factor * factor), h * factor, w * factor])
            }
            LayerSpec::Flatten => Ok(vec![input[0], input[1..].iter().product()]),
            LayerSpec::Dense { inputs, outputs } => match *input {
                [n, f] if f == inputs => Ok(vec![n, outputs]),
                _ => Err(format!("dense expects [batch, {inputs}], got {input:?}")),
            },
            LayerSpec::Relu | LayerSpec::LeakyRelu { .. } | LayerSpec::Sigmoid | LayerSpec::Add { .. } => Ok(input.to_vec()),
        }
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())?;
        match self {
            LayerSpec::Conv2d { in_ch, out_ch, kh, kw, stride, padding } => {
                let pad = match padding {
                    Padding::None => "none",
                    Padding::Zero => "zero",
                    Padding::Reflective => "reflective",
                };
                write!(f, " in={in_ch} out={out_ch} kernel={kh}x{kw} stride={stride} padding={pad}")
            }
            LayerSpec::LeakyRelu { slope } => write!(f, " slope={slope}"),
            LayerSpec::Prelu { channels } | LayerSpec::BatchNorm { channels } => write!(f, " channels={channels}"),
            LayerSpec::Add { from } => write!(f, " from={from}"),
            LayerSpec::PixelShuffle { factor } => write!(f, " factor={factor}"),
            LayerSpec::Dense { inputs, outputs } => write!(f, " in={inputs} out={outputs}"),
            LayerSpec::Relu | LayerSpec::Sigmoid | LayerSpec::Flatten => Ok(()),
        }
    }
}

impl FromStr for LayerSpec {
    type Err = NnError;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let bad = || NnError::InvalidSpec(line.to_string());
        let mut parts = line.split_whitespace();
        let kind = parts.next().ok_or_else(bad)?;
        let kv: Vec<(&str, &str)> = parts.map(|p| p.split_once('=').ok_or_else(bad)).collect::<Result<_, _>>()?;
        let get = |key: &str| kv.iter().find(|(k, _)| *k == key).map(|(_, v)| *v).ok_or_else(bad);
        let num = |key: &str| -> Result<usize, NnError> { get(key)?.parse().map_err(|_| bad()) };
        let spec = match kind {
            "conv2d" => {
                let (kh, kw) = get("kernel")?.split_once('x').ok_or_else(bad)?;
                let padding = match get("padding")? {
                    "none" => Padding::None,
                    "zero" => Padding::Zero,
                    "reflective" => Padding::Reflective,
                    _ => return Err(bad()),
                };
                LayerSpec::Conv2d {
                    in_ch: num("in")?,
                    out_ch: num("out")?,
                    kh: kh.parse().map_err(|_| bad())?,
                    kw: kw.parse().map_err(|_| bad())?,
                    stride: num("stride")?,
                    padding,
                }
            }
            "relu" => LayerSpec::Relu,
            "leaky_relu" => LayerSpec::LeakyRelu { slope: get("slope")?.parse().map_err(|_| bad())? },
            "prelu" => LayerSpec::Prelu { channels: num("channels")? },
            "batch_norm" => LayerSpec::BatchNorm { channels: num("channels")? },
            "elementwise_add" => LayerSpec::Add { from: num("from")? },
            "pixel_shuffle" => LayerSpec::PixelShuffle { factor: num("factor")? },
            "sigmoid" => LayerSpec::Sigmoid,
            "flatten" => LayerSpec::Flatten,
            "dense" => LayerSpec::Dense { inputs: num("in")?, outputs: num("out")? },
            _ => return Err(bad()),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// A layer: its spec, trainable parameters and non-trainable buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    pub params: Vec<Tensor>,
    /// Batch-norm running mean and variance.
    pub buffers: Vec<Tensor>,
}

/// Values a layer keeps from its forward pass for the backward pass.
#[derive(Debug, Clone)]
pub(crate) enum Cache {
    None,
    BatchNorm { normalized: Tensor, inv_std: Vec<f64>, mean: Vec<f64>, var: Vec<f64> },
}

impl Layer {
    pub fn new(spec: LayerSpec) -> Result<Self, NnError> {
        spec.validate()?;
        Ok(Layer { params: spec.default_params(), buffers: spec.default_buffers(), spec })
    }

    pub(crate) fn forward(&self, x: &Tensor, skip: Option<&Tensor>, train: bool) -> (Tensor, Cache) {
        match self.spec {
            LayerSpec::Conv2d { .. } => {
                let g = self.spec.conv_geom(x).expect("validated 4-D input");
                (conv::forward(x, &self.params[0], &self.params[1], &g), Cache::None)
            }
            LayerSpec::Relu => (x.map(|v| v.max(0.0)), Cache::None),
            LayerSpec::LeakyRelu { slope } => (x.map(|v| if v > 0.0 { v } else { slope * v }), Cache::None),
            LayerSpec::Prelu { .. } => {
                let (_, c, h, w) = x.dims4().expect("4-D");
                let alpha = self.params[0].data();
                let mut out = x.clone();
                for (i, v) in out.data_mut().iter_mut().enumerate() {
                    if *v <= 0.0 {
                        *v *= alpha[(i / (h * w)) % c];
                    }
                }
                (out, Cache::None)
            }
            LayerSpec::BatchNorm { .. } => self.batch_norm_forward(x, train),
            LayerSpec::Add { .. } => {
                let mut out = x.clone();
                out.add_assign(skip.expect("network supplies the skip activation"));
                (out, Cache::None)
            }
            LayerSpec::PixelShuffle { factor } => (pixel_shuffle(x, factor), Cache::None),
            LayerSpec::Sigmoid => (x.map(sigmoid), Cache::None),
            LayerSpec::Flatten => {
                let shape = vec![x.batch(), x.len() / x.batch()];
                (x.clone().reshaped(shape).expect("same length"), Cache::None)
            }
            LayerSpec::Dense { inputs, outputs } => {
                let n = x.batch();
                let (w, b) = (self.params[0].data(), self.params[1].data());
                let mut out = vec![0.0; n * outputs];
                for i in 0..n {
                    let xi = &x.data()[i * inputs..(i + 1) * inputs];
                    for o in 0..outputs {
                        let row = &w[o * inputs..(o + 1) * inputs];
                        out[i * outputs + o] = b[o] + row.iter().zip(xi).map(|(a, c)| a * c).sum::<f64>();
                    }
                }
                (Tensor::new(vec![n, outputs], out).expect("dense shape"), Cache::None)
            }
        }
    }

    fn batch_norm_forward(&self, x: &Tensor, train: bool) -> (Tensor, Cache) {
        let (n, c, h, w) = x.dims4().expect("4-D");
        let hw = h * w;
        let m = (n * hw) as f64;
        let (gamma, beta) = (self.params[0].data(), self.params[1].data());
        let d = x.data();
        let (mean, var): (Vec<f64>, Vec<f64>) = if train {
            (0..c)
                .map(|ch| {
                    let vals = || (0..n).flat_map(move |i| d[(i * c + ch) * hw..(i * c + ch + 1) * hw].iter());
                    let mu = vals().sum::<f64>() / m;
                    let var = vals().map(|v| (v - mu) * (v - mu)).sum::<f64>() / m;
                    (mu, var)
                })
                .unzip()
        } else {
            (self.buffers[0].data().to_vec(), self.buffers[1].data().to_vec())
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let mut normalized = Tensor::zeros_like(x);
        let mut out = Tensor::zeros_like(x);
        for i in 0..n {
            for ch in 0..c {
                let range = (i * c + ch) * hw..(i * c + ch + 1) * hw;
                for k in range {
                    let xh = (d[k] - mean[ch]) * inv_std[ch];
                    normalized.data_mut()[k] = xh;
                    out.data_mut()[k] = gamma[ch] * xh + beta[ch];
                }
            }
        }
        (out, Cache::BatchNorm { normalized, inv_std, mean, var })
    }

    /// Gradient with respect to the layer input (and the skip source for
    /// `Add`, which receives the same gradient), plus parameter gradients.
    pub(crate) fn backward(&self, x: &Tensor, y: &Tensor, cache: &Cache, g: &Tensor, want_params: bool) -> (Tensor, Vec<Tensor>) {
        match self.spec {
            LayerSpec::Conv2d { .. } => {
                let geom = self.spec.conv_geom(x).expect("4-D");
                let (gi, gp) = conv::backward(x, &self.params[0], g, &geom, want_params);
                (gi, gp.map(|(a, b)| vec![a, b]).unwrap_or_default())
            }
            LayerSpec::Relu => (zip_map(x, g, |xv, gv| if xv > 0.0 { gv } else { 0.0 }), vec![]),
            LayerSpec::LeakyRelu { slope } => (zip_map(x, g, |xv, gv| if xv > 0.0 { gv } else { slope * gv }), vec![]),
            LayerSpec::Prelu { channels } => {
                let (_, c, h, w) = x.dims4().expect("4-D");
                let alpha = self.params[0].data();
                let mut gi = g.clone();
                let mut ga = vec![0.0; channels];
                for (i, (gv, &xv)) in gi.data_mut().iter_mut().zip(x.data()).enumerate() {
                    if xv <= 0.0 {
                        let ch = (i / (h * w)) % c;
                        ga[ch] += *gv * xv;
                        *gv *= alpha[ch];
                    }
                }
                let gp = if want_params { vec![Tensor::new(vec![channels], ga).expect("prelu grad")] } else { vec![] };
                (gi, gp)
            }
            LayerSpec::BatchNorm { .. } => self.batch_norm_backward(cache, g, want_params),
            LayerSpec::Add { .. } | LayerSpec::Flatten => (g.clone().reshaped(x.shape().to_vec()).expect("same length"), vec![]),
            LayerSpec::PixelShuffle { factor } => (pixel_unshuffle(g, factor), vec![]),
            LayerSpec::Sigmoid => (zip_map(y, g, |yv, gv| gv * yv * (1.0 - yv)), vec![]),
            LayerSpec::Dense { inputs, outputs } => {
                let n = x.batch();
                let w = self.params[0].data();
                let mut gi = vec![0.0; n * inputs];
                let mut gw = vec![0.0; inputs * outputs];
                let mut gb = vec![0.0; outputs];
                for i in 0..n {
                    let xi = &x.data()[i * inputs..(i + 1) * inputs];
                    for o in 0..outputs {
                        let gv = g.data()[i * outputs + o];
                        gb[o] += gv;
                        for k in 0..inputs {
                            gi[i * inputs + k] += gv * w[o * inputs + k];
                            gw[o * inputs + k] += gv * xi[k];
                        }
                    }
                }
                let gi = Tensor::new(x.shape().to_vec(), gi).expect("dense grad shape");
                let gp = if want_params {
                    vec![Tensor::new(vec![outputs, inputs], gw).expect("w"), Tensor::new(vec![outputs], gb).expect("b")]
                } else {
                    vec![]
                };
                (gi, gp)
            }
        }
    }

    fn batch_norm_backward(&self, cache: &Cache, g: &Tensor, want_params: bool) -> (Tensor, Vec<Tensor>) {
        let Cache::BatchNorm { normalized, inv_std, .. } = cache else { unreachable!("batch norm forward always records its cache") };
        let (n, c, h, w) = g.dims4().expect("4-D");
        let hw = h * w;
        let m = (n * hw) as f64;
        let gamma = self.params[0].data();
        let (gd, xh) = (g.data(), normalized.data());
        let mut gi = Tensor::zeros_like(g);
        let mut ggamma = vec![0.0; c];
        let mut gbeta = vec![0.0; c];
        for ch in 0..c {
            let idx = || (0..n).flat_map(move |i| (i * c + ch) * hw..(i * c + ch + 1) * hw);
            let sum_g: f64 = idx().map(|k| gd[k]).sum();
            let sum_gx: f64 = idx().map(|k| gd[k] * xh[k]).sum();
            ggamma[ch] = sum_gx;
            gbeta[ch] = sum_g;
            let k_scale = gamma[ch] * inv_std[ch] / m;
            for k in idx() {
                gi.data_mut()[k] = k_scale * (m * gd[k] - sum_g - xh[k] * sum_gx);
            }
        }
        let gp = if want_params {
            vec![Tensor::new(vec![c], ggamma).expect("gamma"), Tensor::new(vec![c], gbeta).expect("beta")]
        } else {
            vec![]
        };
        (gi, gp)
    }

    /// Folds this step's batch statistics into the running estimates.
    pub(crate) fn update_running_stats(&mut self, cache: &Cache, count: usize) {
        if let Cache::BatchNorm { mean, var, .. } = cache {
            let unbias = if count > 1 { count as f64 / (count as f64 - 1.0) } else { 1.0 };
            for ch in 0..mean.len() {
                let rm = &mut self.buffers[0].data_mut()[ch];
                *rm = BN_MOMENTUM * *rm + (1.0 - BN_MOMENTUM) * mean[ch];
                let rv = &mut self.buffers[1].data_mut()[ch];
                *rv = BN_MOMENTUM * *rv + (1.0 - BN_MOMENTUM) * var[ch] * unbias;
            }
        }
    }
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(b.shape().to_vec(), data).expect("same shape")
}

/// `(N, C*r*r, H, W) -> (N, C, H*r, W*r)` with
/// `out[n, c, h*r + i, w*r + j] = in[n, c*r*r + i*r + j, h, w]`.
pub fn pixel_shuffle(x: &Tensor, r: usize) -> Tensor {
    let (n, cin, h, w) = x.dims4().expect("4-D");
    let c = cin / (r * r);
    let (oh, ow) = (h * r, w * r);
    let mut out = vec![0.0; x.len()];
    let d = x.data();
    for b in 0..n {
        for ch in 0..c {
            for i in 0..r {
                for j in 0..r {
                    let src_plane = ((b * cin) + ch * r * r + i * r + j) * h * w;
                    for y in 0..h {
                        let dst_row = ((b * c + ch) * oh + y * r + i) * ow;
                        for xx in 0..w {
                            out[dst_row + xx * r + j] = d[src_plane + y * w + xx];
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![n, c, oh, ow], out).expect("shuffle shape")
}

/// Inverse of [`pixel_shuffle`]; it is a permutation, so also its adjoint.
pub fn pixel_unshuffle(y: &Tensor, r: usize) -> Tensor {
    let (n, c, oh, ow) = y.dims4().expect("4-D");
    let (h, w) = (oh / r, ow / r);
    let cin = c * r * r;
    let mut out = vec![0.0; y.len()];
    let d = y.data();
    for b in 0..n {
        for ch in 0..c {
            for i in 0..r {
                for j in 0..r {
                    let dst_plane = ((b * cin) + ch * r * r + i * r + j) * h * w;
                    for yy in 0..h {
                        let src_row = ((b * c + ch) * oh + yy * r + i) * ow;
                        for xx in 0..w {
                            out[dst_plane + yy * w + xx] = d[src_row + xx * r + j];
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![n, cin, h, w], out).expect("unshuffle shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_text_round_trip() {
        let specs = [
            LayerSpec::Conv2d { in_ch: 3, out_ch: 16, kh: 9, kw: 5, stride: 2, padding: Padding::Reflective },
            LayerSpec::LeakyRelu { slope: 0.2 },
            LayerSpec::Prelu { channels: 4 },
            LayerSpec::BatchNorm { channels: 4 },
            LayerSpec::Add { from: 3 },
            LayerSpec::PixelShuffle { factor: 2 },
            LayerSpec::Dense { inputs: 10, outputs: 1 },
            LayerSpec::Sigmoid,
            LayerSpec::Flatten,
            LayerSpec::Relu,
        ];
        for s in specs {
            assert_eq!(s.to_string().parse::<LayerSpec>().unwrap(), s);
        }
        assert!("pixel_shuffle factor=1".parse::<LayerSpec>().is_err());
        assert!("conv2d in=1".parse::<LayerSpec>().is_err());
    }

    #[test]
    fn pixel_shuffle_matches_index_reference() {
        let x = Tensor::new(vec![1, 4, 3, 3], (0..36).map(|v| v as f64).collect()).unwrap();
        let y = pixel_shuffle(&x, 2);
        assert_eq!(y.shape(), &[1, 1, 6, 6]);
        // Reference: output (row, col) reads channel (row%2)*2 + col%2 at (row/2, col/2).
        for row in 0..6 {
            for col in 0..6 {
                let ch = (row % 2) * 2 + col % 2;
                let expected = (ch * 9 + (row / 2) * 3 + col / 2) as f64;
                assert_eq!(y.data()[row * 6 + col], expected);
            }
        }
        assert_eq!(pixel_unshuffle(&y, 2), x);
    }

    #[test]
    fn relu_values() {
        let l = Layer::new(LayerSpec::Relu).unwrap();
        let x = Tensor::new(vec![1, 3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(l.forward(&x, None, false).0.data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(-800.0) < 1e-300);
        assert_eq!(sigmoid(800.0), 1.0);
        assert_eq!(sigmoid(0.0), 0.5);
    }
}
