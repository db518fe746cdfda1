//! The SR networks, their losses, and the training schedules.

mod feature;
pub mod losses;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{Image, ImageError, Range, ScaleFactor};
use crate::nn::{LayerSpec, Network, NnError, Padding, Tensor};

pub use feature::{FeatureExtractor, EXTRACTOR_CHANNELS};
pub use losses::{
    adversarial_gen_loss, content_loss, discriminator_loss, feature_loss, mse_loss, perceptual_loss, perceptual_loss_weighted, ADV_WEIGHT,
};
pub use train::{
    generator_objective, train, write_loss_csv, EpochSummary, LossReport, Phase, PlanModel, StepRecord, TrainOutcome, TrainPlan, Update,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    InvalidPlan(String),
    #[error("probability {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("this plan needs a feature extractor")]
    MissingExtractor,
    #[error("loss identity violated at step {step}: {detail}")]
    Identity { step: usize, detail: String },
    #[error("model geometry: {0}")]
    Geometry(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Srcnn,
    SrresnetGenerator,
    Discriminator,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Srcnn => "srcnn",
            ModelKind::SrresnetGenerator => "srresnet_generator",
            ModelKind::Discriminator => "discriminator",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "srcnn" => Ok(ModelKind::Srcnn),
            "srresnet_generator" | "generator" => Ok(ModelKind::SrresnetGenerator),
            "discriminator" => Ok(ModelKind::Discriminator),
            other => Err(ModelError::InvalidPlan(format!("unknown model kind {other:?}"))),
        }
    }
}

/// Architecture hyperparameters. `width` is the first-layer channel count;
/// `blocks` counts residual blocks (generator) or strided convs
/// (discriminator); `input_size` is the discriminator's square input side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub kind: ModelKind,
    pub scale: ScaleFactor,
    pub width: usize,
    pub blocks: usize,
    pub input_size: usize,
}

impl ArchSpec {
    pub fn srcnn(scale: ScaleFactor) -> Self {
        ArchSpec { kind: ModelKind::Srcnn, scale, width: 64, blocks: 0, input_size: 0 }
    }

    pub fn generator(scale: ScaleFactor) -> Self {
        ArchSpec { kind: ModelKind::SrresnetGenerator, scale, width: 32, blocks: 4, input_size: 0 }
    }

    pub fn discriminator(scale: ScaleFactor, input_size: usize) -> Self {
        ArchSpec { kind: ModelKind::Discriminator, scale, width: 16, blocks: 4, input_size }
    }
}

pub const DISC_SLOPE: f64 = 0.2;
const DISC_HIDDEN: usize = 32;

/// Builds and Kaiming-initializes a network. Kind and scale are recorded in
/// the network metadata so checkpoints are self-describing.
pub fn build_model(arch: &ArchSpec, seed: u64) -> Result<Network, ModelError> {
    if arch.scale == ScaleFactor::X2 {
        return Err(ModelError::InvalidPlan("networks support scale 4 or 8".into()));
    }
    if arch.width == 0 {
        return Err(ModelError::InvalidPlan("width must be positive".into()));
    }
    let w = arch.width;
    let mut net = Network::new();
    match arch.kind {
        ModelKind::Srcnn => {
            let w2 = (w / 2).max(1);
            net.push(LayerSpec::conv(1, w, 9, Padding::Reflective))?;
            net.push(LayerSpec::Relu)?;
            net.push(LayerSpec::conv(w, w2, 1, Padding::Reflective))?;
            net.push(LayerSpec::Relu)?;
            net.push(LayerSpec::conv(w2, 1, 5, Padding::Reflective))?;
        }
        ModelKind::SrresnetGenerator => {
            net.push(LayerSpec::conv(1, w, 9, Padding::Reflective))?;
            let entry = net.push(LayerSpec::Prelu { channels: w })?;
            let mut x = entry;
            for _ in 0..arch.blocks {
                net.push(LayerSpec::conv(w, w, 3, Padding::Reflective))?;
                net.push(LayerSpec::BatchNorm { channels: w })?;
                net.push(LayerSpec::Prelu { channels: w })?;
                net.push(LayerSpec::conv(w, w, 3, Padding::Reflective))?;
                net.push(LayerSpec::BatchNorm { channels: w })?;
                x = net.push(LayerSpec::Add { from: x })?;
            }
            net.push(LayerSpec::conv(w, w, 3, Padding::Reflective))?;
            net.push(LayerSpec::BatchNorm { channels: w })?;
            net.push(LayerSpec::Add { from: entry })?;
            for _ in 0..arch.scale.doublings() {
                net.push(LayerSpec::conv(w, 4 * w, 3, Padding::Reflective))?;
                net.push(LayerSpec::PixelShuffle { factor: 2 })?;
                net.push(LayerSpec::Prelu { channels: w })?;
            }
            net.push(LayerSpec::conv(w, 1, 9, Padding::Reflective))?;
        }
        ModelKind::Discriminator => {
            if arch.input_size == 0 {
                return Err(ModelError::InvalidPlan("discriminator needs an input size".into()));
            }
            net.push(LayerSpec::conv(1, w, 3, Padding::Zero))?;
            net.push(LayerSpec::LeakyRelu { slope: DISC_SLOPE })?;
            let (mut c, mut side) = (w, arch.input_size);
            for _ in 0..arch.blocks {
                net.push(LayerSpec::Conv2d { in_ch: c, out_ch: 2 * c, kh: 3, kw: 3, stride: 2, padding: Padding::Zero })?;
                net.push(LayerSpec::LeakyRelu { slope: DISC_SLOPE })?;
                c *= 2;
                side = side.div_ceil(2);
            }
            net.push(LayerSpec::Flatten)?;
            net.push(LayerSpec::Dense { inputs: c * side * side, outputs: DISC_HIDDEN })?;
            net.push(LayerSpec::LeakyRelu { slope: DISC_SLOPE })?;
            net.push(LayerSpec::Dense { inputs: DISC_HIDDEN, outputs: 1 })?;
            net.push(LayerSpec::Sigmoid)?;
            net.meta.insert("input_size".into(), arch.input_size.to_string());
        }
    }
    net.init_kaiming(seed);
    net.meta.insert("kind".into(), arch.kind.to_string());
    net.meta.insert("scale".into(), arch.scale.to_string());
    Ok(net)
}

/// Kind recorded in a network's metadata.
pub fn model_kind(net: &Network) -> Option<ModelKind> {
    net.meta.get("kind").and_then(|k| k.parse().ok())
}

pub fn model_scale(net: &Network) -> Option<ScaleFactor> {
    net.meta.get("scale").and_then(|s| s.parse::<u32>().ok()).and_then(|s| ScaleFactor::new(s).ok())
}

/// One image as a `[1, 1, h, w]` Signed11 batch.
pub fn image_tensor(img: &Image) -> Tensor {
    let s = img.rescale_range(Range::Signed11);
    Tensor::new(vec![1, 1, s.height(), s.width()], s.into_pixels()).expect("consistent geometry")
}

/// Batch of same-sized images as `[n, 1, h, w]` in Signed11.
pub fn batch_tensor(imgs: &[&Image]) -> Result<Tensor, ModelError> {
    let dims = imgs.first().map(|i| i.dims()).ok_or(ModelError::EmptyCorpus)?;
    let mut data = Vec::with_capacity(imgs.len() * dims.0 * dims.1);
    for img in imgs {
        if img.dims() != dims {
            return Err(ModelError::Shape(format!("batch mixes {:?} and {:?}", dims, img.dims())));
        }
        data.extend_from_slice(img.rescale_range(Range::Signed11).pixels());
    }
    Ok(Tensor::new(vec![imgs.len(), 1, dims.1, dims.0], data)?)
}

/// Item `i` of a 1-channel batch as a Byte255 image, clamped to range.
pub fn tensor_image(t: &Tensor, i: usize) -> Result<Image, ModelError> {
    let Some((_, 1, h, w)) = t.dims4() else {
        return Err(ModelError::Shape(format!("expected [n, 1, h, w], got {:?}", t.shape())));
    };
    let data = t.data()[i * h * w..(i + 1) * h * w].to_vec();
    Ok(Image::from_clamped(w, h, Range::Signed11, data)?.rescale_range(Range::Byte255))
}

/// Runs a trained network on one LR image. SRCNN consumes the bicubic
/// upscale; the generator consumes the LR image directly. Output is Byte255.
pub fn super_resolve(model: &Network, kind: ModelKind, lr: &Image, scale: ScaleFactor) -> Result<Image, ModelError> {
    if let Some(k) = model_kind(model) {
        if k != kind {
            return Err(ModelError::Geometry(format!("network is a {k}, not a {kind}")));
        }
    }
    if let Some(s) = model_scale(model) {
        if kind == ModelKind::SrresnetGenerator && s != scale {
            return Err(ModelError::Geometry(format!("generator upsamples {s}x, {scale}x requested")));
        }
    }
    let input = match kind {
        ModelKind::Srcnn => image_tensor(&lr.upscale(scale)),
        ModelKind::SrresnetGenerator => image_tensor(lr),
        ModelKind::Discriminator => return Err(ModelError::Geometry("a discriminator does not super-resolve".into())),
    };
    let out = model.infer(&input)?;
    let expect = [1, 1, lr.height() * scale.as_usize(), lr.width() * scale.as_usize()];
    if out.shape() != expect {
        return Err(ModelError::Geometry(format!("output {:?}, expected {:?}", out.shape(), expect)));
    }
    tensor_image(&out, 0)
}
