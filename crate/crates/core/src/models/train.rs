//! Training schedules for SRCNN, SRResNet, and SRGAN.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::feature::FeatureExtractor;
use super::losses::{
    adversarial_gen_loss_grad, content_loss, discriminator_loss, discriminator_loss_grad, feature_loss_grad, mse_loss_grad,
    perceptual_loss_weighted, ADV_WEIGHT,
};
use super::{batch_tensor, build_model, ArchSpec, ModelError, ModelKind};
use crate::image::{Image, ScaleFactor};
use crate::nn::{AdamState, Gradients, Mode, Network, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanModel {
    Srcnn,
    Srresnet,
    Srgan,
}

impl PlanModel {
    pub fn as_str(self) -> &'static str {
        match self {
            PlanModel::Srcnn => "srcnn",
            PlanModel::Srresnet => "srresnet",
            PlanModel::Srgan => "srgan",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "srcnn" => Some(PlanModel::Srcnn),
            "srresnet" => Some(PlanModel::Srresnet),
            "srgan" => Some(PlanModel::Srgan),
            _ => None,
        }
    }

    pub fn network_kind(self) -> ModelKind {
        match self {
            PlanModel::Srcnn => ModelKind::Srcnn,
            PlanModel::Srresnet | PlanModel::Srgan => ModelKind::SrresnetGenerator,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainPlan {
    pub model: PlanModel,
    pub scale: ScaleFactor,
    pub pretrain_epochs: usize,
    pub adversarial_epochs: usize,
    pub total_epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub beta1: f64,
    pub mse_weight: f64,
    pub vgg_weight: f64,
    pub adv_weight: f64,
    pub seed: u64,
    /// First-layer channels of the trained network.
    pub width: usize,
    /// Residual blocks of the generator.
    pub blocks: usize,
    pub disc_width: usize,
    pub disc_convs: usize,
    /// Side of the random square HR crop drawn per image and epoch; `None`
    /// trains on whole images, which must then share one size.
    pub crop: Option<usize>,
}

impl TrainPlan {
    pub fn new(model: PlanModel, scale: ScaleFactor) -> Self {
        let base = TrainPlan {
            model,
            scale,
            pretrain_epochs: 0,
            adversarial_epochs: 0,
            total_epochs: 0,
            batch: 16,
            lr: 1e-4,
            beta1: 0.9,
            mse_weight: 1.0,
            vgg_weight: 1.0,
            adv_weight: ADV_WEIGHT,
            seed: 0,
            width: 32,
            blocks: 4,
            disc_width: 16,
            disc_convs: 4,
            crop: Some(224),
        };
        match model {
            PlanModel::Srcnn => TrainPlan { total_epochs: 500, batch: 128, width: 64, blocks: 0, ..base },
            PlanModel::Srresnet => TrainPlan { total_epochs: 50, ..base },
            PlanModel::Srgan => TrainPlan { pretrain_epochs: 20, adversarial_epochs: 50, ..base },
        }
    }

    pub fn epochs(&self) -> usize {
        match self.model {
            PlanModel::Srgan => self.pretrain_epochs + self.adversarial_epochs,
            _ => self.total_epochs,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidPlan(m));
        if self.scale == ScaleFactor::X2 {
            return bad("scale must be 4 or 8".into());
        }
        if self.batch == 0 {
            return bad("batch must be at least 1".into());
        }
        for (name, v) in [("mse_weight", self.mse_weight), ("vgg_weight", self.vgg_weight), ("adv_weight", self.adv_weight)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be a non-negative number, got {v}"));
            }
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(0.0..1.0).contains(&self.beta1) {
            return bad(format!("invalid optimizer settings lr={} beta1={}", self.lr, self.beta1));
        }
        if let Some(c) = self.crop {
            if c < self.scale.as_usize() || c % self.scale.as_usize() != 0 {
                return bad(format!("crop {c} must be a positive multiple of the scale"));
            }
        }
        Ok(())
    }

    fn arch(&self) -> ArchSpec {
        match self.model {
            PlanModel::Srcnn => ArchSpec { width: self.width, ..ArchSpec::srcnn(self.scale) },
            _ => ArchSpec { width: self.width, blocks: self.blocks, ..ArchSpec::generator(self.scale) },
        }
    }
}

/// Loss values of one optimizer step. Terms a step does not evaluate are 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_mse: f64,
    pub l_feat: f64,
    pub l_content: f64,
    pub l_gen: f64,
    pub l_perceptual: f64,
    pub l_disc: f64,
}

pub const IDENTITY_TOLERANCE: f64 = 1e-9;

impl LossReport {
    /// Checks the content and perceptual identities under `weights`.
    pub fn check(&self, mse_weight: f64, vgg_weight: f64, adv_weight: f64) -> Result<(), String> {
        let content = mse_weight * self.l_mse + vgg_weight * self.l_feat;
        if (self.l_content - content).abs() > IDENTITY_TOLERANCE {
            return Err(format!("l_content {} vs {}", self.l_content, content));
        }
        let perceptual = self.l_content + adv_weight * self.l_gen;
        if (self.l_perceptual - perceptual).abs() > IDENTITY_TOLERANCE {
            return Err(format!("l_perceptual {} vs {}", self.l_perceptual, perceptual));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Train,
    Pretrain,
    Adversarial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Update {
    #[serde(rename = "G")]
    Generator,
    #[serde(rename = "D")]
    Discriminator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub phase: Phase,
    pub update: Update,
    #[serde(flatten)]
    pub report: LossReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: usize,
    pub phase: Phase,
    pub g_steps: usize,
    pub d_steps: usize,
    /// Means over the epoch's generator steps (`l_disc` over its
    /// discriminator steps).
    pub mean: LossReport,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Network,
    pub discriminator: Option<Network>,
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochSummary>,
}

#[derive(Serialize)]
struct CsvRow {
    step: usize,
    epoch: usize,
    phase: Phase,
    update: Update,
    l_mse: f64,
    l_feat: f64,
    l_content: f64,
    l_gen: f64,
    l_perceptual: f64,
    l_disc: f64,
}

/// One row per optimizer step with columns step, epoch, phase, update,
/// then the six loss values.
pub fn write_loss_csv<W: Write>(steps: &[StepRecord], w: W) -> Result<(), ModelError> {
    let mut wr = csv::Writer::from_writer(w);
    for s in steps {
        let r = s.report;
        wr.serialize(CsvRow {
            step: s.step,
            epoch: s.epoch,
            phase: s.phase,
            update: s.update,
            l_mse: r.l_mse,
            l_feat: r.l_feat,
            l_content: r.l_content,
            l_gen: r.l_gen,
            l_perceptual: r.l_perceptual,
            l_disc: r.l_disc,
        })?;
    }
    wr.flush()?;
    Ok(())
}

/// Generator-side losses for one batch and their parameter gradients.
/// Feature loss is evaluated whenever `phi` is given; the adversarial term
/// whenever `disc` is given.
#[allow(clippy::too_many_arguments)]
pub fn generator_objective(
    gen: &Network,
    disc: Option<&Network>,
    phi: Option<&FeatureExtractor>,
    input: &Tensor,
    hr: &Tensor,
    mse_weight: f64,
    vgg_weight: f64,
    adv_weight: f64,
) -> Result<(LossReport, Gradients, crate::nn::Tape), ModelError> {
    let tape = gen.forward(input, Mode::Train)?;
    let sr = tape.output();
    let (l_mse, mut grad) = mse_loss_grad(sr, hr)?;
    grad.scale(mse_weight);
    let mut l_feat = 0.0;
    if let Some(phi) = phi {
        let (l, mut g) = feature_loss_grad(sr, hr, phi)?;
        l_feat = l;
        g.scale(vgg_weight);
        grad.add_assign(&g);
    }
    let mut l_gen = 0.0;
    if let Some(d) = disc {
        let d_tape = d.forward(sr, Mode::Train)?;
        let (l, gd) = adversarial_gen_loss_grad(d_tape.output().data())?;
        l_gen = l;
        let mut gd = Tensor::new(d_tape.output().shape().to_vec(), gd)?;
        gd.scale(adv_weight);
        grad.add_assign(&d.backward_input(&d_tape, &gd)?);
    }
    let l_content = content_loss(l_mse, l_feat, mse_weight, vgg_weight)?;
    let l_perceptual = perceptual_loss_weighted(l_content, l_gen, adv_weight);
    let (grads, _) = gen.backward(&tape, &grad)?;
    let report = LossReport { l_mse, l_feat, l_content, l_gen, l_perceptual, l_disc: 0.0 };
    Ok((report, grads, tape))
}

struct Pair {
    input: Image,
    hr: Image,
}

fn make_pair(hr: &Image, plan: &TrainPlan) -> Result<Pair, ModelError> {
    let (hr, lr) = hr.degrade(plan.scale)?;
    let input = match plan.model {
        PlanModel::Srcnn => lr.upscale(plan.scale),
        _ => lr,
    };
    Ok(Pair { input, hr })
}

fn tensors(pairs: &[&Pair]) -> Result<(Tensor, Tensor), ModelError> {
    let inputs: Vec<&Image> = pairs.iter().map(|p| &p.input).collect();
    let hrs: Vec<&Image> = pairs.iter().map(|p| &p.hr).collect();
    Ok((batch_tensor(&inputs)?, batch_tensor(&hrs)?))
}

fn probabilities(t: &Tensor) -> Vec<f64> {
    t.data().to_vec()
}

/// Trains per `plan`. LR inputs are bicubic degradations of the HR crops,
/// all in Signed11. Every step's loss identities are verified.
pub fn train(plan: &TrainPlan, corpus: &[Image], phi: Option<&FeatureExtractor>) -> Result<TrainOutcome, ModelError> {
    plan.validate()?;
    if corpus.is_empty() {
        return Err(ModelError::EmptyCorpus);
    }
    let phi = match plan.model {
        PlanModel::Srcnn => None,
        _ => Some(phi.ok_or(ModelError::MissingExtractor)?),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let g_seed = rng.next_u64();
    let d_seed = rng.next_u64();
    let mut gen = build_model(&plan.arch(), g_seed)?;

    let fitted: Vec<Image> = match plan.crop {
        Some(c) => corpus.iter().map(|img| img.fit_for_crop(c)).collect(),
        None => corpus.iter().map(|img| img.center_crop_to_multiple(plan.scale.as_usize())).collect::<Result<_, _>>()?,
    };
    let fixed: Option<Vec<Pair>> = match plan.crop {
        None => Some(fitted.iter().map(|img| make_pair(img, plan)).collect::<Result<_, _>>()?),
        Some(_) => None,
    };
    let hr_side = match (plan.crop, &fixed) {
        (Some(c), _) => c,
        (None, Some(pairs)) => {
            let (w, h) = pairs[0].hr.dims();
            if w != h {
                return Err(ModelError::Shape(format!("srgan needs square training images, got {w}x{h}")));
            }
            w
        }
        _ => unreachable!(),
    };
    let mut disc = match plan.model {
        PlanModel::Srgan => Some(build_model(
            &ArchSpec { width: plan.disc_width, blocks: plan.disc_convs, ..ArchSpec::discriminator(plan.scale, hr_side) },
            d_seed,
        )?),
        _ => None,
    };
    let mut adam_g = AdamState::new(&gen, plan.lr, plan.beta1);
    let mut adam_d = disc.as_ref().map(|d| AdamState::new(d, plan.lr, plan.beta1));

    let (wm, wv, wa) = (plan.mse_weight, plan.vgg_weight, plan.adv_weight);
    let mut steps: Vec<StepRecord> = Vec::new();
    let mut epochs = Vec::with_capacity(plan.epochs());
    for epoch in 0..plan.epochs() {
        let phase = match plan.model {
            PlanModel::Srgan if epoch < plan.pretrain_epochs => Phase::Pretrain,
            PlanModel::Srgan => Phase::Adversarial,
            _ => Phase::Train,
        };
        let mut order: Vec<usize> = (0..corpus.len()).collect();
        order.shuffle(&mut rng);
        let drawn: Vec<Pair>;
        let pairs: Vec<&Pair> = match (&fixed, plan.crop) {
            (Some(f), _) => order.iter().map(|&i| &f[i]).collect(),
            (None, Some(c)) => {
                drawn = order
                    .iter()
                    .map(|&i| fitted[i].random_crop_with(c, &mut rng).map_err(ModelError::from).and_then(|hr| make_pair(&hr, plan)))
                    .collect::<Result<_, _>>()?;
                drawn.iter().collect()
            }
            (None, None) => unreachable!(),
        };
        let first_step = steps.len();
        for chunk in pairs.chunks(plan.batch) {
            let (input, hr) = tensors(chunk)?;
            let adversarial = phase == Phase::Adversarial;
            if adversarial {
                let d = disc.as_mut().expect("srgan has a discriminator");
                let sr = gen.forward(&input, Mode::Train)?.into_output();
                let real = d.forward(&hr, Mode::Train)?;
                let fake = d.forward(&sr, Mode::Train)?;
                let (l_disc, gr, gf) = discriminator_loss_grad(real.output().data(), fake.output().data())?;
                let (mut grads, _) = d.backward(&real, &Tensor::new(real.output().shape().to_vec(), gr)?)?;
                let (gfake, _) = d.backward(&fake, &Tensor::new(fake.output().shape().to_vec(), gf)?)?;
                grads.add_assign(&gfake);
                adam_d.as_mut().expect("paired with disc").step_network(d, &grads)?;
                let report = LossReport { l_disc, ..LossReport::default() };
                steps.push(StepRecord { step: steps.len(), epoch, phase, update: Update::Discriminator, report });
            }
            let d_ref = if adversarial { disc.as_ref() } else { None };
            let (mut report, grads, tape) = generator_objective(&gen, d_ref, phi, &input, &hr, wm, wv, wa)?;
            if let Some(d) = d_ref {
                let real = d.infer(&hr)?;
                let fake = d.infer(tape.output())?;
                report.l_disc = discriminator_loss(&probabilities(&real), &probabilities(&fake))?;
            }
            gen.update_running_stats(&tape);
            adam_g.step_network(&mut gen, &grads)?;
            steps.push(StepRecord { step: steps.len(), epoch, phase, update: Update::Generator, report });
        }
        for s in &steps[first_step..] {
            s.report.check(wm, wv, wa).map_err(|detail| ModelError::Identity { step: s.step, detail })?;
        }
        epochs.push(summarize(epoch, phase, &steps[first_step..]));
    }
    gen.meta.insert("trained_with".into(), plan.model.as_str().into());
    Ok(TrainOutcome { model: gen, discriminator: disc, steps, epochs })
}

fn summarize(epoch: usize, phase: Phase, steps: &[StepRecord]) -> EpochSummary {
    let g: Vec<&LossReport> = steps.iter().filter(|s| s.update == Update::Generator).map(|s| &s.report).collect();
    let d: Vec<&LossReport> = steps.iter().filter(|s| s.update == Update::Discriminator).map(|s| &s.report).collect();
    let mean = |xs: &[&LossReport], f: fn(&LossReport) -> f64| {
        if xs.is_empty() {
            0.0
        } else {
            xs.iter().map(|r| f(r)).sum::<f64>() / xs.len() as f64
        }
    };
    EpochSummary {
        epoch,
        phase,
        g_steps: g.len(),
        d_steps: d.len(),
        mean: LossReport {
            l_mse: mean(&g, |r| r.l_mse),
            l_feat: mean(&g, |r| r.l_feat),
            l_content: mean(&g, |r| r.l_content),
            l_gen: mean(&g, |r| r.l_gen),
            l_perceptual: mean(&g, |r| r.l_perceptual),
            l_disc: mean(&d, |r| r.l_disc),
        },
    }
}
