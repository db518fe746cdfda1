use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sr_core::models::{self, FeatureExtractor, PlanModel, TrainPlan, Update};
use sr_core::nn::checkpoint;

use crate::{io_err, load_dir, required, scale_factor, write_file, HarnessError, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, clap::Args)]
pub struct TrainArgs {
    /// Directory of HR training images
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hr_dir: Option<PathBuf>,
    /// Checkpoint to write (the generator for srgan)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// srcnn, srresnet or srgan
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    /// 4 or 8 [default: 4]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale: Option<u32>,
    /// Training epochs for srcnn and srresnet
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    /// Generator-only epochs before adversarial training (srgan)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pretrain_epochs: Option<usize>,
    /// Alternating discriminator/generator epochs (srgan)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adversarial_epochs: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta1: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mse_weight: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vgg_weight: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adv_weight: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// First-layer channels
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    /// Residual blocks of the generator
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blocks: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub disc_width: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub disc_convs: Option<usize>,
    /// Random square HR crop side; 0 trains on whole images [default: 224]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub crop: Option<usize>,
    /// Loss CSV [default: checkpoint path with .losses.csv]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub losses: Option<PathBuf>,
    /// Also write the discriminator checkpoint (srgan)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub disc_out: Option<PathBuf>,
    /// Seed of the surrogate feature extractor [default: 0]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extractor_seed: Option<u64>,
}

impl TrainArgs {
    /// The training plan: model defaults with every given option applied.
    pub fn plan(&self) -> Result<TrainPlan> {
        let name = required(&self.model, "model")?;
        let model = PlanModel::parse(name)
            .ok_or_else(|| HarnessError::Invalid(format!("unknown model {name:?}; expected srcnn, srresnet or srgan")))?;
        let mut p = TrainPlan::new(model, scale_factor(self.scale.unwrap_or(4))?);
        macro_rules! set {
            ($($field:ident => $target:ident),*) => { $( if let Some(v) = self.$field { p.$target = v; } )* };
        }
        set!(epochs => total_epochs, pretrain_epochs => pretrain_epochs, adversarial_epochs => adversarial_epochs,
            batch => batch, lr => lr, beta1 => beta1, mse_weight => mse_weight, vgg_weight => vgg_weight,
            adv_weight => adv_weight, seed => seed, width => width, blocks => blocks, disc_width => disc_width,
            disc_convs => disc_convs);
        if let Some(c) = self.crop {
            p.crop = (c > 0).then_some(c);
        }
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub losses: PathBuf,
    pub g_steps: usize,
    pub d_steps: usize,
    /// Mean primary loss of the last epoch: mse for srcnn, content for
    /// srresnet, perceptual for srgan.
    pub final_loss: Option<f64>,
}

pub fn train(args: &TrainArgs) -> Result<TrainSummary> {
    let plan = args.plan()?;
    let hr_dir = required(&args.hr_dir, "hr-dir")?;
    let out = required(&args.out, "out")?;
    let corpus: Vec<_> = load_dir(hr_dir)?.into_iter().map(|(_, img)| img).collect();
    let phi = FeatureExtractor::surrogate(args.extractor_seed.unwrap_or(0));
    tracing::info!("training {} on {} images for {} epochs", plan.model.as_str(), corpus.len(), plan.epochs());
    let outcome = models::train(&plan, &corpus, Some(&phi))?;
    for e in &outcome.epochs {
        tracing::info!(
            "epoch {} {:?}: mse {:.6} content {:.6} disc {:.6}",
            e.epoch,
            e.phase,
            e.mean.l_mse,
            e.mean.l_content,
            e.mean.l_disc
        );
    }

    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        crate::create_dir(dir)?;
    }
    write_file(out, &checkpoint::to_bytes(&outcome.model))?;
    if let (Some(path), Some(d)) = (&args.disc_out, &outcome.discriminator) {
        write_file(path, &checkpoint::to_bytes(d))?;
    }
    let losses = args.losses.clone().unwrap_or_else(|| out.with_extension("losses.csv"));
    let file = std::fs::File::create(&losses).map_err(io_err(&losses))?;
    models::write_loss_csv(&outcome.steps, std::io::BufWriter::new(file))?;

    let count = |u: Update| outcome.steps.iter().filter(|s| s.update == u).count();
    let final_loss = outcome.epochs.last().map(|e| match plan.model {
        PlanModel::Srcnn => e.mean.l_mse,
        PlanModel::Srresnet => e.mean.l_content,
        PlanModel::Srgan => e.mean.l_perceptual,
    });
    Ok(TrainSummary {
        checkpoint: out.clone(),
        losses,
        g_steps: count(Update::Generator),
        d_steps: count(Update::Discriminator),
        final_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use sr_core::image::synth::textured;

    #[test]
    fn plan_overrides() {
        let a = TrainArgs {
            model: Some("srgan".into()),
            scale: Some(8),
            pretrain_epochs: Some(3),
            crop: Some(0),
            lr: Some(1e-3),
            ..Default::default()
        };
        let p = a.plan().unwrap();
        assert_eq!((p.pretrain_epochs, p.adversarial_epochs, p.crop, p.lr), (3, 50, None, 1e-3));
        assert_eq!(p.scale.get(), 8);
        assert!(TrainArgs { model: Some("vdsr".into()), ..Default::default() }.plan().is_err());
        assert!(TrainArgs { model: Some("srcnn".into()), scale: Some(2), ..Default::default() }.plan().is_err());
        assert!(matches!(TrainArgs::default().plan(), Err(HarnessError::MissingOption("model"))));
    }

    #[test]
    fn writes_checkpoint_and_losses() {
        let hr = tempfile::tempdir().unwrap();
        for i in 0..3 {
            crate::save_image(&hr.path().join(format!("{i}.png")), &textured(16, 16, i)).unwrap();
        }
        let out = tempfile::tempdir().unwrap();
        let args = TrainArgs {
            hr_dir: Some(hr.path().into()),
            out: Some(out.path().join("m/gan.ckpt")),
            disc_out: Some(out.path().join("m/disc.ckpt")),
            model: Some("srgan".into()),
            pretrain_epochs: Some(1),
            adversarial_epochs: Some(1),
            batch: Some(2),
            width: Some(4),
            blocks: Some(1),
            disc_width: Some(4),
            disc_convs: Some(2),
            crop: Some(8),
            ..Default::default()
        };
        let s = train(&args).unwrap();
        assert_eq!((s.g_steps, s.d_steps), (4, 2));
        assert_eq!(s.losses, out.path().join("m/gan.losses.csv"));
        let net = checkpoint::load(&s.checkpoint).unwrap();
        assert_eq!(models::model_kind(&net), Some(models::ModelKind::SrresnetGenerator));
        let disc = checkpoint::load(out.path().join("m/disc.ckpt")).unwrap();
        assert_eq!(models::model_kind(&disc), Some(models::ModelKind::Discriminator));
        let csv = std::fs::read_to_string(&s.losses).unwrap();
        assert_eq!(csv.lines().count(), 7);
    }
}
