use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sr_core::models::{self, ModelKind};
use sr_core::nn::{checkpoint, Network};
use sr_core::sparse::{super_resolve_sparse, DictionaryPair, SparseParams};
use sr_core::{Image, ScaleFactor};

use crate::{create_dir, load_dir, required, save_image, scale_factor, HarnessError, Method, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, clap::Args)]
pub struct RunArgs {
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    /// Checkpoint for srcnn, srresnet and srgan
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    /// Dictionary for sparse
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dict: Option<PathBuf>,
    /// Directory of LR inputs
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr_dir: Option<PathBuf>,
    /// Where SR outputs go, one PNG per input with the same stem
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    /// Upscaling factor; learned methods take it from the checkpoint
    /// [default: 4]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale: Option<u32>,
    /// Sparse coding weight [default: 0.2]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Backprojection iterations per 2x stage [default: 20]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub backprojection_iters: Option<usize>,
    /// Patch stride for sparse reconstruction [default: 1]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub patch_stride: Option<usize>,
}

enum Engine {
    Bicubic,
    Sparse(DictionaryPair, SparseParams),
    Net(Network, ModelKind),
}

fn artifact<'a>(path: &'a Option<PathBuf>, flag: &'static str, what: &'static str) -> Result<&'a Path> {
    let path = required(path, flag)?;
    if !path.is_file() {
        return Err(HarnessError::MissingFile { what, path: path.clone() });
    }
    Ok(path)
}

impl RunArgs {
    fn engine(&self, method: Method) -> Result<(Engine, ScaleFactor)> {
        let requested = self.scale.map(scale_factor).transpose()?;
        match method {
            Method::Bicubic => Ok((Engine::Bicubic, requested.unwrap_or(ScaleFactor::X4))),
            Method::Sparse => {
                let dict = DictionaryPair::load(artifact(&self.dict, "dict", "dictionary")?)?;
                let d = SparseParams::default();
                let params = SparseParams {
                    lambda: self.lambda.unwrap_or(d.lambda),
                    max_backprojection_iters: self.backprojection_iters.unwrap_or(d.max_backprojection_iters),
                    patch_stride: self.patch_stride.unwrap_or(d.patch_stride),
                    patch_size: dict.patch_size(),
                    atoms: dict.atoms(),
                };
                params.validate()?;
                Ok((Engine::Sparse(dict, params), requested.unwrap_or(ScaleFactor::X4)))
            }
            Method::Srcnn | Method::Srresnet | Method::Srgan => {
                let path = artifact(&self.model, "model", "checkpoint")?;
                let net = checkpoint::load(path)?;
                let want = if method == Method::Srcnn { ModelKind::Srcnn } else { ModelKind::SrresnetGenerator };
                let kind = models::model_kind(&net);
                if kind != Some(want) {
                    return Err(HarnessError::Invalid(format!(
                        "{} holds a {} network, method {method} needs {want}",
                        path.display(),
                        kind.map_or("unknown", |k| k.as_str())
                    )));
                }
                let scale = models::model_scale(&net)
                    .ok_or_else(|| HarnessError::Invalid(format!("{} does not record its scale", path.display())))?;
                if let Some(r) = requested.filter(|&r| r != scale) {
                    return Err(HarnessError::Invalid(format!("{} is a {scale}x model, {r}x requested", path.display())));
                }
                Ok((Engine::Net(net, want), scale))
            }
        }
    }
}

fn apply(engine: &Engine, lr: &Image, scale: ScaleFactor) -> Result<Image> {
    Ok(match engine {
        Engine::Bicubic => lr.upscale(scale),
        Engine::Sparse(dict, params) => super_resolve_sparse(lr, dict, params, scale)?,
        Engine::Net(net, kind) => models::super_resolve(net, *kind, lr, scale)?,
    })
}

/// Super-resolves every image in `lr_dir`; returns the written paths.
pub fn run(args: &RunArgs) -> Result<Vec<PathBuf>> {
    let method = *required(&args.method, "method")?;
    let lr_dir = required(&args.lr_dir, "lr-dir")?;
    let out_dir = required(&args.out_dir, "out-dir")?;
    let (engine, scale) = args.engine(method)?;
    let inputs = load_dir(lr_dir)?;
    create_dir(out_dir)?;
    let mut written = Vec::with_capacity(inputs.len());
    for (name, lr) in inputs {
        let sr = apply(&engine, &lr, scale)?;
        debug_assert_eq!(sr.dims(), (lr.width() * scale.as_usize(), lr.height() * scale.as_usize()));
        let path = out_dir.join(format!("{name}.png"));
        save_image(&path, &sr)?;
        written.push(path);
    }
    tracing::info!("{method}: wrote {} images to {}", written.len(), out_dir.display());
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use sr_core::image::synth::textured;
    use sr_core::models::{build_model, ArchSpec};

    fn lr_dir(w: usize, h: usize) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        crate::save_image(&dir.path().join("a.png"), &textured(w, h, 1)).unwrap();
        dir
    }

    fn args(method: Method, lr: &Path, out: &Path) -> RunArgs {
        RunArgs { method: Some(method), lr_dir: Some(lr.into()), out_dir: Some(out.into()), ..Default::default() }
    }

    #[test]
    fn bicubic_needs_no_artifact() {
        let lr = lr_dir(56, 56);
        let out = tempfile::tempdir().unwrap();
        let written = run(&args(Method::Bicubic, lr.path(), out.path())).unwrap();
        assert_eq!(written, vec![out.path().join("a.png")]);
        assert_eq!(sr_core::image::load(&written[0]).unwrap().dims(), (224, 224));
    }

    #[test]
    fn missing_checkpoint_is_named() {
        let lr = lr_dir(8, 8);
        let out = tempfile::tempdir().unwrap();
        let missing = out.path().join("nope.ckpt");
        let a = RunArgs { model: Some(missing.clone()), ..args(Method::Srgan, lr.path(), out.path()) };
        let err = run(&a).unwrap_err();
        assert!(err.to_string().contains("nope.ckpt"), "{err}");
        assert!(matches!(run(&args(Method::Srgan, lr.path(), out.path())), Err(HarnessError::MissingOption("model"))));
        assert!(matches!(run(&args(Method::Sparse, lr.path(), out.path())), Err(HarnessError::MissingOption("dict"))));
    }

    #[test]
    fn model_kind_and_scale_are_checked() {
        let lr = lr_dir(6, 5);
        let out = tempfile::tempdir().unwrap();
        let ckpt = out.path().join("srcnn8.ckpt");
        let net = build_model(&ArchSpec { width: 4, ..ArchSpec::srcnn(ScaleFactor::X8) }, 1).unwrap();
        checkpoint::save(&net, &ckpt).unwrap();
        let sr_out = out.path().join("sr");
        let ok = RunArgs { model: Some(ckpt.clone()), ..args(Method::Srcnn, lr.path(), &sr_out) };
        let written = run(&ok).unwrap();
        assert_eq!(sr_core::image::load(&written[0]).unwrap().dims(), (48, 40));
        assert!(run(&RunArgs { scale: Some(4), ..ok.clone() }).is_err());
        assert!(run(&RunArgs { method: Some(Method::Srresnet), ..ok }).is_err());
    }
}
