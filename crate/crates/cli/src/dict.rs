use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sr_core::sparse::{sample_patch_pairs, train_dictionaries_traced, SparseParams};

use crate::{load_dir, required, write_file, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, clap::Args)]
pub struct DictTrainArgs {
    /// Directory of HR training images
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hr_dir: Option<PathBuf>,
    /// Dictionary file to write
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Patch pairs sampled per image [default: 1000]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub patches_per_image: Option<usize>,
    /// Sparsity weight [default: 0.2]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Patch side [default: 5]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub patch_size: Option<usize>,
    /// Dictionary atoms [default: 512]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub atoms: Option<usize>,
    /// Alternating coding/update iterations [default: 10]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iters: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

pub const DEFAULT_DICT_ITERS: usize = 10;
pub const DEFAULT_PATCHES_PER_IMAGE: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DictTrainSummary {
    pub dictionary: PathBuf,
    pub samples: usize,
    pub atoms: usize,
    /// Training objective at initialization and after each iteration.
    pub objective: Vec<f64>,
}

impl DictTrainArgs {
    pub fn params(&self) -> SparseParams {
        let d = SparseParams::default();
        SparseParams {
            lambda: self.lambda.unwrap_or(d.lambda),
            patch_size: self.patch_size.unwrap_or(d.patch_size),
            atoms: self.atoms.unwrap_or(d.atoms),
            ..d
        }
    }
}

pub fn dict_train(args: &DictTrainArgs) -> Result<DictTrainSummary> {
    let hr_dir = required(&args.hr_dir, "hr-dir")?;
    let out = required(&args.out, "out")?;
    let params = args.params();
    params.validate()?;
    let seed = args.seed.unwrap_or(0);
    let images: Vec<_> = load_dir(hr_dir)?.into_iter().map(|(_, img)| img).collect();
    let data = sample_patch_pairs(&images, args.patches_per_image.unwrap_or(DEFAULT_PATCHES_PER_IMAGE), &params, seed)?;
    tracing::info!("training {} atoms on {} patch pairs", params.atoms, data.len());
    let trained = train_dictionaries_traced(&data, &params, args.iters.unwrap_or(DEFAULT_DICT_ITERS), seed)?;
    for (i, v) in trained.objective.iter().enumerate() {
        tracing::info!("iteration {i}: objective {v:.6}");
    }
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        crate::create_dir(dir)?;
    }
    write_file(out, &trained.dict.to_bytes())?;
    Ok(DictTrainSummary { dictionary: out.clone(), samples: data.len(), atoms: trained.dict.atoms(), objective: trained.objective })
}

#[cfg(test)]
mod tests {
    use super::*;
    use sr_core::image::synth::textured;
    use sr_core::sparse::DictionaryPair;

    #[test]
    fn trains_and_saves() {
        let hr = tempfile::tempdir().unwrap();
        for i in 0..2 {
            crate::save_image(&hr.path().join(format!("{i}.png")), &textured(24, 24, i)).unwrap();
        }
        let out = tempfile::tempdir().unwrap();
        let args = DictTrainArgs {
            hr_dir: Some(hr.path().into()),
            out: Some(out.path().join("d.srdict")),
            patches_per_image: Some(40),
            atoms: Some(16),
            iters: Some(2),
            ..Default::default()
        };
        let s = dict_train(&args).unwrap();
        assert_eq!((s.samples, s.atoms, s.objective.len()), (80, 16, 3));
        let d = DictionaryPair::load(&s.dictionary).unwrap();
        assert_eq!((d.atoms(), d.patch_size()), (16, 5));
        assert!(dict_train(&DictTrainArgs { atoms: Some(0), ..args }).is_err());
    }
}
