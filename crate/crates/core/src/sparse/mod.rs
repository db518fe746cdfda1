//! Super resolution by sparse coding over coupled LR-feature / HR-patch
//! dictionaries, followed by backprojection onto the LR observation.

mod dictionary;
mod features;
mod lasso;
mod reconstruct;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::ImageError;

pub use dictionary::{
    sample_patch_pairs, train_dictionaries, train_dictionaries_traced, DictionaryPair, DictionaryTraining, PatchDataset, STAGE_SCALE,
};
pub use features::{FeatureMaps, FEATURE_MAPS};
pub use lasso::{kkt_residual, lasso_objective, solve_gram, sparse_code, Coder, KKT_TOLERANCE, MAX_SWEEPS};
pub use reconstruct::{
    backproject, backproject_traced, blend_patches, patch_offsets, sparse_stage, super_resolve_sparse, Backprojection, PatchPrediction,
};

#[derive(Debug, Error)]
pub enum SparseError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid sparse parameters: {0}")]
    InvalidParams(String),
    #[error("image {index} is {width}x{height}, needs at least {min_side} per side")]
    TooSmall { index: usize, width: usize, height: usize, min_side: usize },
    #[error("patch dataset is empty")]
    EmptyDataset,
    #[error("{atoms} atoms requested but only {samples} usable samples")]
    TooManyAtoms { atoms: usize, samples: usize },
    #[error("sr is {sr:?} but lr {lr:?} at scale {scale}")]
    Geometry { sr: (usize, usize), lr: (usize, usize), scale: u32 },
    #[error("dictionary file: {0}")]
    Format(String),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SparseParams {
    pub lambda: f64,
    pub max_backprojection_iters: usize,
    pub patch_size: usize,
    pub patch_stride: usize,
    pub atoms: usize,
}

impl Default for SparseParams {
    fn default() -> Self {
        SparseParams { lambda: 0.2, max_backprojection_iters: 20, patch_size: 5, patch_stride: 1, atoms: 512 }
    }
}

impl SparseParams {
    pub fn validate(&self) -> Result<(), SparseError> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(SparseError::InvalidParams(format!("lambda must be positive, got {}", self.lambda)));
        }
        if self.patch_size == 0 {
            return Err(SparseError::InvalidParams("patch_size must be positive".into()));
        }
        if !(1..=self.patch_size).contains(&self.patch_stride) {
            return Err(SparseError::InvalidParams(format!("patch_stride {} outside 1..={}", self.patch_stride, self.patch_size)));
        }
        if self.atoms == 0 {
            return Err(SparseError::InvalidParams("atoms must be positive".into()));
        }
        Ok(())
    }
}
