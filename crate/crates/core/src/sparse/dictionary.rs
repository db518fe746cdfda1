//! Patch sampling, coupled dictionary training, and the `SRDICT1` format.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::features::{plane_patch, FeatureMaps, FEATURE_MAPS};
use super::lasso::Coder;
use super::{SparseError, SparseParams};
use crate::image::{Image, ScaleFactor};

/// Scale of one coupled-dictionary stage.
pub const STAGE_SCALE: ScaleFactor = ScaleFactor::X2;

/// Features below this norm carry no structure and are not coded.
pub(crate) const FLAT_FEATURE_NORM: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct PatchDataset {
    pub hr_patches: Vec<Vec<f64>>,
    pub lr_features: Vec<Vec<f64>>,
    pub patch_size: usize,
    pub scale: ScaleFactor,
}

impl PatchDataset {
    pub fn len(&self) -> usize {
        self.hr_patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hr_patches.is_empty()
    }

    pub fn extend(&mut self, other: PatchDataset) {
        self.hr_patches.extend(other.hr_patches);
        self.lr_features.extend(other.lr_features);
    }
}

/// Draws `per_image` random patch locations per image. HR patches are
/// mean-removed crops of the (stage-cropped) HR image; LR features come from
/// the bicubic rendition of its 2× degradation at the same location.
pub fn sample_patch_pairs(hr_images: &[Image], per_image: usize, params: &SparseParams, seed: u64) -> Result<PatchDataset, SparseError> {
    params.validate()?;
    if per_image == 0 {
        return Err(SparseError::InvalidParams("per_image must be at least 1".into()));
    }
    let p = params.patch_size;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = PatchDataset { hr_patches: Vec::new(), lr_features: Vec::new(), patch_size: p, scale: STAGE_SCALE };
    for (i, img) in hr_images.iter().enumerate() {
        let min_side = p * STAGE_SCALE.as_usize();
        if img.width() < min_side || img.height() < min_side {
            return Err(SparseError::TooSmall { index: i, width: img.width(), height: img.height(), min_side });
        }
        let (hr, lr) = img.degrade(STAGE_SCALE).map_err(SparseError::Image)?;
        let up = lr.upscale(STAGE_SCALE);
        let maps = FeatureMaps::new(&up);
        for _ in 0..per_image {
            let x = rng.random_range(0..=hr.width() - p);
            let y = rng.random_range(0..=hr.height() - p);
            let mut patch = plane_patch(hr.pixels(), hr.width(), x, y, p);
            let mean = patch.iter().sum::<f64>() / patch.len() as f64;
            patch.iter_mut().for_each(|v| *v -= mean);
            data.hr_patches.push(patch);
            data.lr_features.push(maps.patch(x, y, p));
        }
    }
    Ok(data)
}

/// Coupled dictionaries sharing one code: `d_lr` columns have unit norm.
#[derive(Debug, Clone, PartialEq)]
pub struct DictionaryPair {
    pub d_lr: DMatrix<f64>,
    pub d_hr: DMatrix<f64>,
}

const MAGIC: &[u8; 7] = b"SRDICT1";

impl DictionaryPair {
    pub fn new(d_lr: DMatrix<f64>, d_hr: DMatrix<f64>) -> Result<Self, SparseError> {
        if d_lr.ncols() != d_hr.ncols() || d_lr.ncols() == 0 {
            return Err(SparseError::Format(format!("atom counts differ: {} vs {}", d_lr.ncols(), d_hr.ncols())));
        }
        let p = patch_side(d_hr.nrows()).ok_or_else(|| SparseError::Format(format!("{} is not a square patch", d_hr.nrows())))?;
        if d_lr.nrows() != FEATURE_MAPS * p * p {
            return Err(SparseError::Format(format!("feature dimension {} does not match {p}x{p} patches", d_lr.nrows())));
        }
        Ok(DictionaryPair { d_lr, d_hr })
    }

    pub fn atoms(&self) -> usize {
        self.d_lr.ncols()
    }

    pub fn patch_size(&self) -> usize {
        patch_side(self.d_hr.nrows()).expect("checked at construction")
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), SparseError> {
        w.write_all(MAGIC)?;
        for d in [self.d_lr.nrows(), self.d_hr.nrows(), self.atoms()] {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for v in self.d_lr.iter().chain(self.d_hr.iter()) {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, SparseError> {
        let mut magic = [0u8; 7];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(SparseError::Format("bad magic".into()));
        }
        let mut dims = [0usize; 3];
        for d in &mut dims {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            *d = u32::from_le_bytes(b) as usize;
        }
        let [feat, patch, atoms] = dims;
        let mut read_matrix = |rows: usize| -> Result<DMatrix<f64>, SparseError> {
            let mut vals = vec![0.0; rows * atoms];
            let mut b = [0u8; 8];
            for v in &mut vals {
                r.read_exact(&mut b)?;
                *v = f64::from_le_bytes(b);
            }
            Ok(DMatrix::from_vec(rows, atoms, vals))
        };
        let d_lr = read_matrix(feat)?;
        let d_hr = read_matrix(patch)?;
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(SparseError::Format("trailing bytes".into()));
        }
        DictionaryPair::new(d_lr, d_hr)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SparseError> {
        Ok(std::fs::write(path, self.to_bytes())?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SparseError> {
        let bytes = std::fs::read(path)?;
        DictionaryPair::read_from(&bytes[..])
    }
}

fn patch_side(n: usize) -> Option<usize> {
    let p = (n as f64).sqrt().round() as usize;
    (p >= 1 && p * p == n).then_some(p)
}

/// Dictionaries plus the joint objective recorded after each coding step.
#[derive(Debug, Clone)]
pub struct DictionaryTraining {
    pub dict: DictionaryPair,
    pub objective: Vec<f64>,
    /// Mean squared reconstruction residual of the joint samples at the end.
    pub final_residual: f64,
    /// The unsplit dictionary over balanced joint samples.
    pub joint: DMatrix<f64>,
}

type Code = Vec<(usize, f64)>;

fn to_sparse(alpha: &[f64]) -> Code {
    alpha.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(k, &v)| (k, v)).collect()
}

/// Joint samples: both blocks divided by the feature norm, each block scaled
/// by 1/√dim, then the concatenation normalized to unit length.
fn joint_samples(data: &PatchDataset) -> Result<DMatrix<f64>, SparseError> {
    let Some(first) = data.lr_features.first() else {
        return Err(SparseError::EmptyDataset);
    };
    let (m, n) = (first.len(), data.hr_patches[0].len());
    if data.hr_patches.len() != data.lr_features.len() {
        return Err(SparseError::DimensionMismatch { expected: data.lr_features.len(), got: data.hr_patches.len() });
    }
    let (sm, sn) = ((m as f64).sqrt(), (n as f64).sqrt());
    let mut cols = Vec::new();
    for (hr, lr) in data.hr_patches.iter().zip(&data.lr_features) {
        if hr.len() != n || lr.len() != m {
            return Err(SparseError::DimensionMismatch { expected: n + m, got: hr.len() + lr.len() });
        }
        let norm = lr.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < FLAT_FEATURE_NORM {
            continue;
        }
        let mut z: Vec<f64> = hr.iter().map(|v| v / (norm * sn)).chain(lr.iter().map(|v| v / (norm * sm))).collect();
        let c = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        z.iter_mut().for_each(|v| *v /= c);
        cols.push(DVector::from_vec(z));
    }
    if cols.is_empty() {
        return Err(SparseError::EmptyDataset);
    }
    Ok(DMatrix::from_columns(&cols))
}

fn objective(z: &DMatrix<f64>, d: &DMatrix<f64>, codes: &[Code], lambda: f64) -> f64 {
    let per: Vec<f64> = codes
        .par_iter()
        .enumerate()
        .map(|(s, code)| {
            let mut r: DVector<f64> = z.column(s).into_owned();
            let mut l1 = 0.0;
            for &(k, a) in code {
                r.axpy(-a, &d.column(k), 1.0);
                l1 += a.abs();
            }
            0.5 * r.norm_squared() + lambda * l1
        })
        .collect();
    per.iter().sum::<f64>() / codes.len() as f64
}

fn normalize_columns(d: &mut DMatrix<f64>, fallback: &DMatrix<f64>, codes: &mut [Code]) {
    let mut scale = vec![1.0; d.ncols()];
    for (k, mut col) in d.column_iter_mut().enumerate() {
        let n = col.norm();
        if n < 1e-12 {
            col.copy_from(&fallback.column(k));
            scale[k] = 0.0;
        } else {
            col /= n;
            scale[k] = n;
        }
    }
    for code in codes.iter_mut() {
        for (k, a) in code.iter_mut() {
            *a *= scale[*k];
        }
        code.retain(|(_, a)| *a != 0.0);
    }
}

/// Least-squares dictionary for fixed codes over the atoms in use; unused
/// atoms keep their current column.
fn mod_update(z: &DMatrix<f64>, d: &DMatrix<f64>, codes: &[Code]) -> DMatrix<f64> {
    let k = d.ncols();
    let mut used = vec![false; k];
    for code in codes {
        for &(j, _) in code {
            used[j] = true;
        }
    }
    let index: Vec<usize> = (0..k).filter(|&j| used[j]).collect();
    let mut slot = vec![usize::MAX; k];
    for (i, &j) in index.iter().enumerate() {
        slot[j] = i;
    }
    let u = index.len();
    let mut za = DMatrix::<f64>::zeros(z.nrows(), u);
    let mut aa = DMatrix::<f64>::zeros(u, u);
    for (s, code) in codes.iter().enumerate() {
        let zs = z.column(s);
        for &(j, a) in code {
            za.column_mut(slot[j]).axpy(a, &zs, 1.0);
            for &(j2, a2) in code {
                aa[(slot[j], slot[j2])] += a * a2;
            }
        }
    }
    let ridge = 1e-10 * (0..u).map(|i| aa[(i, i)]).fold(0.0, f64::max).max(1e-300);
    for i in 0..u {
        aa[(i, i)] += ridge;
    }
    let mut out = d.clone();
    if u == 0 {
        return out;
    }
    // D_U = Z Aᵀ (A Aᵀ)⁻¹, solved as (A Aᵀ) D_Uᵀ = (Z Aᵀ)ᵀ.
    let Some(chol) = aa.cholesky() else {
        return out;
    };
    let solved = chol.solve(&za.transpose()).transpose();
    for (i, &j) in index.iter().enumerate() {
        out.column_mut(j).copy_from(&solved.column(i));
    }
    out
}

fn code_all(coder: &Coder, z: &DMatrix<f64>, codes: &[Code], lambda: f64) -> Result<Vec<Code>, SparseError> {
    let k = coder.atoms();
    (0..z.ncols())
        .into_par_iter()
        .map(|s| {
            let mut warm = vec![0.0; k];
            for &(j, a) in &codes[s] {
                warm[j] = a;
            }
            let col: Vec<f64> = z.column(s).iter().copied().collect();
            coder.code_from(&col, lambda, Some(&warm)).map(|a| to_sparse(&a))
        })
        .collect()
}

/// Alternates Lasso coding of the joint samples with safeguarded MOD updates.
/// The update is accepted only if it does not raise the objective, otherwise
/// it is blended toward the current dictionary by step halving.
pub fn train_dictionaries_traced(
    data: &PatchDataset,
    params: &SparseParams,
    iters: usize,
    seed: u64,
) -> Result<DictionaryTraining, SparseError> {
    params.validate()?;
    if data.hr_patches.first().map(Vec::len) != Some(params.patch_size * params.patch_size) {
        if data.is_empty() {
            return Err(SparseError::EmptyDataset);
        }
        return Err(SparseError::DimensionMismatch { expected: params.patch_size * params.patch_size, got: data.hr_patches[0].len() });
    }
    let z = joint_samples(data)?;
    let samples = z.ncols();
    if params.atoms > samples {
        return Err(SparseError::TooManyAtoms { atoms: params.atoms, samples });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = index::sample(&mut rng, samples, params.atoms);
    let cols: Vec<DVector<f64>> = picks.iter().map(|s| z.column(s).into_owned()).collect();
    let mut d = DMatrix::from_columns(&cols);

    let lambda = params.lambda;
    let mut codes: Vec<Code> = vec![Vec::new(); samples];
    let mut history = Vec::with_capacity(iters + 1);
    let mut coder = Coder::new(d.clone());
    codes = code_all(&coder, &z, &codes, lambda)?;
    let mut current = objective(&z, &d, &codes, lambda);
    history.push(current);

    for _ in 0..iters {
        let target = mod_update(&z, &d, &codes);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..12 {
            let mut cand = if step == 1.0 { target.clone() } else { &d + (&target - &d) * step };
            let mut cand_codes = codes.clone();
            normalize_columns(&mut cand, &d, &mut cand_codes);
            let f = objective(&z, &cand, &cand_codes, lambda);
            if f <= current {
                accepted = Some((cand, cand_codes, f));
                break;
            }
            step *= 0.5;
        }
        if let Some((cand, cand_codes, f)) = accepted {
            d = cand;
            codes = cand_codes;
            current = f;
        }
        coder = Coder::new(d.clone());
        codes = code_all(&coder, &z, &codes, lambda)?;
        let f = objective(&z, &d, &codes, lambda);
        // Warm-started coordinate descent only descends, but its stopping
        // tolerance can leave a rounding-level uptick.
        current = f.min(current);
        history.push(f);
    }

    let residual = {
        let per: Vec<f64> = codes
            .par_iter()
            .enumerate()
            .map(|(s, code)| {
                let mut r: DVector<f64> = z.column(s).into_owned();
                for &(k, a) in code {
                    r.axpy(-a, &d.column(k), 1.0);
                }
                r.norm_squared()
            })
            .collect();
        per.iter().sum::<f64>() / samples as f64
    };
    Ok(DictionaryTraining { dict: split(&d, params.patch_size), objective: history, final_residual: residual, joint: d })
}

pub fn train_dictionaries(data: &PatchDataset, params: &SparseParams, iters: usize, seed: u64) -> Result<DictionaryPair, SparseError> {
    train_dictionaries_traced(data, params, iters, seed).map(|t| t.dict)
}

/// Undoes the block balancing and normalizes the LR half column-wise.
fn split(d: &DMatrix<f64>, p: usize) -> DictionaryPair {
    let n = p * p;
    let m = d.nrows() - n;
    let mut d_hr = d.rows(0, n) * (n as f64).sqrt();
    let mut d_lr = d.rows(n, m) * (m as f64).sqrt();
    for k in 0..d.ncols() {
        let s = d_lr.column(k).norm();
        if s < 1e-12 {
            d_lr.column_mut(k).fill(0.0);
            d_lr[(k % m, k)] = 1.0;
            d_hr.column_mut(k).fill(0.0);
        } else {
            d_lr.column_mut(k).unscale_mut(s);
            d_hr.column_mut(k).unscale_mut(s);
        }
    }
    DictionaryPair { d_lr, d_hr }
}
