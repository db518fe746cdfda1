//! Lasso by cyclic coordinate descent over a precomputed Gram matrix.

use nalgebra::{DMatrix, DVector};

use super::SparseError;

pub const KKT_TOLERANCE: f64 = 1e-6;
pub const MAX_SWEEPS: usize = 10_000;
/// Active-set sweeps between full sweeps.
const ACTIVE_SWEEPS: usize = 50;

#[inline]
fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Dictionary prepared for repeated coding: keeps `D` and `DᵀD`.
#[derive(Debug, Clone)]
pub struct Coder {
    dict: DMatrix<f64>,
    gram: DMatrix<f64>,
}

impl Coder {
    pub fn new(dict: DMatrix<f64>) -> Self {
        let gram = dict.transpose() * &dict;
        Coder { dict, gram }
    }

    pub fn dict(&self) -> &DMatrix<f64> {
        &self.dict
    }

    pub fn atoms(&self) -> usize {
        self.dict.ncols()
    }

    pub fn code(&self, feature: &[f64], lambda: f64) -> Result<Vec<f64>, SparseError> {
        self.code_from(feature, lambda, None)
    }

    /// Codes `feature`, optionally warm-starting from `init`.
    pub fn code_from(&self, feature: &[f64], lambda: f64, init: Option<&[f64]>) -> Result<Vec<f64>, SparseError> {
        if feature.len() != self.dict.nrows() {
            return Err(SparseError::DimensionMismatch { expected: self.dict.nrows(), got: feature.len() });
        }
        let corr = self.dict.tr_mul(&DVector::from_column_slice(feature));
        if let Some(a) = init {
            if a.len() != self.atoms() {
                return Err(SparseError::DimensionMismatch { expected: self.atoms(), got: a.len() });
            }
        }
        Ok(solve_gram(&self.gram, corr.as_slice(), lambda, init))
    }
}

/// Cyclic coordinate descent on `½αᵀGα − cᵀα + λ‖α‖₁`. Alternates full
/// sweeps with sweeps restricted to the active set until every KKT residual
/// is within [`KKT_TOLERANCE`] or [`MAX_SWEEPS`] is reached. Once the support
/// looks settled, an exact solve on it finishes ill-conditioned problems
/// that coordinate descent alone would crawl through.
pub fn solve_gram(gram: &DMatrix<f64>, corr: &[f64], lambda: f64, init: Option<&[f64]>) -> Vec<f64> {
    let k = corr.len();
    let mut alpha = init.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; k]);
    // q = G·α, kept current incrementally.
    let mut q = vec![0.0; k];
    for (j, &a) in alpha.iter().enumerate() {
        if a != 0.0 {
            add_column(&mut q, gram, j, a);
        }
    }
    let mut sweeps = 0;
    let mut active: Vec<usize> = Vec::new();
    loop {
        sweep(gram, corr, lambda, &mut alpha, &mut q, 0..k);
        sweeps += 1;
        if sweeps >= MAX_SWEEPS || kkt_from_q(corr, &q, &alpha, lambda) <= KKT_TOLERANCE {
            break;
        }
        active.clear();
        active.extend((0..k).filter(|&j| alpha[j] != 0.0));
        if polish(gram, corr, lambda, &active, &mut alpha, &mut q) {
            break;
        }
        for _ in 0..ACTIVE_SWEEPS {
            if sweeps >= MAX_SWEEPS {
                break;
            }
            let change = sweep(gram, corr, lambda, &mut alpha, &mut q, active.iter().copied());
            sweeps += 1;
            let worst = active.iter().map(|&j| kkt_coord(corr[j] - q[j], alpha[j], lambda)).fold(0.0, f64::max);
            if worst <= KKT_TOLERANCE || change == 0.0 {
                break;
            }
        }
    }
    alpha
}

/// Solves the stationarity equations on `active` with the current signs.
/// Keeps the result only if signs are preserved and every KKT condition
/// then holds, which makes it the exact Lasso solution.
fn polish(gram: &DMatrix<f64>, corr: &[f64], lambda: f64, active: &[usize], alpha: &mut [f64], q: &mut [f64]) -> bool {
    let mut start = alpha.to_vec();
    let active = reduce_support(gram, active, &mut start);
    let n = active.len();
    if n == 0 {
        return false;
    }
    let active = &active[..];
    let alpha_signs = start;
    let sub = DMatrix::from_fn(n, n, |i, j| gram[(active[i], active[j])]);
    let rhs = DVector::from_iterator(n, active.iter().map(|&j| corr[j] - lambda * alpha_signs[j].signum()));
    let Some(chol) = sub.cholesky() else {
        return false;
    };
    let sol = chol.solve(&rhs);
    if active.iter().zip(sol.iter()).any(|(&j, &v)| v == 0.0 || v.signum() != alpha_signs[j].signum()) {
        return false;
    }
    let mut trial = vec![0.0; alpha.len()];
    for (&j, &v) in active.iter().zip(sol.iter()) {
        trial[j] = v;
    }
    let mut tq = vec![0.0; q.len()];
    for &j in active {
        add_column(&mut tq, gram, j, trial[j]);
    }
    if kkt_from_q(corr, &tq, &trial, lambda) > KKT_TOLERANCE {
        return false;
    }
    alpha.copy_from_slice(&trial);
    q.copy_from_slice(&tq);
    true
}

/// While the atoms in `active` are linearly dependent, moves `alpha` along a
/// null direction of the sub-dictionary (the fit is unchanged and ℓ1 does not
/// grow) until a coefficient reaches zero, dropping it from the support.
fn reduce_support(gram: &DMatrix<f64>, active: &[usize], alpha: &mut [f64]) -> Vec<usize> {
    let mut support = active.to_vec();
    while !support.is_empty() {
        let n = support.len();
        let sub = DMatrix::from_fn(n, n, |i, j| gram[(support[i], support[j])]);
        let eig = sub.symmetric_eigen();
        let (imin, &lmin) = eig.eigenvalues.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("non-empty");
        let lmax = eig.eigenvalues.amax();
        if lmin > 1e-10 * lmax.max(1e-300) {
            break;
        }
        let mut v: Vec<f64> = eig.eigenvectors.column(imin).iter().copied().collect();
        let slope: f64 = support.iter().zip(&v).map(|(&j, &vi)| alpha[j].signum() * vi).sum();
        if slope > 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        let hit = support
            .iter()
            .zip(&v)
            .enumerate()
            .filter(|(_, (&j, &vi))| alpha[j] * vi < 0.0)
            .map(|(i, (&j, &vi))| (i, -alpha[j] / vi))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        let Some((drop, t)) = hit else {
            break;
        };
        for (&j, &vi) in support.iter().zip(&v) {
            alpha[j] += t * vi;
        }
        alpha[support[drop]] = 0.0;
        support.remove(drop);
    }
    support
}

fn add_column(q: &mut [f64], gram: &DMatrix<f64>, j: usize, delta: f64) {
    for (qi, g) in q.iter_mut().zip(gram.column(j).iter()) {
        *qi += delta * g;
    }
}

/// One pass over `coords`; returns the largest coefficient change.
fn sweep(gram: &DMatrix<f64>, corr: &[f64], lambda: f64, alpha: &mut [f64], q: &mut [f64], coords: impl Iterator<Item = usize>) -> f64 {
    let mut biggest: f64 = 0.0;
    for j in coords {
        let gjj = gram[(j, j)];
        if gjj <= 0.0 {
            continue;
        }
        let old = alpha[j];
        let rho = corr[j] - q[j] + gjj * old;
        let new = soft_threshold(rho, lambda) / gjj;
        if new != old {
            add_column(q, gram, j, new - old);
            alpha[j] = new;
            biggest = biggest.max((new - old).abs());
        }
    }
    biggest
}

#[inline]
fn kkt_coord(grad: f64, a: f64, lambda: f64) -> f64 {
    if a == 0.0 {
        (grad.abs() - lambda).max(0.0)
    } else {
        (grad - lambda * a.signum()).abs()
    }
}

fn kkt_from_q(corr: &[f64], q: &[f64], alpha: &[f64], lambda: f64) -> f64 {
    (0..corr.len()).map(|j| kkt_coord(corr[j] - q[j], alpha[j], lambda)).fold(0.0, f64::max)
}

/// Codes `feature` against `dict`, which should have unit-norm columns.
pub fn sparse_code(feature: &[f64], dict: &DMatrix<f64>, lambda: f64) -> Result<Vec<f64>, SparseError> {
    Coder::new(dict.clone()).code(feature, lambda)
}

/// `½‖y − Dα‖² + λ‖α‖₁`.
pub fn lasso_objective(feature: &[f64], dict: &DMatrix<f64>, alpha: &[f64], lambda: f64) -> f64 {
    let r = DVector::from_column_slice(feature) - dict * DVector::from_column_slice(alpha);
    0.5 * r.norm_squared() + lambda * alpha.iter().map(|a| a.abs()).sum::<f64>()
}

/// Largest violation of the Lasso optimality conditions.
pub fn kkt_residual(feature: &[f64], dict: &DMatrix<f64>, alpha: &[f64], lambda: f64) -> f64 {
    let r = DVector::from_column_slice(feature) - dict * DVector::from_column_slice(alpha);
    let grad = dict.tr_mul(&r);
    grad.iter().zip(alpha).map(|(&g, &a)| kkt_coord(g, a, lambda)).fold(0.0, f64::max)
}
