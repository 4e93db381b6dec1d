//! Penalties on the sparse and low-rank coefficient matrices and their proximal maps.
//!
//! Coefficient matrices are `m x (p * lags)`, the lag blocks laid out side by side:
//! columns `l*p .. (l+1)*p` hold lag `l + 1`. The group penalty ties entry `(i, j)`
//! of every lag block together; the nuclear penalty acts on each lag block separately.
//!
//! A penalty weight of `f64::INFINITY` clamps the matrix to zero.

use nalgebra::{DMatrix, DVector, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SilvarError};

const SVD_EPS: f64 = 1e-15;
const SVD_MAX_ITERS: usize = 10_000;
/// Singular values below this fraction of the largest count as zero for rank reporting.
pub const RANK_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SparseStructure {
    /// `lambda * sum |a_ij|`
    #[default]
    ElementwiseL1,
    /// `lambda * sum_ij ||(a^(1)_ij, ..., a^(M)_ij)||_2`
    LagGroupL2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizerConfig {
    pub lambda_sparse: f64,
    pub lambda_lowrank: f64,
    pub sparse_structure: SparseStructure,
    pub lag_count: usize,
}

impl Default for RegularizerConfig {
    fn default() -> Self {
        Self {
            lambda_sparse: 0.1,
            lambda_lowrank: 0.1,
            sparse_structure: SparseStructure::ElementwiseL1,
            lag_count: 1,
        }
    }
}

impl RegularizerConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_sparse", self.lambda_sparse),
            ("lambda_lowrank", self.lambda_lowrank),
        ] {
            if v.is_nan() || v < 0.0 {
                return Err(SilvarError::invalid(format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.lag_count == 0 {
            return Err(SilvarError::invalid("lag_count must be >= 1"));
        }
        Ok(())
    }

    /// Proximal map of `step * h1` applied to the sparse component.
    pub fn prox_sparse(&self, w: &DMatrix<f64>, step: f64) -> Result<DMatrix<f64>> {
        let tau = scaled(self.lambda_sparse, step);
        match self.sparse_structure {
            SparseStructure::ElementwiseL1 => prox_l1(w, tau),
            SparseStructure::LagGroupL2 => prox_group(w, self.lag_count, tau),
        }
    }

    /// Proximal map of `step * h2` applied to the low-rank component.
    pub fn prox_lowrank(&self, w: &DMatrix<f64>, step: f64) -> Result<DMatrix<f64>> {
        prox_nuclear_lagged(w, self.lag_count, scaled(self.lambda_lowrank, step))
    }
}

fn scaled(lambda: f64, step: f64) -> f64 {
    if lambda == 0.0 {
        0.0
    } else {
        lambda * step
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau.is_nan() || tau < 0.0 {
        return Err(SilvarError::invalid(format!("prox threshold must be >= 0, got {tau}")));
    }
    Ok(())
}

fn check_finite(w: &DMatrix<f64>) -> Result<()> {
    if w.iter().any(|v| !v.is_finite()) {
        return Err(SilvarError::invalid("prox input has non-finite entries"));
    }
    Ok(())
}

fn soft_threshold(v: f64, tau: f64) -> f64 {
    if v > tau {
        v - tau
    } else if v < -tau {
        v + tau
    } else {
        0.0
    }
}

/// Elementwise soft-thresholding.
pub fn prox_l1(w: &DMatrix<f64>, tau: f64) -> Result<DMatrix<f64>> {
    check_tau(tau)?;
    check_finite(w)?;
    Ok(w.map(|v| soft_threshold(v, tau)))
}

/// Block soft-thresholding of the lag groups `(w[i, j], w[i, p + j], ..., w[i, (M-1)p + j])`.
pub fn prox_group(w: &DMatrix<f64>, lag_count: usize, tau: f64) -> Result<DMatrix<f64>> {
    check_tau(tau)?;
    check_finite(w)?;
    let p = lag_width(w, lag_count)?;
    let mut out = w.clone();
    for i in 0..w.nrows() {
        for j in 0..p {
            let norm = (0..lag_count)
                .map(|l| w[(i, l * p + j)].powi(2))
                .sum::<f64>()
                .sqrt();
            let scale = if norm > tau { 1.0 - tau / norm } else { 0.0 };
            for l in 0..lag_count {
                out[(i, l * p + j)] *= scale;
            }
        }
    }
    Ok(out)
}

/// Singular value thresholding: `U max(S - tau, 0) V^T`.
pub fn prox_nuclear(w: &DMatrix<f64>, tau: f64) -> Result<DMatrix<f64>> {
    check_tau(tau)?;
    check_finite(w)?;
    if tau == f64::INFINITY || w.is_empty() {
        return Ok(DMatrix::zeros(w.nrows(), w.ncols()));
    }
    if tau == 0.0 {
        return Ok(w.clone());
    }
    let svd = svd(w)?;
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut out = DMatrix::zeros(w.nrows(), w.ncols());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        let shrunk = s - tau;
        if shrunk <= 0.0 {
            break;
        }
        out += shrunk * u.column(k) * v_t.row(k);
    }
    Ok(out)
}

/// [`prox_nuclear`] applied independently to each lag block.
pub fn prox_nuclear_lagged(w: &DMatrix<f64>, lag_count: usize, tau: f64) -> Result<DMatrix<f64>> {
    let p = lag_width(w, lag_count)?;
    if lag_count == 1 {
        return prox_nuclear(w, tau);
    }
    let mut out = DMatrix::zeros(w.nrows(), w.ncols());
    for l in 0..lag_count {
        let block = w.columns(l * p, p).into_owned();
        out.columns_mut(l * p, p).copy_from(&prox_nuclear(&block, tau)?);
    }
    Ok(out)
}

/// `h1(A) + h2(L)` with per-lag nuclear norms.
pub fn penalty_value(a: &DMatrix<f64>, l: &DMatrix<f64>, config: &RegularizerConfig) -> Result<f64> {
    config.validate()?;
    if a.shape() != l.shape() {
        return Err(SilvarError::invalid(format!(
            "A is {}x{} but L is {}x{}",
            a.nrows(),
            a.ncols(),
            l.nrows(),
            l.ncols()
        )));
    }
    let p = lag_width(a, config.lag_count)?;
    let sparse = match config.sparse_structure {
        SparseStructure::ElementwiseL1 => a.iter().map(|v| v.abs()).sum::<f64>(),
        SparseStructure::LagGroupL2 => {
            let mut total = 0.0;
            for i in 0..a.nrows() {
                for j in 0..p {
                    total += (0..config.lag_count)
                        .map(|k| a[(i, k * p + j)].powi(2))
                        .sum::<f64>()
                        .sqrt();
                }
            }
            total
        }
    };
    let mut lowrank = 0.0;
    for k in 0..config.lag_count {
        lowrank += nuclear_norm(&l.columns(k * p, p).into_owned())?;
    }
    Ok(weighted(config.lambda_sparse, sparse) + weighted(config.lambda_lowrank, lowrank))
}

/// `lambda * norm` with `0 * inf = 0` (a clamped component contributes nothing).
fn weighted(lambda: f64, norm: f64) -> f64 {
    if norm == 0.0 {
        0.0
    } else {
        lambda * norm
    }
}

pub fn nuclear_norm(w: &DMatrix<f64>) -> Result<f64> {
    Ok(singular_values(w)?.iter().sum())
}

/// Singular values in descending order.
pub fn singular_values(w: &DMatrix<f64>) -> Result<DVector<f64>> {
    if w.is_empty() || w.iter().all(|&v| v == 0.0) {
        return Ok(DVector::zeros(w.nrows().min(w.ncols())));
    }
    Ok(svd_with(w, false)?.singular_values)
}

/// Numerical rank: singular values above `RANK_RTOL * sigma_max`.
pub fn rank(w: &DMatrix<f64>) -> Result<usize> {
    let s = singular_values(w)?;
    let top = s.iter().cloned().fold(0.0, f64::max);
    if top == 0.0 {
        return Ok(0);
    }
    Ok(s.iter().filter(|&&v| v > RANK_RTOL * top).count())
}

/// Full SVD, singular values sorted descending.
pub fn svd(w: &DMatrix<f64>) -> Result<SVD<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    svd_with(w, true)
}

fn svd_with(w: &DMatrix<f64>, vectors: bool) -> Result<SVD<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    SVD::try_new(w.clone(), vectors, vectors, SVD_EPS, SVD_MAX_ITERS).ok_or_else(|| {
        SilvarError::Numerical(format!(
            "SVD of {}x{} matrix did not converge",
            w.nrows(),
            w.ncols()
        ))
    })
}

fn lag_width(w: &DMatrix<f64>, lag_count: usize) -> Result<usize> {
    if lag_count == 0 || !w.ncols().is_multiple_of(lag_count) {
        return Err(SilvarError::invalid(format!(
            "{} columns cannot be split into {} lag blocks",
            w.ncols(),
            lag_count
        )));
    }
    Ok(w.ncols() / lag_count)
}
