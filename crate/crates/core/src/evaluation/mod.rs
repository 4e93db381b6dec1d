//! Experiment harness: error metrics, support recovery, latent embeddings,
//! hyperparameter sweeps and synthetic ground truth.

mod grid;
mod synth;

pub use grid::{grid_search, split_indices, FitKind, GridResult, GridRow, GridSpec, SplitSpec};
pub use synth::{synthesize, SyntheticData, SyntheticLink, SyntheticSpec};

use nalgebra::DMatrix;

use crate::error::{Result, SilvarError};
use crate::model::{ModelLink, SilvarModel};
use crate::prox::svd;

/// Root mean squared entrywise difference.
pub fn rmse(yhat: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    if yhat.shape() != y.shape() {
        return Err(SilvarError::invalid(format!(
            "rmse: {}x{} vs {}x{}",
            yhat.nrows(),
            yhat.ncols(),
            y.nrows(),
            y.ncols()
        )));
    }
    if y.is_empty() {
        return Err(SilvarError::invalid("rmse of empty matrices"));
    }
    Ok(((yhat - y).norm_squared() / y.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Edge-detection scores treating `|entry| > threshold` as an edge.
///
/// Precision is 1 when nothing is predicted and recall is 1 when nothing is true.
pub fn support_metrics(a_hat: &DMatrix<f64>, a_true: &DMatrix<f64>, threshold: f64) -> Result<SupportMetrics> {
    if a_hat.shape() != a_true.shape() {
        return Err(SilvarError::invalid("support_metrics: shape mismatch"));
    }
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (h, t) in a_hat.iter().zip(a_true.iter()) {
        match (h.abs() > threshold, t.abs() > threshold) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let precision = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fn_ == 0 { 1.0 } else { tp as f64 / (tp + fn_) as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(SupportMetrics { precision, recall, f1 })
}

/// Projection of the data onto the top `r` singular directions of `L`: `S_r V_r^T X`.
///
/// `x` is in raw units; the model's standardization is applied first. The result
/// is `r x n` with rows ordered by decreasing singular value.
pub fn embed(model: &SilvarModel, x: &DMatrix<f64>, r: usize) -> Result<DMatrix<f64>> {
    let limit = model.l.nrows().min(model.l.ncols());
    if r == 0 || r > limit {
        return Err(SilvarError::invalid(format!(
            "embedding rank {r} outside 1..={limit}"
        )));
    }
    let xs = model.standardization.apply(x)?;
    if model.l.iter().all(|&v| v == 0.0) {
        return Ok(DMatrix::zeros(r, xs.ncols()));
    }
    let dec = svd(&model.l)?;
    let v_t = dec.v_t.unwrap();
    let mut proj = v_t.rows(0, r).into_owned();
    for (k, mut row) in proj.row_iter_mut().enumerate() {
        row *= dec.singular_values[k];
    }
    Ok(proj * xs)
}

/// RMSE between a fitted link and the generating link on a uniform grid spanning the
/// 5th to 95th percentile of `abscissae`.
pub fn link_recovery_rmse(link: &ModelLink, truth: SyntheticLink, abscissae: &[f64]) -> Result<f64> {
    if abscissae.is_empty() {
        return Err(SilvarError::invalid("no abscissae for link comparison"));
    }
    let mut sorted = abscissae.to_vec();
    sorted.sort_by(f64::total_cmp);
    let lo = percentile(&sorted, 0.05);
    let hi = percentile(&sorted, 0.95);
    const POINTS: usize = 200;
    let mut acc = 0.0;
    for k in 0..POINTS {
        let t = lo + (hi - lo) * k as f64 / (POINTS - 1) as f64;
        acc += (link.evaluate(t) - truth.evaluate(t)).powi(2);
    }
    Ok((acc / POINTS as f64).sqrt())
}

/// Linear-interpolation percentile of sorted data, `q` in `[0, 1]`.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}
