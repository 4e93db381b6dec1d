use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{fit_glm, fit_sparse_sim, FixedLink};
use crate::error::{Result, SilvarError};
use crate::model::{Dataset, SilvarModel};
use crate::prox::RegularizerConfig;
use crate::solver::{fit, FitReport, SolverConfig};

use super::rmse;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train_count: usize,
    pub validation_count: usize,
    pub test_count: usize,
    pub shuffle_seed: u64,
}

impl SplitSpec {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.train_count == 0 || self.validation_count == 0 || self.test_count == 0 {
            return Err(SilvarError::invalid("split counts must be positive"));
        }
        let total = self.train_count + self.validation_count + self.test_count;
        if total > n {
            return Err(SilvarError::invalid(format!(
                "split needs {total} samples but the data has {n}"
            )));
        }
        Ok(())
    }
}

/// Train, validation and test sample indices.
///
/// Temporal data is split into contiguous blocks (train earliest); otherwise the
/// samples are shuffled with `shuffle_seed` first.
pub fn split_indices(split: &SplitSpec, n: usize, temporal: bool) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    split.validate(n)?;
    let mut order: Vec<usize> = (0..n).collect();
    if !temporal {
        let mut rng = ChaCha8Rng::seed_from_u64(split.shuffle_seed);
        order.shuffle(&mut rng);
    }
    let a = split.train_count;
    let b = a + split.validation_count;
    let c = b + split.test_count;
    Ok((order[..a].to_vec(), order[a..b].to_vec(), order[b..c].to_vec()))
}

/// Penalty weights `10^(i/4)` for each exponent `i`, shared by both axes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub exponents: Vec<i32>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            exponents: (-8..=12).collect(),
        }
    }
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        self.exponents.iter().map(|&i| 10f64.powf(i as f64 / 4.0)).collect()
    }

    /// Row-major `(lambda_sparse, lambda_lowrank)` pairs.
    pub fn pairs(&self) -> Vec<(f64, f64)> {
        let v = self.values();
        v.iter().flat_map(|&a| v.iter().map(move |&b| (a, b))).collect()
    }
}

/// Which estimator a sweep fits in every cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitKind {
    Silvar,
    Glm(FixedLink),
    /// Fixed link with `L` held at zero whatever the nuclear weight.
    SparseGlm(FixedLink),
    SparseSim,
}

impl FitKind {
    pub fn fit(self, data: &Dataset, reg: &RegularizerConfig, solver: &SolverConfig) -> Result<(SilvarModel, FitReport)> {
        match self {
            FitKind::Silvar => fit(data, reg, solver),
            FitKind::Glm(link) => fit_glm(data, link, reg, solver),
            FitKind::SparseGlm(link) => {
                let reg = RegularizerConfig {
                    lambda_lowrank: f64::INFINITY,
                    ..*reg
                };
                fit_glm(data, link, &reg, solver)
            }
            FitKind::SparseSim => fit_sparse_sim(data, reg, solver),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub lambda_sparse: f64,
    pub lambda_lowrank: f64,
    /// Infinite when the fit failed.
    pub val_rmse: f64,
    /// Only filled in for the selected cell.
    pub test_rmse: Option<f64>,
    pub iters: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub best_index: usize,
    pub table: Vec<GridRow>,
    pub best_model: SilvarModel,
    pub best_report: FitReport,
}

impl GridResult {
    pub fn best_pair(&self) -> (f64, f64) {
        let row = &self.table[self.best_index];
        (row.lambda_sparse, row.lambda_lowrank)
    }

    pub fn test_rmse(&self) -> f64 {
        self.table[self.best_index].test_rmse.unwrap_or(f64::NAN)
    }
}

/// Fits one model per grid cell on the training split and picks the lowest
/// validation RMSE (ties toward larger `lambda_sparse`, then larger `lambda_lowrank`).
///
/// Cells run on a pool of `workers` threads; the table does not depend on scheduling.
pub fn grid_search(
    data: &Dataset,
    split: &SplitSpec,
    grid: &GridSpec,
    reg_template: &RegularizerConfig,
    solver: &SolverConfig,
    kind: FitKind,
    workers: usize,
) -> Result<GridResult> {
    if grid.exponents.is_empty() {
        return Err(SilvarError::invalid("grid has no exponents"));
    }
    let (train_idx, val_idx, test_idx) = split_indices(split, data.n(), data.temporal)?;
    let train = data.select(&train_idx)?;
    let val = data.select(&val_idx)?;
    let test = data.select(&test_idx)?;

    let cells = grid.pairs();
    let run_cell = |&(ls, ll): &(f64, f64)| {
        let reg = RegularizerConfig {
            lambda_sparse: ls,
            lambda_lowrank: ll,
            ..*reg_template
        };
        let outcome = kind.fit(&train, &reg, solver).and_then(|(model, report)| {
            let score = rmse(&model.predict(val.x())?, val.y())?;
            Ok((model, report, score))
        });
        outcome.ok()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| SilvarError::invalid(format!("cannot start worker pool: {e}")))?;
    let results: Vec<_> = pool.install(|| cells.par_iter().map(run_cell).collect());

    let mut table: Vec<GridRow> = cells
        .iter()
        .zip(&results)
        .map(|(&(ls, ll), r)| match r {
            Some((_, report, score)) if score.is_finite() => GridRow {
                lambda_sparse: ls,
                lambda_lowrank: ll,
                val_rmse: *score,
                test_rmse: None,
                iters: report.iterations,
                converged: report.converged,
            },
            Some((_, report, _)) => GridRow {
                lambda_sparse: ls,
                lambda_lowrank: ll,
                val_rmse: f64::INFINITY,
                test_rmse: None,
                iters: report.iterations,
                converged: report.converged,
            },
            None => GridRow {
                lambda_sparse: ls,
                lambda_lowrank: ll,
                val_rmse: f64::INFINITY,
                test_rmse: None,
                iters: 0,
                converged: false,
            },
        })
        .collect();

    let mut best: Option<usize> = None;
    for (i, row) in table.iter().enumerate() {
        if results[i].is_none() {
            continue;
        }
        best = match best {
            None => Some(i),
            Some(b) => {
                let cur = &table[b];
                let better = row.val_rmse < cur.val_rmse
                    || (row.val_rmse == cur.val_rmse
                        && (row.lambda_sparse > cur.lambda_sparse
                            || (row.lambda_sparse == cur.lambda_sparse && row.lambda_lowrank > cur.lambda_lowrank)));
                if better {
                    Some(i)
                } else {
                    Some(b)
                }
            }
        };
    }
    let best_index = best.ok_or_else(|| SilvarError::Numerical("every grid cell failed".into()))?;
    let (best_model, best_report, _) = results.into_iter().nth(best_index).flatten().unwrap();
    table[best_index].test_rmse = Some(rmse(&best_model.predict(test.x())?, test.y())?);

    Ok(GridResult {
        best_index,
        table,
        best_model,
        best_report,
    })
}
