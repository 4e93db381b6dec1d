//! JSON run configuration. Every field is optional; command-line flags take
//! precedence over the file, and the file over built-in defaults.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use silvar::evaluation::{GridSpec, SplitSpec};
use silvar::prox::SparseStructure;
use silvar::solver::StepRule;
use silvar::{Result, SilvarError};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub lambda_sparse: Option<f64>,
    pub lambda_lowrank: Option<f64>,
    pub sparse_structure: Option<SparseStructure>,
    pub lags: Option<usize>,

    pub max_iters: Option<usize>,
    pub rel_tol: Option<f64>,
    pub acceleration: Option<bool>,
    pub step_rule: Option<StepRule>,
    pub backtracking_shrink: Option<f64>,
    pub standardize_inputs: Option<bool>,
    pub link_update_every: Option<usize>,

    pub split: Option<SplitSpec>,
    pub grid: Option<GridSpec>,
    pub workers: Option<usize>,

    pub x: Option<PathBuf>,
    pub y: Option<PathBuf>,
    pub timeseries: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|source| SilvarError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text)
            .map_err(|e| SilvarError::invalid(format!("{}: {e}", path.display())))
    }
}

/// Exponents given either as an inclusive range `lo:hi` or a comma list.
pub fn parse_exponents(text: &str) -> std::result::Result<GridSpec, String> {
    let text = text.trim();
    let exponents: Vec<i32> = if let Some((lo, hi)) = text.split_once(':') {
        let lo: i32 = lo.trim().parse().map_err(|_| format!("bad range start {lo:?}"))?;
        let hi: i32 = hi.trim().parse().map_err(|_| format!("bad range end {hi:?}"))?;
        if lo > hi {
            return Err(format!("empty range {lo}:{hi}"));
        }
        (lo..=hi).collect()
    } else {
        text.split(',')
            .map(|s| s.trim().parse().map_err(|_| format!("bad exponent {s:?}")))
            .collect::<std::result::Result<_, _>>()?
    };
    if exponents.is_empty() {
        return Err("no exponents".into());
    }
    Ok(GridSpec { exponents })
}
