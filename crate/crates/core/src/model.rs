//! Datasets and fitted models.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::baselines::FixedLink;
use crate::error::{Result, SilvarError};
use crate::link::LinkFunction;

/// Paired observations, one column per sample: `x` is `p x n`, `y` is `m x n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DMatrix<f64>,
    pub feature_names: Option<Vec<String>>,
    pub response_names: Option<Vec<String>>,
    /// Samples are ordered in time (autoregressive data); splits keep them contiguous.
    pub temporal: bool,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DMatrix<f64>) -> Result<Self> {
        if x.ncols() != y.ncols() {
            return Err(SilvarError::invalid(format!(
                "X has {} samples but Y has {}",
                x.ncols(),
                y.ncols()
            )));
        }
        if x.ncols() == 0 {
            return Err(SilvarError::invalid("dataset needs at least one sample"));
        }
        if x.nrows() == 0 || y.nrows() == 0 {
            return Err(SilvarError::invalid("dataset needs at least one feature and one response"));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(SilvarError::invalid("dataset has non-finite entries"));
        }
        Ok(Self {
            x,
            y,
            feature_names: None,
            response_names: None,
            temporal: false,
        })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.x.ncols()
    }

    pub fn p(&self) -> usize {
        self.x.nrows()
    }

    pub fn m(&self) -> usize {
        self.y.nrows()
    }

    /// The samples at `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> Result<Dataset> {
        let x = self.x.select_columns(idx);
        let y = self.y.select_columns(idx);
        let mut d = Dataset::new(x, y)?;
        d.feature_names = self.feature_names.clone();
        d.response_names = self.response_names.clone();
        d.temporal = self.temporal;
        Ok(d)
    }
}

/// Per-feature affine transform `(x - mean) / scale` applied before the linear map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardization {
    pub fn identity(p: usize) -> Self {
        Self {
            mean: vec![0.0; p],
            scale: vec![1.0; p],
        }
    }

    /// Column-sample mean and population standard deviation per row; constant rows keep scale 1.
    pub fn fit(x: &DMatrix<f64>) -> Self {
        let n = x.ncols() as f64;
        let mut mean = Vec::with_capacity(x.nrows());
        let mut scale = Vec::with_capacity(x.nrows());
        for row in x.row_iter() {
            let mu = row.sum() / n;
            let var = row.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            mean.push(mu);
            scale.push(if sd > 0.0 && sd.is_finite() { sd } else { 1.0 });
        }
        Self { mean, scale }
    }

    pub fn is_identity(&self) -> bool {
        self.mean.iter().all(|&m| m == 0.0) && self.scale.iter().all(|&s| s == 1.0)
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.mean.len() {
            return Err(SilvarError::invalid(format!(
                "input has {} features, model expects {}",
                x.nrows(),
                self.mean.len()
            )));
        }
        if self.is_identity() {
            return Ok(x.clone());
        }
        let mut out = x.clone();
        for (i, mut row) in out.row_iter_mut().enumerate() {
            let (mu, s) = (self.mean[i], self.scale[i]);
            row.apply(|v| *v = (*v - mu) / s);
        }
        Ok(out)
    }
}

/// The link carried by a model: learned by LMR, or one of the fixed baselines.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelLink {
    Learned(LinkFunction),
    Fixed(FixedLink),
}

impl ModelLink {
    #[inline]
    pub fn evaluate(&self, theta: f64) -> f64 {
        match self {
            ModelLink::Learned(l) => l.evaluate(theta),
            ModelLink::Fixed(f) => f.evaluate(theta),
        }
    }

    #[inline]
    pub fn antiderivative(&self, theta: f64) -> f64 {
        match self {
            ModelLink::Learned(l) => l.antiderivative(theta),
            ModelLink::Fixed(f) => f.antiderivative(theta),
        }
    }
}

/// Link `g`, sparse `A` and low-rank `L`, both `m x (p * lags)` with lag blocks side by side.
#[derive(Debug, Clone, PartialEq)]
pub struct SilvarModel {
    pub link: ModelLink,
    pub a: DMatrix<f64>,
    pub l: DMatrix<f64>,
    pub lag_count: usize,
    pub standardization: Standardization,
}

impl SilvarModel {
    pub fn new(
        link: ModelLink,
        a: DMatrix<f64>,
        l: DMatrix<f64>,
        lag_count: usize,
        standardization: Standardization,
    ) -> Result<Self> {
        let model = Self {
            link,
            a,
            l,
            lag_count,
            standardization,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.a.shape() != self.l.shape() {
            return Err(SilvarError::Schema(format!(
                "shape mismatch: A is {}x{} but L is {}x{}",
                self.a.nrows(),
                self.a.ncols(),
                self.l.nrows(),
                self.l.ncols()
            )));
        }
        if self.lag_count == 0 || !self.a.ncols().is_multiple_of(self.lag_count) {
            return Err(SilvarError::Schema(format!(
                "{} columns cannot be split into {} lag blocks",
                self.a.ncols(),
                self.lag_count
            )));
        }
        if self.standardization.mean.len() != self.a.ncols()
            || self.standardization.scale.len() != self.a.ncols()
        {
            return Err(SilvarError::Schema(format!(
                "standardization has {} means and {} scales for {} columns",
                self.standardization.mean.len(),
                self.standardization.scale.len(),
                self.a.ncols()
            )));
        }
        if self.standardization.scale.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(SilvarError::Schema("standardization scales must be positive".into()));
        }
        if self.a.iter().chain(self.l.iter()).any(|v| !v.is_finite()) {
            return Err(SilvarError::Schema("coefficients must be finite".into()));
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    /// Features per lag block.
    pub fn p(&self) -> usize {
        self.a.ncols() / self.lag_count
    }

    /// Total input rows expected by the linear map (`p * lags`).
    pub fn input_dim(&self) -> usize {
        self.a.ncols()
    }

    /// `A + L`
    pub fn combined(&self) -> DMatrix<f64> {
        &self.a + &self.l
    }

    /// `(A + L) X` on inputs already in the model's standardized units.
    pub fn linear_response(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.input_dim() {
            return Err(SilvarError::invalid(format!(
                "input has {} rows, model expects {}",
                x.nrows(),
                self.input_dim()
            )));
        }
        Ok(self.combined() * x)
    }

    /// `g((A + L) standardize(X))`
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SilvarError::invalid("prediction input has non-finite entries"));
        }
        let xs = self.standardization.apply(x)?;
        let theta = self.linear_response(&xs)?;
        Ok(theta.map(|t| self.link.evaluate(t)))
    }

    pub fn to_json(&self) -> Result<String> {
        let repr = ModelRepr {
            m: self.m(),
            p: self.p(),
            lags: self.lag_count,
            a: rows_of(&self.a),
            l: rows_of(&self.l),
            link: match &self.link {
                ModelLink::Learned(l) => serde_json::to_value(l)?,
                ModelLink::Fixed(f) => serde_json::to_value(FixedRepr { fixed: *f })?,
            },
            standardization: self.standardization.clone(),
        };
        Ok(serde_json::to_string_pretty(&repr)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let repr: ModelRepr = serde_json::from_str(text)?;
        let a = matrix_from_rows(&repr.a, "A")?;
        let l = matrix_from_rows(&repr.l, "L")?;
        if a.shape() != l.shape() {
            return Err(SilvarError::Schema(format!(
                "shape mismatch: A is {}x{} but L is {}x{}",
                a.nrows(),
                a.ncols(),
                l.nrows(),
                l.ncols()
            )));
        }
        if a.nrows() != repr.m || a.ncols() != repr.p * repr.lags {
            return Err(SilvarError::Schema(format!(
                "A is {}x{} but m={}, p={}, lags={}",
                a.nrows(),
                a.ncols(),
                repr.m,
                repr.p,
                repr.lags
            )));
        }
        let link = if repr.link.get("fixed").is_some() {
            let f: FixedRepr = serde_json::from_value(repr.link)?;
            ModelLink::Fixed(f.fixed)
        } else {
            ModelLink::Learned(serde_json::from_value::<LinkFunction>(repr.link).map_err(link_error)?)
        };
        SilvarModel::new(link, a, l, repr.lags, repr.standardization)
    }
}

/// Surfaces the link's own invariant message rather than serde's wrapper text.
fn link_error(e: serde_json::Error) -> SilvarError {
    SilvarError::Schema(e.to_string())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelRepr {
    m: usize,
    p: usize,
    lags: usize,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "L")]
    l: Vec<Vec<f64>>,
    link: serde_json::Value,
    standardization: Standardization,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FixedRepr {
    fixed: FixedLink,
}

pub(crate) fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>], name: &str) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(SilvarError::Schema(format!("{name} has ragged rows")));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}
