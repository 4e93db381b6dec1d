//! Autoregressive problems built from multivariate time series, and graph export
//! of the fitted lag-blocked coefficients.

use nalgebra::DMatrix;

use crate::error::{Result, SilvarError};
use crate::model::{Dataset, SilvarModel};

/// `m` series observed at `T` time steps: `values` is `m x T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    values: DMatrix<f64>,
    pub timestamps: Option<Vec<String>>,
    pub series_names: Option<Vec<String>>,
    /// `(longitude, latitude)` per series when known.
    pub coordinates: Option<Vec<Option<(f64, f64)>>>,
}

impl TimeSeries {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 {
            return Err(SilvarError::invalid("time series has no series"));
        }
        if values.ncols() < 2 {
            return Err(SilvarError::invalid("fewer than 2 time steps"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SilvarError::invalid("time series has non-finite entries"));
        }
        Ok(Self {
            values,
            timestamps: None,
            series_names: None,
            coordinates: None,
        })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Number of series.
    pub fn m(&self) -> usize {
        self.values.nrows()
    }

    /// Number of time steps.
    pub fn len(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.values.ncols() == 0
    }
}

/// Lag-stacked regression problem for an AR(`lags`) model.
///
/// Sample `s` (0-based) predicts column `lags + s` from the columns
/// `lags + s - 1, lags + s - 2, ..., s` stacked with the most recent lag first,
/// so the inputs have `m * lags` rows and there are `T - lags` samples.
pub fn build_ar_dataset(series: &TimeSeries, lags: usize) -> Result<Dataset> {
    let (m, t) = (series.m(), series.len());
    if lags == 0 {
        return Err(SilvarError::invalid("lag order must be positive"));
    }
    if t <= lags {
        return Err(SilvarError::invalid(format!(
            "{t} time steps are not enough for {lags} lags"
        )));
    }
    let n = t - lags;
    let v = series.values();
    let x = DMatrix::from_fn(m * lags, n, |row, s| {
        let (lag, series_idx) = (row / m, row % m);
        v[(series_idx, lags + s - 1 - lag)]
    });
    let y = v.columns(lags, n).into_owned();
    let mut data = Dataset::new(x, y)?;
    if let Some(names) = &series.series_names {
        data.response_names = Some(names.clone());
        data.feature_names = Some(
            (1..=lags)
                .flat_map(|lag| names.iter().map(move |nm| format!("{nm}_lag{lag}")))
                .collect(),
        );
    }
    data.temporal = true;
    Ok(data)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    /// Row index `i` of the coefficient (the predicted series).
    pub source: usize,
    /// Column index `j` within a lag block (the predicting series).
    pub target: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphExport {
    pub node_count: usize,
    pub edges: Vec<Edge>,
    pub node_names: Option<Vec<String>>,
    pub coordinates: Option<Vec<Option<(f64, f64)>>>,
    /// Fraction of the `m^2` possible (self-loops included) edges kept.
    pub density: f64,
}

/// `m x m` matrix of lag-group norms `||(a^(1)_ij, ..., a^(M)_ij)||_2`.
pub fn group_norms(model: &SilvarModel) -> Result<DMatrix<f64>> {
    let (m, p) = (model.m(), model.p());
    if m != p {
        return Err(SilvarError::invalid(format!(
            "graph export needs square lag blocks, model has {m}x{p}"
        )));
    }
    Ok(DMatrix::from_fn(m, m, |i, j| {
        (0..model.lag_count)
            .map(|l| model.a[(i, l * p + j)].powi(2))
            .sum::<f64>()
            .sqrt()
    }))
}

/// Keeps the `ceil(density * m^2)` largest nonzero group norms as weighted edges.
/// Equal weights are ordered by `(source, target)`.
pub fn to_graph(model: &SilvarModel, target_density: f64) -> Result<GraphExport> {
    if !(target_density > 0.0 && target_density <= 1.0) {
        return Err(SilvarError::invalid(format!(
            "density must lie in (0, 1], got {target_density}"
        )));
    }
    let norms = group_norms(model)?;
    let m = norms.nrows();
    let cells = (m * m) as f64;
    // tolerate representation error in products like 0.12 * 22500
    let budget = (target_density * cells - 1e-9).ceil().max(0.0) as usize;

    let mut edges: Vec<Edge> = Vec::new();
    for i in 0..m {
        for j in 0..m {
            let w = norms[(i, j)];
            if w > 0.0 {
                edges.push(Edge {
                    source: i,
                    target: j,
                    weight: w,
                });
            }
        }
    }
    edges.sort_by(|a, b| {
        b.weight
            .total_cmp(&a.weight)
            .then(a.source.cmp(&b.source))
            .then(a.target.cmp(&b.target))
    });
    edges.truncate(budget);
    let density = edges.len() as f64 / cells;
    Ok(GraphExport {
        node_count: m,
        edges,
        node_names: None,
        coordinates: None,
        density,
    })
}
