//! CSV and JSON readers and writers.
//!
//! Regression CSVs store one variable per row and one sample per column, with no
//! header. Time-series CSVs are the transpose: a header of series names, then one
//! row per time step. Numbers are written in Rust's shortest round-trip form, so a
//! written file reads back bit-for-bit.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SilvarError};
use crate::evaluation::GridRow;
use crate::model::{Dataset, SilvarModel};
use crate::solver::FitReport;
use crate::timeseries::{GraphExport, TimeSeries};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SilvarError + '_ {
    move |source| SilvarError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path, e: csv::Error) -> SilvarError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => SilvarError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => SilvarError::Parse {
            path: path.to_path_buf(),
            row: line,
            col: 0,
            msg: format!("{other:?}"),
        },
    }
}

fn parse_cell(path: &Path, row: usize, col: usize, cell: &str) -> Result<f64> {
    let v: f64 = cell.trim().parse().map_err(|_| SilvarError::Parse {
        path: path.to_path_buf(),
        row,
        col,
        msg: format!("not a number: {cell:?}"),
    })?;
    if !v.is_finite() {
        return Err(SilvarError::Parse {
            path: path.to_path_buf(),
            row,
            col,
            msg: format!("non-finite value {cell:?}"),
        });
    }
    Ok(v)
}

/// Raw rows of a CSV file paired with their 1-based line numbers.
fn read_records(path: &Path, has_header: bool) -> Result<(Option<Vec<String>>, Vec<(usize, csv::StringRecord)>)> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(file);
    let mut header = None;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        if has_header && header.is_none() {
            header = Some(rec.iter().map(|s| s.trim().to_string()).collect());
            continue;
        }
        rows.push((line, rec));
    }
    Ok((header, rows))
}

fn ragged(path: &Path, line: usize, got: usize, want: usize) -> SilvarError {
    SilvarError::Parse {
        path: path.to_path_buf(),
        row: line,
        col: got.min(want) + 1,
        msg: format!("expected {want} fields, found {got}"),
    }
}

const TIME_COLUMNS: [&str; 3] = ["timestamp", "date", "time"];

/// Reads a header-first time-series CSV. A leading column named `timestamp`,
/// `date` or `time` is kept as labels rather than parsed.
pub fn read_timeseries_csv(path: impl AsRef<Path>) -> Result<TimeSeries> {
    let path = path.as_ref();
    let (header, rows) = read_records(path, true)?;
    let header = header.ok_or_else(|| SilvarError::invalid(format!("{}: empty file", path.display())))?;
    let has_time = header
        .first()
        .is_some_and(|h| TIME_COLUMNS.contains(&h.to_ascii_lowercase().as_str()));
    let offset = usize::from(has_time);
    let names: Vec<String> = header[offset..].to_vec();
    if names.is_empty() {
        return Err(SilvarError::invalid(format!("{}: no series columns", path.display())));
    }
    if rows.len() < 2 {
        return Err(SilvarError::invalid(format!(
            "{}: fewer than 2 time steps",
            path.display()
        )));
    }
    let m = names.len();
    let t = rows.len();
    let mut values = DMatrix::zeros(m, t);
    let mut stamps = Vec::with_capacity(t);
    for (step, (line, rec)) in rows.iter().enumerate() {
        if rec.len() != header.len() {
            return Err(ragged(path, *line, rec.len(), header.len()));
        }
        if has_time {
            stamps.push(rec[0].trim().to_string());
        }
        for s in 0..m {
            values[(s, step)] = parse_cell(path, *line, s + offset + 1, &rec[s + offset])?;
        }
    }
    let mut ts = TimeSeries::new(values)?;
    ts.series_names = Some(names);
    if has_time {
        ts.timestamps = Some(stamps);
    }
    Ok(ts)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CoordinatesFile {
    coordinates: BTreeMap<String, [f64; 2]>,
}

/// Attaches `(longitude, latitude)` pairs from `{"coordinates": {"name": [lon, lat]}}`
/// to the matching series. Series missing from the file get `None`.
pub fn read_coordinates_json(path: impl AsRef<Path>, series: &mut TimeSeries) -> Result<()> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let file: CoordinatesFile = serde_json::from_str(&text)?;
    let names = series
        .series_names
        .as_ref()
        .ok_or_else(|| SilvarError::invalid("coordinates need named series"))?;
    for name in file.coordinates.keys() {
        if !names.contains(name) {
            return Err(SilvarError::invalid(format!("coordinates for unknown series {name:?}")));
        }
    }
    series.coordinates = Some(
        names
            .iter()
            .map(|n| file.coordinates.get(n).map(|c| (c[0], c[1])))
            .collect(),
    );
    Ok(())
}

/// Headerless numeric matrix, one CSV row per matrix row.
pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let (_, rows) = read_records(path, false)?;
    if rows.is_empty() {
        return Err(SilvarError::invalid(format!("{}: no rows", path.display())));
    }
    let ncols = rows[0].1.len();
    let mut out = DMatrix::zeros(rows.len(), ncols);
    for (i, (line, rec)) in rows.iter().enumerate() {
        if rec.len() != ncols {
            return Err(ragged(path, *line, rec.len(), ncols));
        }
        for (j, cell) in rec.iter().enumerate() {
            out[(i, j)] = parse_cell(path, *line, j + 1, cell)?;
        }
    }
    Ok(out)
}

/// Dataset whose entries are all non-negative integers.
#[derive(Debug, Clone, PartialEq)]
pub struct CountDataset(Dataset);

impl CountDataset {
    pub fn new(data: Dataset) -> Result<Self> {
        for (name, mat) in [("X", data.x()), ("Y", data.y())] {
            if let Some((k, v)) = mat.iter().enumerate().find(|(_, v)| **v < 0.0 || v.fract() != 0.0) {
                let (i, j) = (k % mat.nrows(), k / mat.nrows());
                return Err(SilvarError::invalid(format!(
                    "{name}[{},{}] = {v} is not a non-negative integer count",
                    i + 1,
                    j + 1
                )));
            }
        }
        Ok(Self(data))
    }

    pub fn dataset(&self) -> &Dataset {
        &self.0
    }

    pub fn into_dataset(self) -> Dataset {
        self.0
    }
}

/// `X` (`p x n`) and `Y` (`m x n`) from headerless variable-per-row CSVs. With
/// `counts` set, every entry must be a non-negative integer.
pub fn read_regression_csv(x_path: impl AsRef<Path>, y_path: impl AsRef<Path>, counts: bool) -> Result<Dataset> {
    let x = read_matrix_csv(&x_path)?;
    let y = read_matrix_csv(&y_path)?;
    if x.ncols() != y.ncols() {
        return Err(SilvarError::invalid(format!(
            "sample counts differ: {} vs {} columns in {} and {}",
            x.ncols(),
            y.ncols(),
            x_path.as_ref().display(),
            y_path.as_ref().display()
        )));
    }
    let data = Dataset::new(x, y)?;
    if counts {
        Ok(CountDataset::new(data)?.into_dataset())
    } else {
        Ok(data)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

fn finish(path: &Path, mut w: BufWriter<File>) -> Result<()> {
    w.flush().map_err(io_err(path))
}

pub fn write_model(path: impl AsRef<Path>, model: &SilvarModel) -> Result<()> {
    let path = path.as_ref();
    let mut text = model.to_json()?;
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}

pub fn read_model(path: impl AsRef<Path>) -> Result<SilvarModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    SilvarModel::from_json(&text)
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}

pub fn write_report(path: impl AsRef<Path>, report: &FitReport) -> Result<()> {
    write_json(path, report)
}

pub fn write_matrix_csv(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(",")).map_err(io_err(path))?;
    }
    finish(path, w)
}

pub const SCORE_TABLE_HEADER: &str = "lambda_sparse,lambda_lowrank,val_rmse,test_rmse,iters,converged";

pub fn write_score_table(path: impl AsRef<Path>, table: &[GridRow]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    writeln!(w, "{SCORE_TABLE_HEADER}").map_err(io_err(path))?;
    for r in table {
        let test = r.test_rmse.map(|v| v.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.lambda_sparse, r.lambda_lowrank, r.val_rmse, test, r.iters, r.converged
        )
        .map_err(io_err(path))?;
    }
    finish(path, w)
}

/// Edge list `source,target,weight` with 0-based node indices.
pub fn write_graph_csv(path: impl AsRef<Path>, graph: &GraphExport) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    writeln!(w, "source,target,weight").map_err(io_err(path))?;
    for e in &graph.edges {
        writeln!(w, "{},{},{}", e.source, e.target, e.weight).map_err(io_err(path))?;
    }
    finish(path, w)
}

#[derive(Serialize)]
struct NodeRecord<'a> {
    index: usize,
    name: Option<&'a str>,
    longitude: Option<f64>,
    latitude: Option<f64>,
}

#[derive(Serialize)]
struct NodesFile<'a> {
    density: f64,
    nodes: Vec<NodeRecord<'a>>,
}

/// Companion node file for an edge list: names and coordinates when known.
pub fn write_graph_nodes_json(path: impl AsRef<Path>, graph: &GraphExport) -> Result<()> {
    let nodes = (0..graph.node_count)
        .map(|i| {
            let coord = graph.coordinates.as_ref().and_then(|c| c[i]);
            NodeRecord {
                index: i,
                name: graph.node_names.as_ref().map(|n| n[i].as_str()),
                longitude: coord.map(|c| c.0),
                latitude: coord.map(|c| c.1),
            }
        })
        .collect();
    write_json(
        path,
        &NodesFile {
            density: graph.density,
            nodes,
        },
    )
}

/// Path with `suffix` appended to the file stem, keeping the extension.
pub fn sibling_path(path: &Path, suffix: &str, ext: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}.{ext}"))
}
