//! `silvar`: fit, apply and inspect sparse plus low-rank single-index models from
//! CSV data.
//!
//! Exit codes: 0 success, 1 input error, 2 the solver hit its iteration limit
//! (outputs are still written).

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;

use silvar::baselines::FixedLink;
use silvar::evaluation::{embed, grid_search, synthesize, FitKind, GridSpec, SplitSpec, SyntheticLink, SyntheticSpec};
use silvar::io::{
    read_coordinates_json, read_matrix_csv, read_model, read_regression_csv, read_timeseries_csv, sibling_path,
    write_graph_csv, write_graph_nodes_json, write_json, write_matrix_csv, write_model, write_report,
    write_score_table,
};
use silvar::model::{Dataset, SilvarModel};
use silvar::prox::{RegularizerConfig, SparseStructure};
use silvar::solver::{SolverConfig, StepRule};
use silvar::timeseries::{build_ar_dataset, group_norms, to_graph, TimeSeries};
use silvar::{FitReport, Result, SilvarError};

use config::{parse_exponents, RunConfig};

#[derive(Parser)]
#[command(name = "silvar", version, about = "Sparse plus low-rank regression through a learned monotone link")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one model at fixed penalty weights.
    Fit(FitArgs),
    /// Apply a saved model to new inputs.
    Predict(PredictArgs),
    /// Sweep both penalty weights and keep the best validation fit.
    Grid(GridArgs),
    /// Export the sparse part of an autoregressive model as a weighted edge list.
    ExportGraph(ExportGraphArgs),
    /// Project inputs onto the leading directions of the low-rank part.
    Embed(EmbedArgs),
    /// Generate a seeded synthetic problem with known ground truth.
    Synth(SynthArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Input matrix CSV, one variable per row, one sample per column.
    #[arg(long, value_name = "CSV")]
    x: Option<PathBuf>,
    /// Response matrix CSV, same layout as --x.
    #[arg(long, value_name = "CSV")]
    y: Option<PathBuf>,
    /// Time-series CSV (header of series names, one row per time step); fits an AR model.
    #[arg(long, value_name = "CSV", conflicts_with_all = ["x", "y"])]
    timeseries: Option<PathBuf>,
    /// Autoregressive order, or the number of lag blocks stacked in --x. [default: 1]
    #[arg(long, value_name = "M")]
    lags: Option<usize>,
    /// Require every entry to be a non-negative integer count.
    #[arg(long)]
    count: bool,
    /// JSON run configuration; flags override its fields.
    #[arg(long, value_name = "JSON")]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LinkArg {
    /// Learn the link jointly with the coefficients.
    Learned,
    Identity,
    Softplus,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StructureArg {
    /// Elementwise L1 penalty.
    L1,
    /// L2 norm over each coefficient's lags.
    Group,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StepArg {
    Backtracking,
    FixedSpectral,
}

#[derive(Args)]
struct ModelArgs {
    /// Link function.
    #[arg(long, value_enum, default_value_t = LinkArg::Learned)]
    link: LinkArg,
    /// Drop the low-rank part (L = 0).
    #[arg(long)]
    no_lowrank: bool,
    /// Sparse penalty structure. [default: group when lags > 1, else l1]
    #[arg(long, value_enum)]
    sparse_structure: Option<StructureArg>,
}

#[derive(Args)]
struct SolverArgs {
    /// Iteration limit. [default: 1000]
    #[arg(long)]
    max_iters: Option<usize>,
    /// Relative objective change that counts as converged. [default: 1e-6]
    #[arg(long)]
    rel_tol: Option<f64>,
    /// Plain proximal gradient instead of the accelerated scheme.
    #[arg(long)]
    no_acceleration: bool,
    /// Step-size rule. [default: backtracking]
    #[arg(long, value_enum)]
    step_rule: Option<StepArg>,
    /// Fit on raw inputs instead of standardized ones.
    #[arg(long)]
    no_standardize: bool,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Sparse penalty weight. [default: 0.1]
    #[arg(long)]
    lambda_sparse: Option<f64>,
    /// Nuclear-norm penalty weight. [default: 0.1]
    #[arg(long)]
    lambda_lowrank: Option<f64>,
    /// Model JSON output.
    #[arg(long, value_name = "JSON")]
    out: Option<PathBuf>,
    /// Fit report JSON output. [default: not written]
    #[arg(long, value_name = "JSON")]
    report: Option<PathBuf>,
    /// Samples of the fitted link over the training range, as theta,value rows. [default: not written]
    #[arg(long, value_name = "CSV")]
    link_csv: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    /// Model JSON.
    #[arg(long, value_name = "JSON")]
    model: PathBuf,
    /// Input matrix CSV.
    #[arg(long, value_name = "CSV", required_unless_present = "timeseries")]
    x: Option<PathBuf>,
    /// Time-series CSV; inputs are lagged with the model's own order.
    #[arg(long, value_name = "CSV", conflicts_with = "x")]
    timeseries: Option<PathBuf>,
    /// Prediction CSV output.
    #[arg(long, value_name = "CSV")]
    out: PathBuf,
}

#[derive(Args)]
struct GridArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Penalty exponents i (weights 10^(i/4)), as lo:hi or a comma list. [default: -8:12]
    #[arg(long, allow_hyphen_values = true, value_parser = parse_exponents)]
    exponents: Option<GridSpec>,
    /// Worker threads for the sweep. [default: 1]
    #[arg(long)]
    workers: Option<usize>,
    /// Training samples. [default: 60% of samples]
    #[arg(long)]
    train: Option<usize>,
    /// Validation samples. [default: 20% of samples]
    #[arg(long)]
    validation: Option<usize>,
    /// Test samples. [default: the remainder]
    #[arg(long)]
    test: Option<usize>,
    /// Shuffle seed for non-temporal splits. [default: 0]
    #[arg(long)]
    shuffle_seed: Option<u64>,
    /// Selected model JSON output.
    #[arg(long, value_name = "JSON")]
    out: Option<PathBuf>,
    /// Score table CSV output. [default: <out>_scores.csv]
    #[arg(long, value_name = "CSV")]
    scores: Option<PathBuf>,
    /// Fit report JSON of the selected cell. [default: not written]
    #[arg(long, value_name = "JSON")]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct ExportGraphArgs {
    /// Model JSON with square lag blocks.
    #[arg(long, value_name = "JSON")]
    model: PathBuf,
    /// Fraction of the m^2 possible edges to keep.
    #[arg(long, default_value_t = 0.12)]
    density: f64,
    /// Time-series CSV whose header names the nodes. [default: none]
    #[arg(long, value_name = "CSV")]
    timeseries: Option<PathBuf>,
    /// Node coordinates JSON, keyed by series name; needs --timeseries. [default: none]
    #[arg(long, value_name = "JSON", requires = "timeseries")]
    coordinates: Option<PathBuf>,
    /// Edge list CSV output; node table goes to <out>_nodes.json.
    #[arg(long, value_name = "CSV")]
    out: PathBuf,
    /// Per-node self-edge weights as index,weight rows. [default: not written]
    #[arg(long, value_name = "CSV")]
    diagonal: Option<PathBuf>,
}

#[derive(Args)]
struct EmbedArgs {
    /// Model JSON.
    #[arg(long, value_name = "JSON")]
    model: PathBuf,
    /// Input matrix CSV.
    #[arg(long, value_name = "CSV", required_unless_present = "timeseries")]
    x: Option<PathBuf>,
    /// Time-series CSV; inputs are lagged with the model's own order.
    #[arg(long, value_name = "CSV", conflicts_with = "x")]
    timeseries: Option<PathBuf>,
    /// Embedding dimension.
    #[arg(long, default_value_t = 2)]
    rank: usize,
    /// Embedding CSV output, one dimension per row, one sample per column.
    #[arg(long, value_name = "CSV")]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SynthLinkArg {
    Identity,
    ClippedLinear,
    ScaledSoftplus,
}

#[derive(Args)]
struct SynthArgs {
    /// Responses.
    #[arg(long, default_value_t = 20)]
    m: usize,
    /// Inputs.
    #[arg(long, default_value_t = 20)]
    p: usize,
    /// Samples.
    #[arg(long, default_value_t = 2000)]
    n: usize,
    /// Fraction of nonzero entries in the sparse part.
    #[arg(long, default_value_t = 0.1)]
    sparsity: f64,
    /// Rank of the low-rank part.
    #[arg(long, default_value_t = 2)]
    rank: usize,
    /// Generating link.
    #[arg(long, value_enum, default_value_t = SynthLinkArg::ClippedLinear)]
    link_kind: SynthLinkArg,
    /// Standard deviation of the additive Gaussian noise.
    #[arg(long, default_value_t = 0.1)]
    noise_std: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for X.csv, Y.csv, A_true.csv, L_true.csv and spec.json.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

/// Outcome of a command that ran to completion.
enum Status {
    Done,
    NotConverged(FitReport),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.render().to_string();
            eprintln!("{}", text.lines().next().unwrap_or("invalid arguments"));
            return ExitCode::from(1);
        }
    };
    match run(cli.command) {
        Ok(Status::Done) => ExitCode::SUCCESS,
        Ok(Status::NotConverged(report)) => {
            eprintln!(
                "warning: not converged after {} iterations; outputs written anyway",
                report.iterations
            );
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<Status> {
    match command {
        Command::Fit(a) => run_fit(a),
        Command::Predict(a) => run_predict(a),
        Command::Grid(a) => run_grid(a),
        Command::ExportGraph(a) => run_export_graph(a),
        Command::Embed(a) => run_embed(a),
        Command::Synth(a) => run_synth(a),
    }
}

fn status(report: FitReport) -> Status {
    if report.converged {
        Status::Done
    } else {
        Status::NotConverged(report)
    }
}

fn required(path: Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    path.ok_or_else(|| SilvarError::invalid(format!("missing {flag}")))
}

/// Loads the regression problem and returns it with its lag count.
fn load_data(args: &DataArgs, cfg: &RunConfig) -> Result<(Dataset, usize)> {
    let lags = args.lags.or(cfg.lags).unwrap_or(1);
    if lags == 0 {
        return Err(SilvarError::invalid("--lags must be positive"));
    }
    let ts_path = args.timeseries.clone().or(cfg.timeseries.clone());
    let x_path = args.x.clone().or(cfg.x.clone());
    let y_path = args.y.clone().or(cfg.y.clone());
    let data = match (ts_path, x_path, y_path) {
        (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
            return Err(SilvarError::invalid("give either --timeseries or --x/--y, not both"))
        }
        (Some(ts), None, None) => {
            let series = read_timeseries_csv(&ts)?;
            let data = build_ar_dataset(&series, lags)?;
            if args.count {
                silvar::io::CountDataset::new(data)?.into_dataset()
            } else {
                data
            }
        }
        (None, Some(x), Some(y)) => read_regression_csv(&x, &y, args.count)?,
        _ => return Err(SilvarError::invalid("need --timeseries or both --x and --y")),
    };
    if !data.p().is_multiple_of(lags) {
        return Err(SilvarError::invalid(format!(
            "{} input rows cannot be split into {lags} lag blocks",
            data.p()
        )));
    }
    Ok((data, lags))
}

fn solver_config(args: &SolverArgs, cfg: &RunConfig) -> SolverConfig {
    let d = SolverConfig::default();
    SolverConfig {
        max_iters: args.max_iters.or(cfg.max_iters).unwrap_or(d.max_iters),
        rel_tol: args.rel_tol.or(cfg.rel_tol).unwrap_or(d.rel_tol),
        acceleration: if args.no_acceleration {
            false
        } else {
            cfg.acceleration.unwrap_or(d.acceleration)
        },
        step_rule: match args.step_rule {
            Some(StepArg::Backtracking) => StepRule::Backtracking,
            Some(StepArg::FixedSpectral) => StepRule::FixedSpectral,
            None => cfg.step_rule.unwrap_or(d.step_rule),
        },
        backtracking_shrink: cfg.backtracking_shrink.unwrap_or(d.backtracking_shrink),
        standardize_inputs: if args.no_standardize {
            false
        } else {
            cfg.standardize_inputs.unwrap_or(d.standardize_inputs)
        },
        link_update_every: cfg.link_update_every.unwrap_or(d.link_update_every),
    }
}

fn regularizer(args: &ModelArgs, cfg: &RunConfig, lags: usize, ls: Option<f64>, ll: Option<f64>) -> RegularizerConfig {
    let d = RegularizerConfig::default();
    let sparse_structure = match args.sparse_structure {
        Some(StructureArg::L1) => SparseStructure::ElementwiseL1,
        Some(StructureArg::Group) => SparseStructure::LagGroupL2,
        None => cfg.sparse_structure.unwrap_or(if lags > 1 {
            SparseStructure::LagGroupL2
        } else {
            SparseStructure::ElementwiseL1
        }),
    };
    RegularizerConfig {
        lambda_sparse: ls.or(cfg.lambda_sparse).unwrap_or(d.lambda_sparse),
        lambda_lowrank: ll.or(cfg.lambda_lowrank).unwrap_or(d.lambda_lowrank),
        sparse_structure,
        lag_count: lags,
    }
}

fn fit_kind(args: &ModelArgs) -> FitKind {
    let fixed = |link| {
        if args.no_lowrank {
            FitKind::SparseGlm(link)
        } else {
            FitKind::Glm(link)
        }
    };
    match (args.link, args.no_lowrank) {
        (LinkArg::Learned, false) => FitKind::Silvar,
        (LinkArg::Learned, true) => FitKind::SparseSim,
        (LinkArg::Identity, _) => fixed(FixedLink::Identity),
        (LinkArg::Softplus, _) => fixed(FixedLink::Softplus),
    }
}

fn run_fit(a: FitArgs) -> Result<Status> {
    let cfg = RunConfig::load(a.data.config.as_deref())?;
    let out = required(a.out.clone().or(cfg.out.clone()), "--out")?;
    let report_path = a.report.clone().or(cfg.report.clone());
    let (data, lags) = load_data(&a.data, &cfg)?;
    let solver = solver_config(&a.solver, &cfg);
    let reg = regularizer(&a.model, &cfg, lags, a.lambda_sparse, a.lambda_lowrank);

    let (model, report) = fit_kind(&a.model).fit(&data, &reg, &solver)?;
    write_model(&out, &model)?;
    if let Some(p) = report_path {
        write_report(p, &report)?;
    }
    if let Some(p) = &a.link_csv {
        write_link_samples(p, &model, data.x())?;
    }
    Ok(status(report))
}

/// 200 evenly spaced samples of the link over the range of fitted linear responses.
fn write_link_samples(path: &Path, model: &SilvarModel, x: &DMatrix<f64>) -> Result<()> {
    let theta = model.linear_response(&model.standardization.apply(x)?)?;
    let lo = theta.min();
    let hi = theta.max();
    const POINTS: usize = 200;
    let mut text = String::from("theta,value\n");
    for k in 0..POINTS {
        let t = lo + (hi - lo) * k as f64 / (POINTS - 1) as f64;
        text.push_str(&format!("{t},{}\n", model.link.evaluate(t)));
    }
    fs::write(path, text).map_err(|source| SilvarError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Inputs for a saved model: a matrix CSV, or a series lagged to the model's order.
fn model_inputs(model: &SilvarModel, x: Option<&Path>, ts: Option<&Path>) -> Result<DMatrix<f64>> {
    let x = match (x, ts) {
        (Some(x), _) => read_matrix_csv(x)?,
        (None, Some(ts)) => build_ar_dataset(&read_timeseries_csv(ts)?, model.lag_count)?.x().clone(),
        (None, None) => return Err(SilvarError::invalid("need --x or --timeseries")),
    };
    if x.nrows() != model.input_dim() {
        return Err(SilvarError::invalid(format!(
            "input has {} rows but the model expects {}",
            x.nrows(),
            model.input_dim()
        )));
    }
    Ok(x)
}

fn run_predict(a: PredictArgs) -> Result<Status> {
    let model = read_model(&a.model)?;
    let x = model_inputs(&model, a.x.as_deref(), a.timeseries.as_deref())?;
    write_matrix_csv(&a.out, &model.predict(&x)?)?;
    Ok(Status::Done)
}

fn default_split(n: usize) -> (usize, usize, usize) {
    let train = n * 6 / 10;
    let validation = n * 2 / 10;
    (train, validation, n - train - validation)
}

fn run_grid(a: GridArgs) -> Result<Status> {
    let cfg = RunConfig::load(a.data.config.as_deref())?;
    let out = required(a.out.clone().or(cfg.out.clone()), "--out")?;
    let scores = a.scores.clone().unwrap_or_else(|| sibling_path(&out, "_scores", "csv"));
    let report_path = a.report.clone().or(cfg.report.clone());
    let (data, lags) = load_data(&a.data, &cfg)?;
    let solver = solver_config(&a.solver, &cfg);
    let reg = regularizer(&a.model, &cfg, lags, None, None);
    let grid = a.exponents.clone().or(cfg.grid.clone()).unwrap_or_default();

    let base = cfg.split.unwrap_or_else(|| {
        let (train_count, validation_count, test_count) = default_split(data.n());
        SplitSpec {
            train_count,
            validation_count,
            test_count,
            shuffle_seed: 0,
        }
    });
    let split = SplitSpec {
        train_count: a.train.unwrap_or(base.train_count),
        validation_count: a.validation.unwrap_or(base.validation_count),
        test_count: a.test.unwrap_or(base.test_count),
        shuffle_seed: a.shuffle_seed.unwrap_or(base.shuffle_seed),
    };
    let workers = a.workers.or(cfg.workers).unwrap_or(1);
    if workers == 0 {
        return Err(SilvarError::invalid("--workers must be positive"));
    }

    let res = grid_search(&data, &split, &grid, &reg, &solver, fit_kind(&a.model), workers)?;
    write_score_table(&scores, &res.table)?;
    write_model(&out, &res.best_model)?;
    if let Some(p) = report_path {
        write_report(p, &res.best_report)?;
    }
    Ok(status(res.best_report))
}

fn run_export_graph(a: ExportGraphArgs) -> Result<Status> {
    let model = read_model(&a.model)?;
    let mut graph = to_graph(&model, a.density)?;
    if let Some(ts_path) = &a.timeseries {
        let mut series: TimeSeries = read_timeseries_csv(ts_path)?;
        if series.m() != graph.node_count {
            return Err(SilvarError::invalid(format!(
                "{} has {} series but the model has {} nodes",
                ts_path.display(),
                series.m(),
                graph.node_count
            )));
        }
        if let Some(c) = &a.coordinates {
            read_coordinates_json(c, &mut series)?;
        }
        graph.node_names = series.series_names;
        graph.coordinates = series.coordinates;
    }
    write_graph_csv(&a.out, &graph)?;
    write_graph_nodes_json(sibling_path(&a.out, "_nodes", "json"), &graph)?;
    if let Some(p) = &a.diagonal {
        let norms = group_norms(&model)?;
        let mut text = String::from("index,weight\n");
        for i in 0..norms.nrows() {
            text.push_str(&format!("{i},{}\n", norms[(i, i)]));
        }
        fs::write(p, text).map_err(|source| SilvarError::Io {
            path: p.clone(),
            source,
        })?;
    }
    Ok(Status::Done)
}

fn run_embed(a: EmbedArgs) -> Result<Status> {
    let model = read_model(&a.model)?;
    let x = model_inputs(&model, a.x.as_deref(), a.timeseries.as_deref())?;
    write_matrix_csv(&a.out, &embed(&model, &x, a.rank)?)?;
    Ok(Status::Done)
}

fn run_synth(a: SynthArgs) -> Result<Status> {
    let spec = SyntheticSpec {
        m: a.m,
        p: a.p,
        n: a.n,
        sparsity: a.sparsity,
        rank: a.rank,
        link_kind: match a.link_kind {
            SynthLinkArg::Identity => SyntheticLink::Identity,
            SynthLinkArg::ClippedLinear => SyntheticLink::ClippedLinear,
            SynthLinkArg::ScaledSoftplus => SyntheticLink::ScaledSoftplus,
        },
        noise_std: a.noise_std,
        seed: a.seed,
    };
    let data = synthesize(&spec)?;
    fs::create_dir_all(&a.out).map_err(|source| SilvarError::Io {
        path: a.out.clone(),
        source,
    })?;
    write_matrix_csv(a.out.join("X.csv"), data.dataset.x())?;
    write_matrix_csv(a.out.join("Y.csv"), data.dataset.y())?;
    write_matrix_csv(a.out.join("A_true.csv"), &data.a_true)?;
    write_matrix_csv(a.out.join("L_true.csv"), &data.l_true)?;
    write_json(a.out.join("spec.json"), &spec)?;
    Ok(Status::Done)
}
