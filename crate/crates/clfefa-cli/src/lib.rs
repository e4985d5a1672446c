//! Config-driven runner: fit, evaluate, grid search, and transform, all
//! reproducible from a key=value config file plus a seed.
//!
//! Every command echoes its configuration verbatim into the output
//! directory, so a run can be replayed from the artifacts alone. Errors
//! carry their typed name to stderr and map to stable exit codes by family
//! (see `exit_code`).

use clfefa::dataset::{Dataset, NormalizeScheme, SupervisionMode, normalize, project};
use clfefa::error::Error as LibError;
use clfefa::eval::{EvalReport, SplitSpec, run_experiment};
use clfefa::params::HyperParams;
use clfefa::trainer::{fit, load_model, save_model};
use rayon::prelude::*;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// CLI failure: either a config-file problem or a library error.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Lib(LibError),
}

impl From<LibError> for CliError {
    fn from(e: LibError) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Lib(LibError::Io(e))
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "ConfigError: {msg}"),
            CliError::Lib(e) => write!(f, "{}: {e}", e.name()),
        }
    }
}

impl CliError {
    /// Exit code by error family: 2 config, 3 data format, 4 shapes,
    /// 5 split/metrics, 6 numerics, 7 io, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Lib(e) => match e {
                LibError::InvalidHyperParams(_)
                | LibError::InvalidDataset(_)
                | LibError::ModeLabelMismatch(_) => 2,
                LibError::BadMagic { .. }
                | LibError::TruncatedPayload { .. }
                | LibError::CountMismatch { .. }
                | LibError::SubsampleTooLarge { .. }
                | LibError::RaggedRows { .. }
                | LibError::NonNumericCell { .. }
                | LibError::MissingColumn(_)
                | LibError::BadModelFile(_) => 3,
                LibError::DimensionMismatch { .. } => 4,
                LibError::SplitInfeasible(_)
                | LibError::EmptyTrainingSet
                | LibError::LengthMismatch { .. } => 5,
                LibError::NonFiniteInput { .. }
                | LibError::NonFiniteIntermediate { .. }
                | LibError::NonFinite { .. }
                | LibError::EigenFailure { .. }
                | LibError::InsufficientNeighbors { .. }
                | LibError::DegenerateRow { .. } => 6,
                LibError::Io(_) => 7,
            },
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Where the samples come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Blobs { n_per_class: usize, classes: usize, dim: usize, separation: f64, noise_std: f64, seed: u64 },
    Idx { images: PathBuf, labels: PathBuf, subsample: usize, side: usize },
    Csv { path: PathBuf, label_column: Option<String> },
}

/// Normalization choice; `Auto` picks from the data range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalizeChoice {
    Auto,
    Fixed(NormalizeScheme),
}

/// Everything a run needs, parseable from a key=value file with full
/// defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub source: DataSource,
    pub normalize: NormalizeChoice,
    pub mode: SupervisionMode,
    pub params: HyperParams,
    pub split: SplitSpec,
    pub grid_sigma: Vec<f64>,
    pub grid_lambda: Vec<f64>,
    pub grid_k: Vec<usize>,
    pub grid_d: Vec<usize>,
    pub dump_similarity: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Blobs {
                n_per_class: 30,
                classes: 3,
                dim: 5,
                separation: 10.0,
                noise_std: 0.5,
                seed: 7,
            },
            normalize: NormalizeChoice::Auto,
            mode: SupervisionMode::Unsupervised,
            params: HyperParams { k: 6, c: 3, d: 2, ..Default::default() },
            split: SplitSpec::default(),
            grid_sigma: vec![0.01, 0.1, 1.0, 10.0, 100.0, 1000.0],
            grid_lambda: vec![1e-4, 1e-2, 1.0, 1e2, 1e4],
            grid_k: vec![2, 6, 10],
            grid_d: vec![2],
            dump_similarity: false,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> CliResult<T> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("bad value {value:?} for key {key:?}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> CliResult<Vec<T>> {
    let items: Result<Vec<T>, _> = value.split(',').map(|s| s.trim().parse()).collect();
    items.map_err(|_| CliError::Config(format!("bad list {value:?} for key {key:?}")))
}

impl RunConfig {
    /// Parse config text over the defaults; unknown keys are errors that
    /// name the key.
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut cfg = RunConfig::default();
        let mut blobs = (30usize, 3usize, 5usize, 10.0f64, 0.5f64, 7u64);
        let mut idx_images: Option<PathBuf> = None;
        let mut idx_labels: Option<PathBuf> = None;
        let mut idx_subsample = 0usize;
        let mut idx_side = 0usize;
        let mut csv_path: Option<PathBuf> = None;
        let mut csv_label: Option<String> = None;
        let mut source_kind = "blobs".to_string();

        for raw in text.lines() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("expected key = value, got {line:?}")))?;
            let key = key.trim();
            let value = value.trim();
            match key {
                "data.source" => source_kind = value.to_string(),
                "data.normalize" => {
                    cfg.normalize = match value {
                        "auto" => NormalizeChoice::Auto,
                        "none" => NormalizeChoice::Fixed(NormalizeScheme::None),
                        "unit_range" => NormalizeChoice::Fixed(NormalizeScheme::UnitRange),
                        "zscore" => NormalizeChoice::Fixed(NormalizeScheme::ZScore),
                        other => {
                            return Err(CliError::Config(format!(
                                "bad value {other:?} for key \"data.normalize\""
                            )));
                        }
                    }
                }
                "blobs.n_per_class" => blobs.0 = parse_value(key, value)?,
                "blobs.classes" => blobs.1 = parse_value(key, value)?,
                "blobs.dim" => blobs.2 = parse_value(key, value)?,
                "blobs.separation" => blobs.3 = parse_value(key, value)?,
                "blobs.noise_std" => blobs.4 = parse_value(key, value)?,
                "blobs.seed" => blobs.5 = parse_value(key, value)?,
                "idx.images" => idx_images = Some(PathBuf::from(value)),
                "idx.labels" => idx_labels = Some(PathBuf::from(value)),
                "idx.subsample" => idx_subsample = parse_value(key, value)?,
                "idx.side" => idx_side = parse_value(key, value)?,
                "csv.path" => csv_path = Some(PathBuf::from(value)),
                "csv.label_column" => csv_label = Some(value.to_string()),
                "mode" => {
                    cfg.mode = match value {
                        "unsupervised" => SupervisionMode::Unsupervised,
                        "supervised" => SupervisionMode::Supervised,
                        "semi_supervised" => SupervisionMode::SemiSupervised,
                        other => {
                            return Err(CliError::Config(format!(
                                "bad value {other:?} for key \"mode\""
                            )));
                        }
                    }
                }
                "sigma" => cfg.params.sigma = parse_value(key, value)?,
                "lambda" => cfg.params.lambda = parse_value(key, value)?,
                "k" => cfg.params.k = parse_value(key, value)?,
                "c" => cfg.params.c = parse_value(key, value)?,
                "d" => cfg.params.d = parse_value(key, value)?,
                "alpha" => cfg.params.adam.alpha = parse_value(key, value)?,
                "beta1" => cfg.params.adam.beta1 = parse_value(key, value)?,
                "beta2" => cfg.params.adam.beta2 = parse_value(key, value)?,
                "epsilon" => cfg.params.adam.epsilon = parse_value(key, value)?,
                "tol_inner" => cfg.params.tol_inner = parse_value(key, value)?,
                "tol_outer" => cfg.params.tol_outer = parse_value(key, value)?,
                "max_inner" => cfg.params.max_inner = parse_value(key, value)?,
                "max_outer" => cfg.params.max_outer = parse_value(key, value)?,
                "seed" => cfg.params.seed = parse_value(key, value)?,
                "include_self_softmax" => cfg.params.include_self_softmax = parse_value(key, value)?,
                "adaptive_lambda" => cfg.params.adaptive_lambda = parse_value(key, value)?,
                "random_init" => cfg.params.random_init = parse_value(key, value)?,
                "split.train_per_class" => cfg.split.train_per_class = parse_value(key, value)?,
                "split.repeats" => cfg.split.repeats = parse_value(key, value)?,
                "split.seed" => cfg.split.seed = parse_value(key, value)?,
                "split.labeled_fraction" => cfg.split.labeled_fraction = parse_value(key, value)?,
                "grid.sigma" => cfg.grid_sigma = parse_list(key, value)?,
                "grid.lambda" => cfg.grid_lambda = parse_list(key, value)?,
                "grid.k" => cfg.grid_k = parse_list(key, value)?,
                "grid.d" => cfg.grid_d = parse_list(key, value)?,
                "dump_similarity" => cfg.dump_similarity = parse_value(key, value)?,
                other => {
                    return Err(CliError::Config(format!("unknown config key {other:?}")));
                }
            }
        }

        cfg.source = match source_kind.as_str() {
            "blobs" => DataSource::Blobs {
                n_per_class: blobs.0,
                classes: blobs.1,
                dim: blobs.2,
                separation: blobs.3,
                noise_std: blobs.4,
                seed: blobs.5,
            },
            "idx" => DataSource::Idx {
                images: idx_images
                    .ok_or_else(|| CliError::Config("idx source needs \"idx.images\"".into()))?,
                labels: idx_labels
                    .ok_or_else(|| CliError::Config("idx source needs \"idx.labels\"".into()))?,
                subsample: idx_subsample,
                side: idx_side,
            },
            "csv" => DataSource::Csv {
                path: csv_path
                    .ok_or_else(|| CliError::Config("csv source needs \"csv.path\"".into()))?,
                label_column: csv_label,
            },
            other => {
                return Err(CliError::Config(format!(
                    "bad value {other:?} for key \"data.source\""
                )));
            }
        };
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> CliResult<(Self, String)> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {path:?}: {e}")))?;
        Ok((Self::parse(&text)?, text))
    }

    /// Render the effective configuration as config-file text; used as the
    /// echo when a run has no config file.
    pub fn render(&self) -> String {
        let mut out = String::new();
        match &self.source {
            DataSource::Blobs { n_per_class, classes, dim, separation, noise_std, seed } => {
                out.push_str("data.source = blobs\n");
                let _ = writeln!(out, "blobs.n_per_class = {n_per_class}");
                let _ = writeln!(out, "blobs.classes = {classes}");
                let _ = writeln!(out, "blobs.dim = {dim}");
                let _ = writeln!(out, "blobs.separation = {separation}");
                let _ = writeln!(out, "blobs.noise_std = {noise_std}");
                let _ = writeln!(out, "blobs.seed = {seed}");
            }
            DataSource::Idx { images, labels, subsample, side } => {
                out.push_str("data.source = idx\n");
                let _ = writeln!(out, "idx.images = {}", images.display());
                let _ = writeln!(out, "idx.labels = {}", labels.display());
                let _ = writeln!(out, "idx.subsample = {subsample}");
                let _ = writeln!(out, "idx.side = {side}");
            }
            DataSource::Csv { path, label_column } => {
                out.push_str("data.source = csv\n");
                let _ = writeln!(out, "csv.path = {}", path.display());
                if let Some(l) = label_column {
                    let _ = writeln!(out, "csv.label_column = {l}");
                }
            }
        }
        let norm = match self.normalize {
            NormalizeChoice::Auto => "auto",
            NormalizeChoice::Fixed(NormalizeScheme::None) => "none",
            NormalizeChoice::Fixed(NormalizeScheme::UnitRange) => "unit_range",
            NormalizeChoice::Fixed(NormalizeScheme::ZScore) => "zscore",
        };
        let _ = writeln!(out, "data.normalize = {norm}");
        let _ = writeln!(out, "mode = {}", self.mode);
        let p = &self.params;
        let _ = writeln!(out, "sigma = {}", p.sigma);
        let _ = writeln!(out, "lambda = {}", p.lambda);
        let _ = writeln!(out, "k = {}", p.k);
        let _ = writeln!(out, "c = {}", p.c);
        let _ = writeln!(out, "d = {}", p.d);
        let _ = writeln!(out, "alpha = {}", p.adam.alpha);
        let _ = writeln!(out, "beta1 = {}", p.adam.beta1);
        let _ = writeln!(out, "beta2 = {}", p.adam.beta2);
        let _ = writeln!(out, "epsilon = {}", p.adam.epsilon);
        let _ = writeln!(out, "tol_inner = {}", p.tol_inner);
        let _ = writeln!(out, "tol_outer = {}", p.tol_outer);
        let _ = writeln!(out, "max_inner = {}", p.max_inner);
        let _ = writeln!(out, "max_outer = {}", p.max_outer);
        let _ = writeln!(out, "seed = {}", p.seed);
        let _ = writeln!(out, "include_self_softmax = {}", p.include_self_softmax);
        let _ = writeln!(out, "adaptive_lambda = {}", p.adaptive_lambda);
        let _ = writeln!(out, "random_init = {}", p.random_init);
        let _ = writeln!(out, "split.train_per_class = {}", self.split.train_per_class);
        let _ = writeln!(out, "split.repeats = {}", self.split.repeats);
        let _ = writeln!(out, "split.seed = {}", self.split.seed);
        let _ = writeln!(out, "split.labeled_fraction = {}", self.split.labeled_fraction);
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let joinu = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let _ = writeln!(out, "grid.sigma = {}", join(&self.grid_sigma));
        let _ = writeln!(out, "grid.lambda = {}", join(&self.grid_lambda));
        let _ = writeln!(out, "grid.k = {}", joinu(&self.grid_k));
        let _ = writeln!(out, "grid.d = {}", joinu(&self.grid_d));
        let _ = writeln!(out, "dump_similarity = {}", self.dump_similarity);
        out
    }

    /// Load and normalize the configured dataset.
    pub fn load_dataset(&self) -> CliResult<Dataset> {
        let raw = match &self.source {
            DataSource::Blobs { n_per_class, classes, dim, separation, noise_std, seed } => {
                clfefa::ingest::make_blobs(*n_per_class, *classes, *dim, *separation, *noise_std, *seed)?
            }
            DataSource::Idx { images, labels, subsample, side } => {
                let ds = clfefa::ingest::load_idx(images, labels)?;
                let keep = if *subsample == 0 { ds.len() } else { *subsample };
                let target_side = if *side == 0 {
                    (ds.dim() as f64).sqrt().round() as usize
                } else {
                    *side
                };
                if keep != ds.len() || target_side * target_side != ds.dim() {
                    clfefa::ingest::subsample_and_rescale(&ds, keep, target_side, self.params.seed)?
                } else {
                    ds
                }
            }
            DataSource::Csv { path, label_column } => {
                clfefa::ingest::load_csv(path, label_column.as_deref())?
            }
        };
        let scheme = match self.normalize {
            NormalizeChoice::Fixed(s) => s,
            NormalizeChoice::Auto => auto_scheme(&raw),
        };
        Ok(normalize(&raw, scheme)?)
    }
}

/// Range-based normalization pick: unit data stays put, 8-bit pixel ranges
/// divide by 255, anything else gets feature z-scores.
pub fn auto_scheme(ds: &Dataset) -> NormalizeScheme {
    let lo = ds.x().iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ds.x().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo >= 0.0 && hi <= 1.0 {
        NormalizeScheme::None
    } else if lo >= 0.0 && hi <= 255.0 {
        NormalizeScheme::UnitRange
    } else {
        NormalizeScheme::ZScore
    }
}

fn ensure_out_dir(out: &Path) -> CliResult<()> {
    std::fs::create_dir_all(out)?;
    Ok(())
}

fn write_echo(out: &Path, echo: &str) -> CliResult<()> {
    std::fs::write(out.join("config.echo"), echo)?;
    Ok(())
}

/// Fit a model and write `model.clfefa`, `fit_report.json`, and
/// `loss_trace.csv` (plus `similarity.coo` when requested).
pub fn cmd_fit(config: &RunConfig, echo: &str, out: &Path) -> CliResult<()> {
    ensure_out_dir(out)?;
    write_echo(out, echo)?;
    let dataset = config.load_dataset()?;
    let report = fit(&dataset, config.mode, &config.params)?;
    save_model(&out.join("model.clfefa"), &report.projection, &config.params)?;
    let summary = report.summary(&dataset, config.mode);
    std::fs::write(
        out.join("fit_report.json"),
        serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )?;
    std::fs::write(out.join("loss_trace.csv"), report.loss_trace_csv())?;
    if config.dump_similarity {
        std::fs::write(out.join("similarity.coo"), report.similarity.to_coo_string())?;
    }
    Ok(())
}

/// Run the split/fit/1-NN protocol and write `eval_report.json` and
/// `eval_report.csv`.
pub fn cmd_evaluate(config: &RunConfig, echo: &str, out: &Path) -> CliResult<EvalReport> {
    ensure_out_dir(out)?;
    write_echo(out, echo)?;
    let dataset = config.load_dataset()?;
    let report = run_experiment(&dataset, config.mode, &config.params, &config.split)?;
    std::fs::write(out.join("eval_report.json"), report.to_json())?;
    std::fs::write(out.join("eval_report.csv"), report.to_csv())?;
    Ok(report)
}

/// One grid cell's outcome.
#[derive(Debug, Clone)]
pub struct GridCell {
    pub cell: usize,
    pub sigma: f64,
    pub lambda: f64,
    pub k: usize,
    pub d: usize,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub recall_mean: f64,
    pub recall_std: f64,
    pub best: bool,
}

/// Cartesian search over σ×λ×k×d; each cell runs the full evaluate
/// protocol under a seed derived from the cell index, so cell order and
/// scheduling cannot change results. Best cell by mean accuracy.
pub fn run_grid(config: &RunConfig, dataset: &Dataset) -> CliResult<Vec<GridCell>> {
    let mut lambdas = config.grid_lambda.clone();
    if config.mode == SupervisionMode::Supervised && lambdas.iter().any(|l| *l != 0.0) {
        eprintln!("warning: supervised mode forces lambda = 0; ignoring the lambda grid");
        lambdas = vec![0.0];
    }
    if config.grid_sigma.is_empty()
        || lambdas.is_empty()
        || config.grid_k.is_empty()
        || config.grid_d.is_empty()
    {
        return Err(CliError::Config("grids must be nonempty".into()));
    }
    let mut cells = Vec::new();
    for &sigma in &config.grid_sigma {
        for &lambda in &lambdas {
            for &k in &config.grid_k {
                for &d in &config.grid_d {
                    cells.push((sigma, lambda, k, d));
                }
            }
        }
    }
    let results: Vec<(usize, EvalReport)> = cells
        .par_iter()
        .enumerate()
        .map(|(idx, &(sigma, lambda, k, d))| -> CliResult<(usize, EvalReport)> {
            let mut params = config.params.clone();
            params.sigma = sigma;
            params.lambda = lambda;
            params.k = k;
            params.d = d;
            params.seed = config.params.seed.wrapping_add(idx as u64);
            let mut split = config.split;
            split.seed = config.split.seed.wrapping_add(idx as u64);
            let report = run_experiment(dataset, config.mode, &params, &split)?;
            Ok((idx, report))
        })
        .collect::<CliResult<Vec<_>>>()?;

    let best_idx = results
        .iter()
        .max_by(|a, b| {
            a.1.accuracy_mean
                .partial_cmp(&b.1.accuracy_mean)
                .unwrap()
                .then(b.0.cmp(&a.0))
        })
        .map(|(i, _)| *i)
        .expect("at least one cell");

    Ok(results
        .into_iter()
        .map(|(idx, report)| {
            let (sigma, lambda, k, d) = cells[idx];
            GridCell {
                cell: idx,
                sigma,
                lambda,
                k,
                d,
                accuracy_mean: report.accuracy_mean,
                accuracy_std: report.accuracy_std,
                recall_mean: report.recall_mean,
                recall_std: report.recall_std,
                best: idx == best_idx,
            }
        })
        .collect())
}

/// CSV rendering of grid results, one row per cell.
pub fn grid_csv(cells: &[GridCell]) -> String {
    let mut out =
        String::from("cell,sigma,lambda,k,d,accuracy_mean,accuracy_std,recall_mean,recall_std,best\n");
    for c in cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            c.cell,
            c.sigma,
            c.lambda,
            c.k,
            c.d,
            c.accuracy_mean,
            c.accuracy_std,
            c.recall_mean,
            c.recall_std,
            c.best
        );
    }
    out
}

/// Run the grid and write `grid_results.csv`.
pub fn cmd_grid(config: &RunConfig, echo: &str, out: &Path) -> CliResult<Vec<GridCell>> {
    ensure_out_dir(out)?;
    write_echo(out, echo)?;
    let dataset = config.load_dataset()?;
    let cells = run_grid(config, &dataset)?;
    std::fs::write(out.join("grid_results.csv"), grid_csv(&cells))?;
    Ok(cells)
}

/// Apply a saved model to a CSV of samples and write `embedding.csv`
/// (samples as rows). An empty data file produces just the header.
pub fn cmd_transform(model_path: &Path, data_path: &Path, out: &Path) -> CliResult<()> {
    ensure_out_dir(out)?;
    let (projection, _params) = load_model(model_path)?;
    let (_, x) = clfefa::ingest::read_csv_matrix(data_path)?;
    if x.nrows() != projection.input_dim() {
        return Err(CliError::Lib(LibError::DimensionMismatch {
            context: "transform".into(),
            expected: format!("{} features", projection.input_dim()),
            got: format!("{} features", x.nrows()),
        }));
    }
    let y = project(&x, &projection)?;
    let d = y.dim();
    let mut csv = (0..d).map(|i| format!("dim_{i}")).collect::<Vec<_>>().join(",");
    csv.push('\n');
    for j in 0..y.len() {
        let row: Vec<String> = (0..d).map(|i| y.matrix()[(i, j)].to_string()).collect();
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    std::fs::write(out.join("embedding.csv"), csv)?;
    Ok(())
}
