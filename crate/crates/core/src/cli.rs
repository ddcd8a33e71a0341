//! Command-line front end: `gen-data`, `build-graph`, `cluster`, `propagate`
//! and `noise-study`.
//!
//! Every subcommand writes a `manifest.json` with the resolved configuration
//! and the SHA-256 of each input and output file. Exit codes: 0 success,
//! 1 runtime failure, 2 usage or malformed input.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array2;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::affinity::AffinityMatrix;
use crate::autoencoder::{default_hidden_dim, Activation, TrainConfig};
use crate::datasets::{gen_pinwheel, gen_two_spirals, load_csv, write_csv, Dataset, DEFAULT_SPIRAL_NOISE};
use crate::error::{Error, Result};
use crate::exec::{with_threads, Execution};
use crate::experiments::{noise_study, write_noise_study_csv, NoiseStudyConfig};
use crate::label_propagation::{
    kernel_distances, propagate_from_seeds, propagation_trials, GraphMethod, PropagationConfig, DEFAULT_MAXWALK,
};
use crate::loss::QuantileParams;
use crate::scale_estimation::{build_robust_graph, ScaleEstimationConfig};
use crate::spectral::{nmi, spectral_cluster_with, DEFAULT_RESTARTS};

#[derive(Debug, Parser)]
#[command(name = "qgraph", version, about = "Robust neighbourhood graphs from conditional quantiles")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset as CSV with a trailing label column.
    GenData(GenDataArgs),
    /// Estimate robust scales and write the affinity, decay profile and edge probabilities.
    BuildGraph(BuildGraphArgs),
    /// Spectral clustering of a dataset or a precomputed affinity.
    Cluster(ClusterArgs),
    /// Single-example label propagation with the greedy kernel walk.
    Propagate(PropagateArgs),
    /// Two-spirals noise sweep comparing robust and k-NN scales.
    NoiseStudy(NoiseStudyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataKind {
    TwoSpirals,
    Pinwheel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelMode {
    /// Last column is the label when every entry in it is a non-negative integer.
    Auto,
    Last,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodArg {
    Proposed,
    LocalScaling,
}

impl From<MethodArg> for GraphMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Proposed => GraphMethod::Robust,
            MethodArg::LocalScaling => GraphMethod::LocalScaling,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RunArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; results do not depend on this.
    #[arg(long, env = "QGRAPH_THREADS", default_value_t = 1)]
    pub threads: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct InputArgs {
    /// Headerless numeric CSV, one sample per row.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = LabelMode::Auto)]
    pub labels: LabelMode,
    /// Z-score every feature column.
    #[arg(long)]
    pub standardize: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GraphArgs {
    /// Neighbour rank for the initial k-NN scales.
    #[arg(long, default_value_t = crate::affinity::DEFAULT_K)]
    pub k: usize,
    /// Comma-separated ascending quantile grid.
    #[arg(long, value_delimiter = ',', default_values_t = crate::stochastic_graph::DEFAULT_TAUS.to_vec())]
    pub taus: Vec<f64>,
    #[arg(long, default_value_t = crate::stochastic_graph::DEFAULT_DELTA)]
    pub delta: f64,
    /// Number of stochastic-graph realizations.
    #[arg(long, alias = "R", default_value_t = crate::scale_estimation::DEFAULT_REALIZATIONS)]
    pub realizations: usize,
    #[arg(long, default_value_t = crate::stochastic_graph::DEFAULT_EDGE_THRESHOLD)]
    pub edge_threshold: f64,
    /// Autoencoder width; defaults to max(2, ceil(N/10)) capped at 64.
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long, default_value_t = crate::loss::DEFAULT_KAPPA)]
    pub kappa: f64,
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    pub epochs: usize,
    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    pub batch_size: usize,
    #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
    pub learning_rate: f64,
    #[arg(long, value_enum, default_value_t = ActivationArg::Sigmoid)]
    pub activation: ActivationArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationArg {
    Sigmoid,
    Identity,
}

impl GraphArgs {
    fn config(&self, seed: u64, execution: Execution) -> Result<ScaleEstimationConfig> {
        let activation = match self.activation {
            ActivationArg::Sigmoid => Activation::Sigmoid,
            ActivationArg::Identity => Activation::Identity,
        };
        let train = TrainConfig {
            quantile: QuantileParams::new(0.5, self.kappa)?,
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            activation,
            seed,
        };
        Ok(ScaleEstimationConfig {
            k: self.k,
            taus: self.taus.clone(),
            delta: self.delta,
            realizations: self.realizations,
            edge_threshold: self.edge_threshold,
            hidden_dim: self.hidden_dim,
            train,
            seed,
            execution,
        })
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenDataArgs {
    #[arg(value_enum)]
    pub kind: DataKind,
    /// Samples per class.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Number of arms (pinwheel only).
    #[arg(long, default_value_t = 5)]
    pub classes: usize,
    /// Gaussian jitter (two spirals only).
    #[arg(long, default_value_t = DEFAULT_SPIRAL_NOISE)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BuildGraphArgs {
    #[command(flatten)]
    pub data: InputArgs,
    #[command(flatten)]
    pub graph: GraphArgs,
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, value_enum, default_value_t = MatrixFormat::Csv)]
    pub format: MatrixFormat,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ClusterArgs {
    #[command(flatten)]
    pub data: InputArgs,
    /// Precomputed affinity CSV; skips graph construction.
    #[arg(long = "graph")]
    pub graph_file: Option<PathBuf>,
    #[arg(long)]
    pub classes: usize,
    #[arg(long, value_enum, default_value_t = MethodArg::Proposed)]
    pub method: MethodArg,
    #[arg(long, default_value_t = DEFAULT_RESTARTS)]
    pub restarts: usize,
    #[command(flatten)]
    pub graph: GraphArgs,
    #[command(flatten)]
    pub run: RunArgs,
    /// Directory for assignments.csv, result.json and manifest.json.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PropagateArgs {
    #[command(flatten)]
    pub data: InputArgs,
    /// CSV of `index,class` labeled examples; without it, seeded random trials are run.
    #[arg(long)]
    pub seeds_file: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long, default_value_t = DEFAULT_MAXWALK)]
    pub maxwalk: usize,
    #[arg(long, value_enum, default_value_t = MethodArg::Proposed)]
    pub method: MethodArg,
    #[command(flatten)]
    pub graph: GraphArgs,
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct NoiseStudyArgs {
    /// Samples per spiral.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.1, 0.2])]
    pub sigmas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.25, 0.5, 1.0])]
    pub fractions: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long, default_value_t = DEFAULT_RESTARTS)]
    pub restarts: usize,
    #[command(flatten)]
    pub graph: GraphArgs,
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Serialize)]
struct FileRecord {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct RunManifest<'a, A: Serialize, C: Serialize> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    args: &'a A,
    config: C,
    inputs: Vec<FileRecord>,
    outputs: Vec<FileRecord>,
    wall_time_secs: f64,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

fn records(paths: &[PathBuf]) -> Result<Vec<FileRecord>> {
    paths
        .iter()
        .map(|p| Ok(FileRecord { path: p.display().to_string(), sha256: sha256_file(p)? }))
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn write_manifest<A: Serialize, C: Serialize>(
    path: &Path,
    command: &str,
    seed: u64,
    args: &A,
    config: C,
    inputs: &[PathBuf],
    outputs: &[PathBuf],
    started: Instant,
) -> Result<()> {
    let manifest = RunManifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed,
        args,
        config,
        inputs: records(inputs)?,
        outputs: records(outputs)?,
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    write_json(path, &manifest)
}

fn manifest_beside(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    output.with_file_name(name)
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_matrix_csv(path: &Path, m: &Array2<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(create(path)?);
    for row in m.rows() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn read_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    let data = load_csv(path, false, false)?;
    Ok(data.samples().clone())
}

fn write_column_csv<T: ToString>(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<T>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn label_column_present(path: &Path) -> Result<bool> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut any = false;
    for record in reader.records() {
        let record = record?;
        if record.len() < 2 {
            return Ok(false);
        }
        let last = record.get(record.len() - 1).unwrap_or("").trim();
        if last.parse::<usize>().is_err() {
            return Ok(false);
        }
        any = true;
    }
    Ok(any)
}

fn load_input(args: &InputArgs) -> Result<(Dataset, PathBuf)> {
    let path = args.input.clone().ok_or_else(|| Error::Config("--input is required".into()))?;
    let labeled = match args.labels {
        LabelMode::Last => true,
        LabelMode::None => false,
        LabelMode::Auto => label_column_present(&path)?,
    };
    Ok((load_csv(&path, labeled, args.standardize)?, path))
}

fn execution(threads: usize) -> Execution {
    if threads > 1 {
        Execution::Parallel
    } else {
        Execution::Sequential
    }
}

/// Parses `index,class` rows; an optional header line is skipped.
pub fn read_seeds(path: &Path) -> Result<Vec<(usize, usize)>> {
    let text = fs::read_to_string(path)?;
    let mut seeds = Vec::new();
    for (row, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parse_err = |column: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            row: row + 1,
            column,
            message,
        };
        if fields.len() != 2 {
            return Err(parse_err(1, format!("expected `index,class`, found {} fields", fields.len())));
        }
        if row == 0 && fields[0].parse::<usize>().is_err() && fields[1].parse::<usize>().is_err() {
            continue;
        }
        let index = fields[0].parse().map_err(|_| parse_err(1, format!("bad index {:?}", fields[0])))?;
        let class = fields[1].parse().map_err(|_| parse_err(2, format!("bad class {:?}", fields[1])))?;
        seeds.push((index, class));
    }
    if seeds.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            row: 0,
            column: 0,
            message: "no labeled examples".into(),
        });
    }
    Ok(seeds)
}

fn gen_data(args: &GenDataArgs) -> Result<()> {
    let started = Instant::now();
    let data = match args.kind {
        DataKind::TwoSpirals => gen_two_spirals(args.n, args.noise, args.seed)?,
        DataKind::Pinwheel => gen_pinwheel(args.n, args.classes, args.seed)?,
    };
    let mut out = create(&args.output)?;
    write_csv(&data, &mut out)?;
    out.flush()?;
    drop(out);
    write_manifest(
        &manifest_beside(&args.output),
        "gen-data",
        args.seed,
        args,
        serde_json::json!({ "samples": data.len(), "features": data.dim() }),
        &[],
        std::slice::from_ref(&args.output),
        started,
    )
}

fn build_graph(args: &BuildGraphArgs) -> Result<()> {
    let started = Instant::now();
    let (data, input) = load_input(&args.data)?;
    let mut config = args.graph.config(args.run.seed, execution(args.run.threads))?;
    config.hidden_dim = Some(config.hidden_dim.unwrap_or_else(|| default_hidden_dim(data.len())));
    let g = with_threads(args.run.threads, || build_robust_graph(&data, &config))?;

    fs::create_dir_all(&args.out_dir)?;
    let scales = args.out_dir.join("scales.csv");
    write_column_csv(
        &scales,
        &["index", "initial_scale", "robust_scale"],
        g.initial_scales
            .as_slice()
            .iter()
            .zip(g.scales.as_slice())
            .enumerate()
            .map(|(i, (a, b))| vec![i.to_string(), a.to_string(), b.to_string()]),
    )?;
    let affinity = match args.format {
        MatrixFormat::Csv => {
            let p = args.out_dir.join("affinity.csv");
            write_matrix_csv(&p, g.affinity.matrix())?;
            p
        }
        MatrixFormat::Json => {
            let p = args.out_dir.join("affinity.json");
            let m = g.affinity.matrix();
            let rows: Vec<Vec<f64>> = m.rows().into_iter().map(|r| r.to_vec()).collect();
            write_json(&p, &serde_json::json!({ "n": m.nrows(), "rows": rows }))?;
            p
        }
    };
    let decay = args.out_dir.join("decay.csv");
    let mut out = create(&decay)?;
    g.profile.write_csv(&mut out)?;
    out.flush()?;
    drop(out);
    let edges = args.out_dir.join("edges.csv");
    let mut out = create(&edges)?;
    g.graph.write_csv(&mut out)?;
    out.flush()?;
    drop(out);

    write_manifest(
        &args.out_dir.join("manifest.json"),
        "build-graph",
        args.run.seed,
        args,
        &config,
        &[input],
        &[scales, affinity, decay, edges],
        started,
    )
}

#[derive(Debug, Serialize)]
struct ClusterReport {
    method: &'static str,
    n_clusters: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    nmi: Option<f64>,
}

fn cluster(args: &ClusterArgs) -> Result<()> {
    let started = Instant::now();
    let exec = execution(args.run.threads);
    let config = args.graph.config(args.run.seed, exec)?;
    let mut inputs = Vec::new();
    let data = match &args.data.input {
        Some(_) => {
            let (d, p) = load_input(&args.data)?;
            inputs.push(p);
            Some(d)
        }
        None => None,
    };
    let (w, method) = match (&args.graph_file, &data) {
        (Some(path), _) => {
            inputs.push(path.clone());
            (AffinityMatrix::new(read_matrix_csv(path)?)?, "precomputed")
        }
        (None, Some(d)) => {
            let method = GraphMethod::from(args.method);
            (with_threads(args.run.threads, || method.affinity(d, &config))?, method.name())
        }
        (None, None) => return Err(Error::Config("need --input or --graph".into())),
    };
    if let Some(d) = &data {
        if d.len() != w.len() {
            return Err(Error::Input(format!("graph has {} nodes, data has {} samples", w.len(), d.len())));
        }
    }
    let mut result = spectral_cluster_with(&w, args.classes, args.run.seed, args.restarts)?;
    if let Some(labels) = data.as_ref().and_then(|d| d.labels()) {
        result.nmi = Some(nmi(labels, &result.assignments)?);
    }
    let report = ClusterReport { method, n_clusters: result.n_clusters, nmi: result.nmi };
    println!("{}", serde_json::to_string_pretty(&report)?);

    if let Some(dir) = &args.out_dir {
        fs::create_dir_all(dir)?;
        let assignments = dir.join("assignments.csv");
        write_column_csv(
            &assignments,
            &["index", "cluster"],
            result.assignments.iter().enumerate().map(|(i, &c)| vec![i, c]),
        )?;
        let report_path = dir.join("result.json");
        write_json(&report_path, &report)?;
        write_manifest(
            &dir.join("manifest.json"),
            "cluster",
            args.run.seed,
            args,
            &config,
            &inputs,
            &[assignments, report_path],
            started,
        )?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct PropagateReport {
    method: &'static str,
    maxwalk: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    trial_accuracies: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_accuracy: Option<f64>,
}

fn propagate(args: &PropagateArgs) -> Result<()> {
    let started = Instant::now();
    let exec = execution(args.run.threads);
    let graph = args.graph.config(args.run.seed, exec)?;
    let method = GraphMethod::from(args.method);
    // Seeds are read before any heavy work so a malformed file fails fast.
    let seeds = args.seeds_file.as_deref().map(read_seeds).transpose()?;
    let (data, input) = load_input(&args.data)?;
    let mut inputs = vec![input];
    let mut predictions = None;

    let report = if let Some(seeds) = seeds {
        inputs.push(args.seeds_file.clone().expect("seeds were read from this file"));
        let outcome = with_threads(args.run.threads, || -> Result<_> {
            let w = method.affinity(&data, &graph)?;
            propagate_from_seeds(&kernel_distances(&w)?, &seeds, data.labels(), args.maxwalk, exec)
        })?;
        let accuracy = outcome.accuracy;
        predictions = Some(outcome.predictions);
        PropagateReport { method: method.name(), maxwalk: args.maxwalk, accuracy, trial_accuracies: None, mean_accuracy: None }
    } else {
        if args.trials == 0 {
            return Err(Error::Config("--trials must be positive".into()));
        }
        let config = PropagationConfig { graph: graph.clone(), method, maxwalk: args.maxwalk };
        let summary = with_threads(args.run.threads, || propagation_trials(&data, &config, args.trials, args.run.seed))?;
        PropagateReport {
            method: method.name(),
            maxwalk: args.maxwalk,
            accuracy: None,
            trial_accuracies: Some(summary.accuracies),
            mean_accuracy: Some(summary.mean_accuracy),
        }
    };
    println!("{}", serde_json::to_string_pretty(&report)?);

    if let Some(dir) = &args.out_dir {
        fs::create_dir_all(dir)?;
        let mut outputs = Vec::new();
        if let Some(pred) = &predictions {
            let p = dir.join("predictions.csv");
            write_column_csv(&p, &["index", "class"], pred.iter().enumerate().map(|(i, &c)| vec![i, c]))?;
            outputs.push(p);
        }
        let report_path = dir.join("result.json");
        write_json(&report_path, &report)?;
        outputs.push(report_path);
        write_manifest(
            &dir.join("manifest.json"),
            "propagate",
            args.run.seed,
            args,
            &graph,
            &inputs,
            &outputs,
            started,
        )?;
    }
    Ok(())
}

fn run_noise_study(args: &NoiseStudyArgs) -> Result<()> {
    let started = Instant::now();
    let graph = args.graph.config(args.run.seed, execution(args.run.threads))?;
    let config = NoiseStudyConfig {
        n_per_class: args.n,
        sigmas: args.sigmas.clone(),
        fractions: args.fractions.clone(),
        repeats: args.repeats,
        restarts: args.restarts,
        graph,
        seed: args.run.seed,
        ..NoiseStudyConfig::default()
    };
    let rows = with_threads(args.run.threads, || noise_study(&config))?;
    let mut out = create(&args.output)?;
    write_noise_study_csv(&rows, &mut out)?;
    out.flush()?;
    drop(out);
    write_manifest(
        &manifest_beside(&args.output),
        "noise-study",
        args.run.seed,
        args,
        &config,
        &[],
        std::slice::from_ref(&args.output),
        started,
    )
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenData(a) => gen_data(a),
        Command::BuildGraph(a) => build_graph(a),
        Command::Cluster(a) => cluster(a),
        Command::Propagate(a) => propagate(a),
        Command::NoiseStudy(a) => run_noise_study(a),
    }
}

/// Process exit code for an error: 2 for usage and malformed input, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Parse { .. } => 2,
        _ => 1,
    }
}
