//! The `shufscan` command line.
//!
//! Exit codes: 0 success, 2 bad usage, 3 I/O failure, 4 unusable data.
//! Every random choice derives from `--seed`; `--threads` (or the
//! `SHUFSCAN_THREADS` environment variable when the flag is absent) only
//! changes speed, never output.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::detector::{self, DetectorConfig, DetectorError, ScoreTable};
use crate::eval::{self, EvalError, GroundTruth};
use crate::ingest::{self, FeatureFormat, FeatureSequence, IngestError, StandardizerParams};
use crate::synth::{self, SynthError, ToySpec};
use crate::theory::{self, ShuffleBound, ShuffleBoundQuery, TheoryError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_DATA: i32 = 4;

pub const THREADS_ENV: &str = "SHUFSCAN_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "shufscan",
    version,
    about = "Order-independent anomaly scoring of frame sequences"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score every frame of a feature file.
    Detect(DetectArgs),
    /// ROC curve and AUC of a score file against ground truth.
    Eval(EvalArgs),
    /// Write a synthetic feature sequence and its ground truth.
    Synth(SynthArgs),
    /// Number of shuffles needed for A anomalies.
    Bound(BoundArgs),
    /// Empirical Rademacher complexity of the classifier on a feature file.
    Rademacher(RademacherArgs),
    /// Standardize and/or PCA-project a feature file.
    Preprocess(PreprocessArgs),
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long, required_unless_present = "from_manifest")]
    pub features: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: FeatureFormat,
    #[arg(long, default_value_t = 10)]
    pub shuffles: usize,
    #[arg(long, default_value_t = 10)]
    pub window: usize,
    /// Defaults to the window size.
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, default_value_t = 1e-6)]
    pub clamp: f64,
    /// Score only the K random permutations, not the original order.
    #[arg(long)]
    pub no_identity: bool,
    /// Standardize each column (fit on this file) before scoring.
    #[arg(long)]
    pub standardize: bool,
    /// Write log-odds instead of odds in the anomaly_score column.
    #[arg(long)]
    pub log_odds: bool,
    #[arg(long, required_unless_present = "from_manifest")]
    pub out: Option<PathBuf>,
    /// Defaults to `<out>.manifest.json`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Defaults to `<out>.diagnostics.log`.
    #[arg(long)]
    pub diagnostics: Option<PathBuf>,
    /// Re-run the configuration recorded in a manifest.
    #[arg(long)]
    pub from_manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScoreColumn {
    AnomalyScore,
    MeanProb,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// ROC CSV destination.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "anomaly-score")]
    pub column: ScoreColumn,
    /// Optional centred moving average over scored frames before ranking.
    /// Not part of the detector.
    #[arg(long)]
    pub smooth: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Fig2,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "fig2", conflicts_with = "spec")]
    pub preset: Preset,
    /// JSON toy spec; replaces the preset.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Overrides the spec's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: FeatureFormat,
    /// Also write the effective spec as JSON.
    #[arg(long)]
    pub spec_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[arg(long)]
    pub anomalies: u64,
    #[arg(long)]
    pub delta: f64,
    #[arg(long = "eps-p")]
    pub eps_p: f64,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct RademacherArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: FeatureFormat,
    #[arg(long)]
    pub subset: usize,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: FeatureFormat,
    #[arg(long)]
    pub out: PathBuf,
    /// Defaults to `--format`.
    #[arg(long, value_enum)]
    pub out_format: Option<FeatureFormat>,
    #[arg(long)]
    pub standardize: bool,
    /// Project onto this many principal components (after standardizing).
    #[arg(long)]
    pub pca: Option<usize>,
    /// Write the fitted transforms as JSON.
    #[arg(long)]
    pub params_out: Option<PathBuf>,
}

/// One detect run: what was run, on what, and what it produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config: DetectorConfig,
    pub features: PathBuf,
    pub format: FeatureFormat,
    pub standardize: bool,
    pub log_odds: bool,
    pub scores: PathBuf,
    pub diagnostics_log: PathBuf,
    pub duration_secs: f64,
    pub splits_trained: usize,
    pub skipped_splits: usize,
    pub nonconverged_splits: usize,
    pub flagged_frames: usize,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io(_) => EXIT_IO,
            CliError::Data(_) => EXIT_DATA,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Io(m) | CliError::Data(m) => m,
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Io { .. } | IngestError::Stream(_) => CliError::Io(e.to_string()),
            IngestError::TargetDim { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<DetectorError> for CliError {
    fn from(e: DetectorError) -> Self {
        match e {
            DetectorError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            DetectorError::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<TheoryError> for CliError {
    fn from(e: TheoryError) -> Self {
        match e {
            TheoryError::InvalidQuery(_)
            | TheoryError::SubsetSize { .. }
            | TheoryError::NoTrials => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| CliError::Io(e.to_string()))?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let file = File::open(path).map_err(io_err(path))?;
    serde_json::from_reader(BufReader::new(file))
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn resolve_threads(flag: Option<usize>) -> Result<usize, CliError> {
    if let Some(n) = flag {
        return Ok(n);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{THREADS_ENV}={v:?} is not a thread count"))),
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(text.as_bytes())
            } else {
                stdout.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match dispatch(cli.command, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "shufscan: {}", e.message());
            e.exit_code()
        }
    }
}

fn dispatch(command: Command, stdout: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Detect(a) => cmd_detect(a, stdout),
        Command::Eval(a) => cmd_eval(a, stdout),
        Command::Synth(a) => cmd_synth(a, stdout),
        Command::Bound(a) => cmd_bound(a, stdout),
        Command::Rademacher(a) => cmd_rademacher(a, stdout),
        Command::Preprocess(a) => cmd_preprocess(a, stdout),
    }
}

/// Loads features, standardizing them when asked. Shared by `detect` and
/// library callers that want the exact same input the CLI scores.
pub fn prepare_features(
    path: &Path,
    format: FeatureFormat,
    standardize: bool,
) -> Result<FeatureSequence, IngestError> {
    let seq = ingest::load_features(path, format)?;
    if standardize {
        let params = ingest::fit_standardizer(&seq);
        ingest::apply_standardizer(&seq, &params)
    } else {
        Ok(seq)
    }
}

pub fn cmd_detect(args: DetectArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let threads = resolve_threads(args.threads)?;
    let (config, features, format, standardize, log_odds, scores_path) =
        if let Some(path) = &args.from_manifest {
            let m: RunManifest = read_json(path)?;
            let mut config = m.config;
            config.threads = threads;
            let out = args.out.clone().unwrap_or(m.scores);
            (config, m.features, m.format, m.standardize, m.log_odds, out)
        } else {
            let config = DetectorConfig {
                num_shuffles: args.shuffles,
                window_size: args.window,
                window_stride: args.stride.unwrap_or(args.window),
                lambda: args.lambda,
                seed: args.seed,
                prob_clamp: args.clamp,
                threads,
                include_identity_shuffle: !args.no_identity,
            };
            (
                config,
                args.features.clone().expect("required by clap"),
                args.format,
                args.standardize,
                args.log_odds,
                args.out.clone().expect("required by clap"),
            )
        };
    config.validate()?;
    let manifest_path = args
        .manifest
        .clone()
        .unwrap_or_else(|| with_suffix(&scores_path, ".manifest.json"));
    let diagnostics_path = args
        .diagnostics
        .clone()
        .unwrap_or_else(|| with_suffix(&scores_path, ".diagnostics.log"));

    let started = Instant::now();
    let seq = prepare_features(&features, format, standardize)?;
    let table = detector::detect(&seq, &config)?;
    let duration = started.elapsed().as_secs_f64();

    detector::export_scores(&table, &scores_path, log_odds)?;
    let mut log = create(&diagnostics_path)?;
    table.diagnostics.write_log(&mut log)?;
    log.flush()?;

    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config,
        features,
        format,
        standardize,
        log_odds,
        scores: scores_path,
        diagnostics_log: diagnostics_path,
        duration_secs: duration,
        splits_trained: table.diagnostics.splits_trained,
        skipped_splits: table.diagnostics.skipped.len(),
        nonconverged_splits: table.diagnostics.nonconverged,
        flagged_frames: table.flagged().len(),
    };
    write_json(&manifest, &manifest_path)?;
    writeln!(
        stdout,
        "scored {} of {} frames ({} splits, {} skipped) in {:.3}s",
        table.len() - manifest.flagged_frames,
        table.len(),
        manifest.splits_trained,
        manifest.skipped_splits,
        duration
    )?;
    Ok(())
}

/// Scores and labels of the frames a score file actually scored.
pub fn aligned_scores(
    rows: &[detector::ScoreRow],
    truth: &GroundTruth,
    column: ScoreColumn,
) -> Result<(Vec<f64>, GroundTruth), CliError> {
    if rows.len() != truth.len() {
        return Err(CliError::Data(format!(
            "{} score rows but {} ground-truth labels",
            rows.len(),
            truth.len()
        )));
    }
    let (idx, scores): (Vec<usize>, Vec<f64>) = rows
        .iter()
        .filter_map(|r| {
            let v = match column {
                ScoreColumn::AnomalyScore => r.anomaly_score,
                ScoreColumn::MeanProb => r.mean_prob,
            };
            v.map(|v| (r.frame_index, v))
        })
        .unzip();
    Ok((scores, truth.subset(&idx)))
}

pub fn cmd_eval(args: EvalArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let file = File::open(&args.scores).map_err(io_err(&args.scores))?;
    let rows = detector::read_scores(BufReader::new(file))?;
    let truth = ingest::load_ground_truth(&args.truth)?;
    let (mut scores, truth) = aligned_scores(&rows, &truth, args.column)?;
    if let Some(w) = args.smooth {
        scores = eval::moving_average(&scores, w);
    }
    let curve = eval::roc_curve(&scores, &truth)?;
    if let Some(out) = &args.out {
        let mut w = create(out)?;
        eval::write_roc_csv(&curve, &mut w)?;
        w.flush()?;
    }
    writeln!(stdout, "{:?}", curve.auc)?;
    Ok(())
}

pub fn cmd_synth(args: SynthArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let mut spec: ToySpec = match &args.spec {
        Some(path) => read_json(path)?,
        None => match args.preset {
            Preset::Fig2 => synth::default_fig2_plan(),
        },
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let (seq, truth) = synth::make_toy_sequence(&spec)?;
    ingest::save_features(&seq, &args.features, args.format)?;
    ingest::save_ground_truth(&truth, &args.truth)?;
    if let Some(path) = &args.spec_out {
        write_json(&spec, path)?;
    }
    writeln!(
        stdout,
        "wrote {} frames ({} anomalous), d={}",
        seq.len(),
        truth.positives(),
        seq.dim()
    )?;
    Ok(())
}

pub fn cmd_bound(args: BoundArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let query = ShuffleBoundQuery::new(args.anomalies, args.delta, args.eps_p)?;
    let bound = ShuffleBound::solve(&query);
    if args.json {
        writeln!(
            stdout,
            "{}",
            serde_json::to_string(&bound).expect("plain record")
        )?;
    } else {
        writeln!(stdout, "{}", bound.csv_line())?;
    }
    Ok(())
}

pub fn cmd_rademacher(args: RademacherArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let threads = resolve_threads(args.threads)?;
    let seq = ingest::load_features(&args.features, args.format)?;
    let est = theory::empirical_rademacher(
        &seq,
        args.subset,
        args.lambda,
        args.trials,
        args.seed,
        threads,
    )?;
    if args.json {
        writeln!(
            stdout,
            "{}",
            serde_json::to_string(&est).expect("plain record")
        )?;
    } else {
        writeln!(
            stdout,
            "{},{},{:?},{:?},{}",
            est.subset_size, est.num_trials, est.value, est.std_error, est.resampled_labels
        )?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct PcaParams {
    mean: Vec<f64>,
    /// One row per component.
    components: Vec<Vec<f64>>,
    eigenvalues: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct PreprocessParams {
    source: String,
    standardizer: Option<StandardizerParams>,
    pca: Option<PcaParams>,
}

pub fn cmd_preprocess(args: PreprocessArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let mut seq = ingest::load_features(&args.features, args.format)?;
    let mut params = PreprocessParams {
        source: seq.source().to_string(),
        standardizer: None,
        pca: None,
    };
    if args.standardize {
        let p = ingest::fit_standardizer(&seq);
        seq = ingest::apply_standardizer(&seq, &p)?;
        params.standardizer = Some(p);
    }
    if let Some(r) = args.pca {
        let model = ingest::fit_pca(&seq, r)?;
        seq = ingest::project(&seq, &model)?;
        params.pca = Some(PcaParams {
            mean: model.mean.to_vec(),
            components: model
                .components
                .columns()
                .into_iter()
                .map(|c| c.to_vec())
                .collect(),
            eigenvalues: model.eigenvalues.to_vec(),
        });
    }
    ingest::save_features(&seq, &args.out, args.out_format.unwrap_or(args.format))?;
    if let Some(path) = &args.params_out {
        write_json(&params, path)?;
    }
    writeln!(stdout, "{}", seq.source())?;
    Ok(())
}

/// Library-side equivalent of `detect` on an already loaded sequence,
/// for parity checks.
pub fn detect_table(
    seq: &FeatureSequence,
    config: &DetectorConfig,
) -> Result<ScoreTable, CliError> {
    Ok(detector::detect(seq, config)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(args.iter().copied(), &mut out, &mut err);
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn bad_flags_exit_two() {
        assert_eq!(run_args(&["shufscan", "detect", "--bogus"]).0, EXIT_USAGE);
        assert_eq!(
            run_args(&["shufscan", "bound", "--anomalies", "x"]).0,
            EXIT_USAGE
        );
        assert_eq!(
            run_args(&[
                "shufscan",
                "bound",
                "--anomalies",
                "1",
                "--delta",
                "0.1",
                "--eps-p",
                "0.2"
            ])
            .0,
            EXIT_USAGE
        );
        assert_eq!(run_args(&["shufscan", "--help"]).0, EXIT_OK);
    }

    #[test]
    fn missing_input_exits_three() {
        let (code, _, err) = run_args(&[
            "shufscan",
            "detect",
            "--features",
            "/nonexistent/f.csv",
            "--out",
            "/tmp/never.csv",
            "--threads",
            "1",
        ]);
        assert_eq!(code, EXIT_IO, "{err}");
    }

    #[test]
    fn bound_prints_single_line() {
        let (code, out, _) = run_args(&[
            "shufscan",
            "bound",
            "--anomalies",
            "10",
            "--delta",
            "0.05",
            "--eps-p",
            "0.25",
        ]);
        assert_eq!(code, EXIT_OK);
        assert_eq!(out.lines().count(), 1);
        let k: u64 = out.trim().rsplit(',').next().unwrap().parse().unwrap();
        let q = ShuffleBoundQuery::new(10, 0.05, 0.25).unwrap();
        assert_eq!(k, theory::required_shuffles(&q));
        let (_, json, _) = run_args(&[
            "shufscan",
            "bound",
            "--anomalies",
            "10",
            "--delta",
            "0.05",
            "--eps-p",
            "0.25",
            "--json",
        ]);
        let b: ShuffleBound = serde_json::from_str(json.trim()).unwrap();
        assert_eq!(b.shuffles, k);
    }

    #[test]
    fn suffix_paths() {
        assert_eq!(
            with_suffix(Path::new("out/scores.csv"), ".manifest.json"),
            PathBuf::from("out/scores.csv.manifest.json")
        );
    }
}
