//! Batch front end: `evaluate`, `predict`, `detect`, `analyze`, `synth`.
//!
//! Every command is a library function returning the files it would write,
//! so CLI output is exactly what the library computes. Exit codes: 0 ok,
//! 2 data parse error, 3 config error, 4 infeasible analysis.

mod config;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

pub use config::{AnalysisConfig, PredictorEntry, TopicFormatName};

use crate::analysis::{correlation_table, correlation_table_csv, correlation_table_text, scatter_report};
use crate::effectiveness::{evaluate_run_with, EffectivenessVector, Metric};
use crate::error::QppError;
use crate::exec::Execution;
use crate::outliers::{detect, univariate_reports, CutoffFamily, DetectionMethod, DetectorOptions, OutlierReport};
use crate::predictors::{build_feature_matrix, parse_corpus_scores, PredictorInputs, QueryFeatureMatrix};
use crate::synthetic::{synth_qpp_scenario, QppScenarioParams};
use crate::trec_io::{parse_feature_file, parse_qrels, parse_run, parse_topics, read_matrix, write_matrix, RunSet};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;

/// Environment variable holding the log filter (`error`, `warn`, `info`, ...).
pub const LOG_ENV: &str = "QPPLAB_LOG";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    pub fn parse(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_PARSE,
            message: message.into(),
        }
    }

    pub fn infeasible(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INFEASIBLE,
            message: message.into(),
        }
    }

    fn io(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_IO,
            message: message.into(),
        }
    }

    /// Wraps a library error raised while analysing already-loaded data.
    fn analysis(e: QppError) -> Self {
        match e {
            QppError::Parse { .. } | QppError::Duplicate { .. } => Self::parse(e.to_string()),
            _ => Self::infeasible(e.to_string()),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Ap,
    Ndcg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Trc,
    Classical,
    Univariate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    F,
    Chisq,
}

#[derive(Debug, Parser)]
#[command(
    name = "qpplab",
    version,
    about = "Query performance prediction analysis with multivariate outlier detection"
)]
pub struct Cli {
    /// TOML analysis config; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// TREC run file.
    #[arg(long, global = true)]
    pub run: Option<PathBuf>,
    /// TREC qrels file.
    #[arg(long, global = true)]
    pub qrels: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub metric: Option<MetricArg>,
    /// Metric rank cutoff (default: 1000 for AP, 20 for nDCG).
    #[arg(long, global = true)]
    pub cutoff: Option<usize>,
    /// Quantile level of the distance cutoff.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true, value_enum)]
    pub method: Option<MethodArg>,
    #[arg(long = "cutoff-family", global = true, value_enum)]
    pub cutoff_family: Option<FamilyArg>,
    /// Output directory. Without it, single-file commands print to stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-query effectiveness of a run.
    Evaluate,
    /// Build the queries x predictors matrix.
    Predict(PredictArgs),
    /// Flag outlier queries of a predictor matrix.
    Detect(DetectArgs),
    /// Correlation table and scatter plots with and without flagged queries.
    Analyze(AnalyzeArgs),
    /// Generate a synthetic scenario.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub feedback_run: Option<PathBuf>,
    #[arg(long)]
    pub topics: Option<PathBuf>,
    /// Letor-style feature file; repeat for several.
    #[arg(long = "features")]
    pub feature_files: Vec<PathBuf>,
    #[arg(long)]
    pub corpus_scores: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct DetectArgs {
    /// Matrix CSV; without it the matrix is built from the config.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    #[command(flatten)]
    pub predict: PredictArgs,
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    /// Effectiveness CSV as written by `evaluate`.
    #[arg(long)]
    pub effectiveness: Option<PathBuf>,
    #[command(flatten)]
    pub predict: PredictArgs,
}

#[derive(Debug, Clone, clap::Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 4)]
    pub m: usize,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.15)]
    pub contamination: f64,
    #[arg(long, default_value_t = 1.0)]
    pub corrupt_noise: f64,
}

impl Default for SynthArgs {
    fn default() -> Self {
        let p = QppScenarioParams::default();
        Self {
            n: p.n,
            m: p.m,
            noise: p.noise,
            contamination: p.contamination,
            corrupt_noise: p.corrupt_noise,
        }
    }
}

pub const DEFAULT_SEED: u64 = 42;

/// A file produced by a command, relative to the output directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputFile {
    pub name: String,
    pub contents: String,
}

impl OutputFile {
    fn new(name: impl Into<String>, contents: String) -> Self {
        Self {
            name: name.into(),
            contents,
        }
    }
}

impl Cli {
    /// Config file (if any) with command-line overrides applied.
    pub fn resolve_config(&self) -> Result<AnalysisConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => AnalysisConfig::load(p)?,
            None => AnalysisConfig::default(),
        };
        if let Some(p) = &self.run {
            cfg.run = Some(p.clone());
        }
        if let Some(p) = &self.qrels {
            cfg.qrels = Some(p.clone());
        }
        if let Some(m) = self.metric {
            cfg.metric = match m {
                MetricArg::Ap => Metric::Ap,
                MetricArg::Ndcg => Metric::Ndcg,
            };
        }
        if self.cutoff.is_some() {
            cfg.cutoff = self.cutoff;
        }
        if let Some(a) = self.alpha {
            cfg.alpha = a;
        }
        if let Some(m) = self.method {
            cfg.method = match m {
                MethodArg::Trc => DetectionMethod::Trc,
                MethodArg::Classical => DetectionMethod::Classical,
                MethodArg::Univariate => DetectionMethod::Univariate,
            };
        }
        if let Some(f) = self.cutoff_family {
            cfg.cutoff_family = match f {
                FamilyArg::F => CutoffFamily::F,
                FamilyArg::Chisq => CutoffFamily::ChiSquare,
            };
        }
        if let Some(o) = &self.out {
            cfg.out = Some(o.clone());
        }
        let predict = match &self.command {
            Command::Predict(p) => Some(p),
            Command::Detect(d) => {
                if d.matrix.is_some() {
                    cfg.matrix = d.matrix.clone();
                }
                Some(&d.predict)
            }
            Command::Analyze(a) => {
                if a.matrix.is_some() {
                    cfg.matrix = a.matrix.clone();
                }
                if a.effectiveness.is_some() {
                    cfg.effectiveness = a.effectiveness.clone();
                }
                Some(&a.predict)
            }
            _ => None,
        };
        if let Some(p) = predict {
            if p.feedback_run.is_some() {
                cfg.feedback_run = p.feedback_run.clone();
            }
            if p.topics.is_some() {
                cfg.topics = p.topics.clone();
            }
            if !p.feature_files.is_empty() {
                cfg.feature_files = p.feature_files.clone();
            }
            if p.corpus_scores.is_some() {
                cfg.corpus_scores = p.corpus_scores.clone();
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn read_input(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))
}

fn parse_in<T>(path: &Path, parsed: Result<T, QppError>) -> Result<T, CliError> {
    parsed.map_err(|e| CliError::parse(format!("{}: {e}", path.display())))
}

fn require<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, CliError> {
    p.as_deref()
        .ok_or_else(|| CliError::config(format!("no {what} file given (use --{what} or the config file)")))
}

fn load_run(path: &Path) -> Result<RunSet, CliError> {
    parse_in(path, parse_run(&read_input(path)?))
}

/// Per-query effectiveness of `cfg.run` against `cfg.qrels`.
pub fn cmd_evaluate(cfg: &AnalysisConfig) -> Result<EffectivenessVector, CliError> {
    let run_path = require(&cfg.run, "run")?;
    let qrels_path = require(&cfg.qrels, "qrels")?;
    let run = load_run(run_path)?;
    let qrels = parse_in(qrels_path, parse_qrels(&read_input(qrels_path)?))?;
    if qrels.clamped > 0 {
        log::warn!("{}: clamped {} negative grades", qrels_path.display(), qrels.clamped);
    }
    let ev = evaluate_run_with(
        Execution::default(),
        &run,
        &qrels.qrels,
        cfg.metric,
        cfg.metric_cutoff(),
        cfg.gain,
    )
    .map_err(|e| CliError::config(e.to_string()))?;
    if !ev.unjudged_queries.is_empty() {
        log::warn!(
            "{} run queries have no judgments and were skipped",
            ev.unjudged_queries.len()
        );
    }
    Ok(ev)
}

/// Predictor matrix from the configured predictor specs and inputs.
pub fn cmd_predict(cfg: &AnalysisConfig) -> Result<QueryFeatureMatrix, CliError> {
    let specs = cfg.predictor_specs()?;
    if specs.is_empty() {
        return Err(CliError::config("no predictors configured"));
    }
    let run = load_run(require(&cfg.run, "run")?)?;
    let feedback = cfg.feedback_run.as_deref().map(load_run).transpose()?;
    let term_counts = match &cfg.topics {
        Some(p) => {
            let topics = parse_in(p, parse_topics(&read_input(p)?, cfg.topic_format.into()))?;
            Some(
                topics
                    .into_iter()
                    .map(|t| (t.query_id, t.term_count))
                    .collect::<BTreeMap<_, _>>(),
            )
        }
        None => None,
    };
    let mut tables = Vec::new();
    for (i, p) in cfg.feature_files.iter().enumerate() {
        let mut t = parse_in(p, parse_feature_file(&read_input(p)?))?;
        if let Some(names) = cfg.feature_names.get(i) {
            t = t
                .with_names(names.clone())
                .map_err(|e| CliError::config(e.to_string()))?;
        }
        tables.push(t);
    }
    let corpus = match &cfg.corpus_scores {
        Some(p) => Some(parse_in(p, parse_corpus_scores(&read_input(p)?))?),
        None => None,
    };
    let inputs = PredictorInputs {
        run: &run,
        feedback_run: feedback.as_ref(),
        term_counts: term_counts.as_ref(),
        feature_tables: &tables,
        corpus_scores: corpus.as_ref(),
    };
    build_feature_matrix(&cfg.predictor_config, &inputs, &specs).map_err(|e| CliError::config(e.to_string()))
}

fn load_or_build_matrix(cfg: &AnalysisConfig) -> Result<QueryFeatureMatrix, CliError> {
    match &cfg.matrix {
        Some(p) => parse_in(p, read_matrix(&read_input(p)?)),
        None => cmd_predict(cfg),
    }
}

fn detector_options(cfg: &AnalysisConfig) -> DetectorOptions {
    DetectorOptions {
        method: cfg.method,
        alpha: cfg.alpha,
        family: cfg.cutoff_family,
        exec: Execution::default(),
    }
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Outlier reports for the configured matrix: one joint report, or one per
/// column with the univariate method.
pub fn cmd_detect(cfg: &AnalysisConfig) -> Result<Vec<(String, OutlierReport)>, CliError> {
    let matrix = load_or_build_matrix(cfg)?;
    let opts = detector_options(cfg);
    if cfg.method == DetectionMethod::Univariate && matrix.n_predictors() > 1 {
        return matrix
            .predictor_names()
            .iter()
            .zip(univariate_reports(&matrix, &opts))
            .map(|(name, r)| Ok((name.clone(), r.map_err(CliError::analysis)?)))
            .collect();
    }
    let report = detect(&matrix, &opts).map_err(CliError::analysis)?;
    Ok(vec![(String::new(), report)])
}

/// Everything `analyze` computes.
#[derive(Debug, Clone)]
pub struct AnalysisOutput {
    pub matrix: QueryFeatureMatrix,
    pub effectiveness: EffectivenessVector,
    pub report: OutlierReport,
    pub files: Vec<OutputFile>,
}

pub fn cmd_analyze(cfg: &AnalysisConfig) -> Result<AnalysisOutput, CliError> {
    if cfg.method == DetectionMethod::Univariate {
        return Err(CliError::config(
            "analyze needs a multivariate method (trc or classical)",
        ));
    }
    let matrix = load_or_build_matrix(cfg)?;
    let eff = match &cfg.effectiveness {
        Some(p) => parse_in(p, EffectivenessVector::from_csv(&read_input(p)?))?,
        None => cmd_evaluate(cfg)?,
    };
    let opts = detector_options(cfg);
    let report = detect(&matrix, &opts).map_err(CliError::analysis)?;
    let uni: Vec<Option<OutlierReport>> = univariate_reports(&matrix, &opts)
        .into_iter()
        .zip(matrix.predictor_names())
        .map(|(r, name)| {
            r.map_err(|e| log::warn!("univariate detection for {name} unavailable: {e}"))
                .ok()
        })
        .collect();
    let uni_refs: Vec<Option<&OutlierReport>> = uni.iter().map(Option::as_ref).collect();
    let rows = correlation_table(&matrix, &eff, &report, &uni_refs).map_err(CliError::analysis)?;
    let header = format!(
        "{} | method={} alpha={} | outliers {} of {}",
        eff.label(),
        report.method.as_str(),
        report.alpha,
        report.n_flagged(),
        report.query_ids.len()
    );
    let mut files = vec![
        OutputFile::new("matrix.csv", write_matrix(&matrix)),
        OutputFile::new("effectiveness.csv", eff.to_csv()),
        OutputFile::new("outliers.csv", report.to_csv()),
        OutputFile::new("correlation.csv", correlation_table_csv(&rows)),
        OutputFile::new("correlation.txt", correlation_table_text(&rows, &header)),
    ];
    for (j, name) in matrix.predictor_names().iter().enumerate() {
        match scatter_report(&matrix, j, &eff, &report) {
            Ok(s) => {
                let stem = file_stem(name);
                files.push(OutputFile::new(format!("scatter_{stem}.csv"), s.to_csv()));
                files.push(OutputFile::new(format!("scatter_{stem}.svg"), s.to_svg()));
            }
            Err(e) => log::warn!("no scatter plot for {name}: {e}"),
        }
    }
    Ok(AnalysisOutput {
        matrix,
        effectiveness: eff,
        report,
        files,
    })
}

pub fn cmd_synth(args: &SynthArgs, seed: u64) -> Result<Vec<OutputFile>, CliError> {
    let params = QppScenarioParams {
        n: args.n,
        m: args.m,
        noise: args.noise,
        contamination: args.contamination,
        corrupt_noise: args.corrupt_noise,
        seed,
    };
    let s = synth_qpp_scenario(&params).map_err(|e| CliError::config(e.to_string()))?;
    Ok(vec![
        OutputFile::new("matrix.csv", write_matrix(&s.matrix)),
        OutputFile::new("effectiveness.csv", s.effectiveness.to_csv()),
        OutputFile::new("truth.csv", s.truth_csv()),
    ])
}

/// Runs a parsed command line and returns the files it produces, plus the
/// output directory they belong in (if any).
pub fn execute(cli: &Cli) -> Result<(Option<PathBuf>, Vec<OutputFile>), CliError> {
    let cfg = cli.resolve_config()?;
    let files = match &cli.command {
        Command::Evaluate => vec![OutputFile::new("effectiveness.csv", cmd_evaluate(&cfg)?.to_csv())],
        Command::Predict(_) => vec![OutputFile::new("matrix.csv", write_matrix(&cmd_predict(&cfg)?))],
        Command::Detect(_) => cmd_detect(&cfg)?
            .into_iter()
            .map(|(name, r)| {
                let file = if name.is_empty() {
                    "outliers.csv".to_string()
                } else {
                    format!("outliers_{}.csv", file_stem(&name))
                };
                OutputFile::new(file, r.to_csv())
            })
            .collect(),
        Command::Analyze(_) => {
            if cfg.out.is_none() {
                return Err(CliError::config("analyze writes several files; give --out DIR"));
            }
            cmd_analyze(&cfg)?.files
        }
        Command::Synth(args) => {
            if cfg.out.is_none() {
                return Err(CliError::config("synth writes several files; give --out DIR"));
            }
            cmd_synth(args, cli.seed.unwrap_or(DEFAULT_SEED))?
        }
    };
    Ok((cfg.out.clone(), files))
}

pub fn write_outputs(out: Option<&Path>, files: &[OutputFile]) -> Result<(), CliError> {
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("cannot create {}: {e}", dir.display())))?;
            for f in files {
                let path = dir.join(&f.name);
                std::fs::write(&path, &f.contents)
                    .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))?;
                log::info!("wrote {}", path.display());
            }
        }
        None => {
            for f in files {
                print!("{}", f.contents);
            }
        }
    }
    Ok(())
}

/// Entry point shared by the binary and the tests. Returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let result = execute(&cli).and_then(|(out, files)| write_outputs(out.as_deref(), &files));
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}
