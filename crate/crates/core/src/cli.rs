//! Command-line driver: import, train, score, serve and eval.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::corpus::{self, Backlog, ImportMapping, ImportOutcome};
use crate::evalstats::{self, EvalOptions, EvaluationReport, OutlierScope, Weighting};
use crate::interpret::{assemble_report, QualityReport};
use crate::metrics::{Metric, ReadabilityProfile};
use crate::pipeline::{self, BundleStore, ModelBundle, ProjectConfig, StoryInput};
use crate::server::{self, ServerConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

const CONFIG_FILE: &str = "storygauge.toml";

#[derive(Debug, Parser)]
#[command(name = "storygauge", version, about = "Score user stories against metrics trained on their backlog")]
pub struct Cli {
    /// Bundle store directory [env: STORYGAUGE_STORE, default: ./store]
    #[arg(long, global = true)]
    pub store: Option<PathBuf>,
    /// Project configuration file [default: ./storygauge.toml when present]
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a backlog CSV and write the normalized backlog JSON
    Import(ImportArgs),
    /// Train a bundle and print its version
    Train(TrainArgs),
    /// Score one story, or a whole CSV with --csv
    Score(ScoreArgs),
    /// Run the HTTP API
    Serve(ServeArgs),
    /// Regress expert ratings on batch scores
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MappingPreset {
    Default,
    Jira,
}

#[derive(Debug, Args)]
pub struct MappingArgs {
    /// Column preset
    #[arg(long, value_enum)]
    pub mapping: Option<MappingPreset>,
    #[arg(long)]
    pub id_column: Option<String>,
    #[arg(long)]
    pub title_column: Option<String>,
    #[arg(long)]
    pub body_column: Option<String>,
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    #[arg(long)]
    pub project: String,
    #[arg(long)]
    pub csv: PathBuf,
    /// Write the backlog JSON here instead of into the store
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub mapping: MappingArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub project: String,
    /// Backlog CSV; the stored backlog is used when omitted
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Topic count
    #[arg(long)]
    pub k: Option<usize>,
    /// Topic threshold
    #[arg(long)]
    pub thr: Option<f64>,
    #[arg(long, value_enum)]
    pub readability: Option<ReadabilityArg>,
    #[command(flatten)]
    pub mapping: MappingArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReadabilityArg {
    Flesch,
    German,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Table,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub project: String,
    /// Story text file; stdin when omitted
    #[arg(long = "in", conflicts_with = "csv")]
    pub input: Option<PathBuf>,
    /// Batch-score a backlog CSV and print one CSV row per story
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: OutputFormat,
    /// Story id for single-story scoring
    #[arg(long)]
    pub id: Option<String>,
    #[command(flatten)]
    pub mapping: MappingArgs,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Listen address [env: STORYGAUGE_LISTEN, default: 127.0.0.1:8080]
    #[arg(long)]
    pub listen: Option<String>,
    /// Allowed CORS origin [env: STORYGAUGE_CORS_ORIGIN]
    #[arg(long)]
    pub cors_origin: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// CSV with story_id, expert_id, rating
    #[arg(long)]
    pub ratings: PathBuf,
    /// Batch-score CSV
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long, value_enum, default_value = "quadratic")]
    pub weighting: WeightingArg,
    #[arg(long, default_value_t = evalstats::DEFAULT_IQR_FACTOR)]
    pub iqr_factor: f64,
    /// Compute outlier fences over all ratings instead of per expert
    #[arg(long)]
    pub pooled: bool,
    #[arg(long)]
    pub keep_outliers: bool,
    #[arg(long, default_value_t = evalstats::DEFAULT_ALPHA)]
    pub alpha: f64,
    /// Comma-separated predictor subset
    #[arg(long, value_delimiter = ',')]
    pub metrics: Option<Vec<String>>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: OutputFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WeightingArg {
    Linear,
    Quadratic,
}

/// A failure with the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }

    fn data(message: impl std::fmt::Display) -> Self {
        Self { code: EXIT_DATA, message: message.to_string() }
    }
}

type CliResult = Result<(), CliError>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let rendered = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{rendered}");
                EXIT_USAGE
            } else {
                let _ = write!(stdout, "{rendered}");
                EXIT_OK
            };
        }
    };
    match dispatch(cli, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message);
            e.code
        }
    }
}

fn dispatch(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult {
    let store = BundleStore::new(store_dir(cli.store.as_deref()));
    let config = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Import(args) => import(&store, config, args, stdout, stderr),
        Command::Train(args) => train(&store, config, args, stdout, stderr),
        Command::Score(args) => score(&store, config, args, stdout, stderr),
        Command::Serve(args) => serve(store.root(), config, args),
        Command::Eval(args) => eval(args, stdout),
    }
}

fn store_dir(flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os("STORYGAUGE_STORE").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("store"))
}

fn load_config(path: Option<&Path>) -> Result<ProjectConfig, CliError> {
    let (path, required) = match path {
        Some(p) => (p.to_path_buf(), true),
        None => (PathBuf::from(CONFIG_FILE), false),
    };
    match std::fs::read_to_string(&path) {
        Ok(text) => ProjectConfig::from_toml(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display()))),
        Err(e) if !required && e.kind() == std::io::ErrorKind::NotFound => Ok(ProjectConfig::default()),
        Err(e) => Err(CliError::usage(format!("{}: {e}", path.display()))),
    }
}

fn apply_mapping(mut mapping: ImportMapping, args: &MappingArgs) -> ImportMapping {
    if let Some(preset) = args.mapping {
        let base = match preset {
            MappingPreset::Default => ImportMapping::default(),
            MappingPreset::Jira => ImportMapping::jira(),
        };
        mapping.id_column = base.id_column;
        mapping.title_column = base.title_column;
        mapping.body_column = base.body_column;
    }
    if let Some(id) = &args.id_column {
        mapping.id_column = id.clone();
    }
    if let Some(title) = &args.title_column {
        mapping.title_column = Some(title.clone());
    }
    if let Some(body) = &args.body_column {
        mapping.body_column = body.clone();
    }
    mapping
}

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn import_file(path: &Path, mapping: &ImportMapping, project: &str, stderr: &mut dyn Write) -> Result<ImportOutcome, CliError> {
    let bytes = read_file(path)?;
    let outcome = corpus::import_csv(&bytes, mapping, project).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    report_import(&outcome, stderr);
    Ok(outcome)
}

fn report_import(outcome: &ImportOutcome, stderr: &mut dyn Write) {
    if outcome.skipped_count > 0 {
        let _ = writeln!(stderr, "skipped {} row(s) with an empty body", outcome.skipped_count);
    }
    for row in &outcome.rejected {
        let _ = writeln!(stderr, "rejected line {}: {}", row.line, row.reason);
    }
}

fn to_json<T: Serialize>(value: &T, stdout: &mut dyn Write) -> CliResult {
    let text = serde_json::to_string_pretty(value).map_err(CliError::data)?;
    writeln!(stdout, "{text}").map_err(CliError::data)
}

#[derive(Serialize)]
struct ImportSummary<'a> {
    project_id: &'a str,
    imported: usize,
    skipped: usize,
    rejected: usize,
    path: String,
}

fn import(store: &BundleStore, config: ProjectConfig, args: ImportArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult {
    let mapping = apply_mapping(config.mapping, &args.mapping);
    mapping.validate().map_err(|e| CliError::usage(e.to_string()))?;
    let outcome = import_file(&args.csv, &mapping, &args.project, stderr)?;
    let path = match &args.out {
        Some(out) => {
            let json = serde_json::to_vec_pretty(&outcome.backlog).map_err(CliError::data)?;
            std::fs::write(out, json).map_err(|e| CliError::data(format!("{}: {e}", out.display())))?;
            out.clone()
        }
        None => store.save_backlog(&outcome.backlog).map_err(CliError::data)?,
    };
    to_json(
        &ImportSummary {
            project_id: &args.project,
            imported: outcome.backlog.len(),
            skipped: outcome.skipped_count,
            rejected: outcome.rejected.len(),
            path: path.display().to_string(),
        },
        stdout,
    )
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    project_id: &'a str,
    bundle_version: u64,
    stories: usize,
    path: String,
}

fn train(store: &BundleStore, mut config: ProjectConfig, args: TrainArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult {
    config.mapping = apply_mapping(config.mapping, &args.mapping);
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if args.k.is_some() {
        config.k = args.k;
    }
    if let Some(thr) = args.thr {
        config.thr = thr;
    }
    if let Some(r) = args.readability {
        config.readability = match r {
            ReadabilityArg::Flesch => ReadabilityProfile::Flesch,
            ReadabilityArg::German => ReadabilityProfile::German,
        };
    }
    config.validate().map_err(|e| CliError::usage(e.to_string()))?;
    let backlog = match &args.csv {
        Some(path) => {
            let outcome = import_file(path, &config.mapping, &args.project, stderr)?;
            store.save_backlog(&outcome.backlog).map_err(CliError::data)?;
            outcome.backlog
        }
        None => store
            .load_backlog(&args.project)
            .map_err(CliError::data)?
            .ok_or_else(|| CliError::data(format!("no stored backlog for `{}`; pass --csv", args.project)))?,
    };
    let mut bundle = pipeline::train(&backlog, &config).map_err(CliError::data)?;
    let version = store.save_next(&mut bundle).map_err(CliError::data)?;
    let path = store.project_dir(&args.project).map_err(CliError::data)?.join(format!("bundle-v{version}.json"));
    to_json(
        &TrainSummary { project_id: &args.project, bundle_version: version, stories: backlog.len(), path: path.display().to_string() },
        stdout,
    )
}

fn score(store: &BundleStore, config: ProjectConfig, args: ScoreArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult {
    let bundle = store.load(&args.project).map_err(CliError::data)?;
    if let Some(csv) = &args.csv {
        let mapping = apply_mapping(config.mapping, &args.mapping);
        let outcome = import_file(csv, &mapping, &args.project, stderr)?;
        let out = batch_score(&bundle, &outcome.backlog);
        return stdout.write_all(out.as_bytes()).map_err(CliError::data);
    }
    let text = match &args.input {
        Some(path) => String::from_utf8(read_file(path)?).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?,
        None => {
            let mut buf = String::new();
            std::io::stdin().read_to_string(&mut buf).map_err(CliError::data)?;
            buf
        }
    };
    let input = StoryInput::Text { id: args.id.clone(), text };
    if input.is_blank() {
        return Err(CliError::data("story text is empty"));
    }
    let report = pipeline::score(&bundle, &input);
    match args.format {
        OutputFormat::Json => to_json(&report, stdout),
        OutputFormat::Table => stdout.write_all(report_table(&report).as_bytes()).map_err(CliError::data),
    }
}

/// Header row of the batch-score CSV: id, the eight metric values in canonical
/// order, then their bands.
pub fn batch_header() -> Vec<String> {
    let mut header = vec!["id".to_owned()];
    header.extend(Metric::ALL.iter().map(|m| m.name().to_owned()));
    header.extend(Metric::ALL.iter().map(|m| format!("{}_band", m.name())));
    header
}

/// One CSV row per story with values in 6-decimal fixed point; an
/// unavailable metric leaves both its cells empty.
pub fn batch_score(bundle: &ModelBundle, backlog: &Backlog) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(batch_header()).expect("in-memory write");
    for story in &backlog.stories {
        let raw = pipeline::score_raw(bundle, &StoryInput::Story(story.clone()));
        let report = assemble_report(&raw, &bundle.bands, bundle.bundle_version);
        let mut row = vec![story.id.clone()];
        row.extend(report.metrics.iter().map(|e| e.value.map(|v| format!("{v:.6}")).unwrap_or_default()));
        row.extend(report.metrics.iter().map(|e| e.band.map(|b| b.name().to_owned()).unwrap_or_default()));
        writer.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("CSV is UTF-8")
}

pub fn report_table(report: &QualityReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "story: {}  bundle: v{}", report.story_id, report.bundle_version);
    let _ = writeln!(out, "{:<16} {:>8} {:>8}  band", "metric", "value", "percent");
    for entry in &report.metrics {
        let value = entry.value.map_or("n/a".to_owned(), |v| format!("{v:.4}"));
        let percent = entry.percent.map_or("n/a".to_owned(), |p| format!("{p:.0}%"));
        let band = entry.band.map_or("-", |b| b.name());
        let _ = writeln!(out, "{:<16} {:>8} {:>8}  {}", entry.name.name(), value, percent, band);
    }
    out
}

fn serve(store_root: &Path, config: ProjectConfig, args: ServeArgs) -> CliResult {
    let mut server_config = ServerConfig::from_env().map_err(CliError::usage)?;
    server_config.store_dir = store_root.to_path_buf();
    if let Some(listen) = &args.listen {
        server_config.listen = listen.parse().map_err(|e| CliError::usage(format!("--listen `{listen}`: {e}")))?;
    }
    if args.cors_origin.is_some() {
        server_config.cors_origin = args.cors_origin.clone();
    }
    let _ = tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .try_init();
    let runtime = tokio::runtime::Runtime::new().map_err(CliError::data)?;
    runtime.block_on(server::serve(server_config, config)).map_err(CliError::data)
}

fn eval(args: EvalArgs, stdout: &mut dyn Write) -> CliResult {
    let predictors = match &args.metrics {
        Some(names) => Some(
            names
                .iter()
                .map(|n| n.trim().parse::<Metric>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(CliError::usage)?,
        ),
        None => None,
    };
    let mut dataset = evalstats::RatingDataset::default();
    let ratings = read_file(&args.ratings)?;
    dataset
        .read_ratings(ratings.as_slice())
        .map_err(|e| CliError::data(format!("{}: {e}", args.ratings.display())))?;
    let scores = read_file(&args.scores)?;
    dataset
        .read_scores(scores.as_slice())
        .map_err(|e| CliError::data(format!("{}: {e}", args.scores.display())))?;
    let options = EvalOptions {
        iqr_factor: args.iqr_factor,
        outlier_scope: if args.pooled { OutlierScope::Pooled } else { OutlierScope::PerExpert },
        keep_outliers: args.keep_outliers,
        weighting: match args.weighting {
            WeightingArg::Linear => Weighting::Linear,
            WeightingArg::Quadratic => Weighting::Quadratic,
        },
        alpha: args.alpha,
        predictors,
        ..EvalOptions::default()
    };
    let report = evalstats::evaluate(&dataset, &options).map_err(CliError::data)?;
    match args.format {
        OutputFormat::Json => to_json(&report, stdout),
        OutputFormat::Table => stdout.write_all(eval_table(&report).as_bytes()).map_err(CliError::data),
    }
}

pub fn eval_table(report: &EvaluationReport) -> String {
    let r = &report.regression;
    let mut out = String::new();
    let _ = writeln!(out, "R² = {:.4}  n = {}  df = {}  alpha = {}", r.r_squared, r.n_used, r.df_residual, r.alpha);
    let _ = writeln!(out, "{:<16} {:>9} {:>9} {:>9} {:>9}  flags", "predictor", "beta", "t", "p", "vif");
    for p in &r.predictors {
        let vif = p.vif.as_ref().map_or("-".to_owned(), |v| if v.infinite { "inf".to_owned() } else { format!("{:.3}", v.value) });
        let mut flags = Vec::new();
        if p.significant {
            flags.push("significant");
        }
        if p.vif.as_ref().is_some_and(|v| v.flagged) {
            flags.push("collinear");
        }
        let _ = writeln!(out, "{:<16} {:>9.4} {:>9.3} {:>9.4} {:>9}  {}", p.name, p.beta, p.t, p.p_value, vif, flags.join(","));
    }
    if !r.dropped.is_empty() {
        let _ = writeln!(out, "dropped (zero variance): {}", r.dropped.join(", "));
    }
    for a in &report.agreement {
        let kappa = a.kappa.map_or_else(|| a.error.clone().unwrap_or_default(), |k| format!("{k:.4}"));
        let _ = writeln!(out, "kappa {} vs {} (n = {}): {}", a.expert_a, a.expert_b, a.shared_stories, kappa);
    }
    let _ = writeln!(out, "ratings dropped: {}  stories excluded: {}", report.ratings_dropped, report.stories_excluded.len());
    out
}
