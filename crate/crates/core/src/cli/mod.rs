//! Command-line surface: `run`, `report` and `memory`.
//!
//! Exit codes: 0 every session clean, 2 some session exhausted or aborted,
//! 64 configuration error, 65 corrupt input data, 69 a required tool is
//! missing, 1 anything else.

mod config;

pub use config::{load_corpus, EmbedderSelection, GeneratorSelection, RunConfig, API_KEY_ENV, EMBED_KEY_ENV};

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use thiserror::Error;

use crate::analyzers::ToolchainVerifier;
use crate::domain::{ErrorLabel, SessionOutcome, SessionTranscript};
use crate::generator::{Generator, RemoteGenerator, ReplayGenerator, ReplayScript};
use crate::metrics::{self, DenominatorPolicy, MetricsError};
use crate::orchestrator::{CorpusSummary, RepairLoop};
use crate::retrieval::{Embedder, HashedEmbedder, RemoteEmbedder, VectorStore};
use crate::{Rate, Scalar};

pub const EXIT_CLEAN: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_UNREPAIRED: i32 = 2;
pub const EXIT_CONFIG: i32 = 64;
pub const EXIT_DATA: i32 = 65;
pub const EXIT_UNAVAILABLE: i32 = 69;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("tool unavailable: {0}")]
    ToolUnavailable(String),
    #[error("corrupt transcript {path}: {reason}")]
    CorruptTranscript { path: String, reason: String },
    #[error("corrupt store: {0}")]
    CorruptStore(String),
    #[error("no labelled transcripts in {0}")]
    EmptyCorpus(String),
    #[error("record {0} not found")]
    RecordNotFound(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::ToolUnavailable(_) => EXIT_UNAVAILABLE,
            CliError::CorruptTranscript { .. } | CliError::CorruptStore(_) | CliError::EmptyCorpus(_) => {
                EXIT_DATA
            }
            CliError::RecordNotFound(_) | CliError::Io(_) | CliError::Other(_) => EXIT_FAILURE,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mendloop", version, about = "Retrieval-augmented multi-tool repair loop")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every task in the corpus through the repair loop.
    Run(RunArgs),
    /// Compare two transcript directories.
    Report(ReportArgs),
    /// Inspect the retrieval memory.
    Memory(MemoryArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub parallelism: Option<usize>,
    #[arg(long)]
    pub no_retrieval: bool,
    #[arg(long)]
    pub no_writeback: bool,
    #[arg(long)]
    pub max_repairs: Option<u32>,
    /// Overrides the configured output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Check that analyzer executables exist before generating anything.
    #[arg(long)]
    pub probe_tools: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub baseline: PathBuf,
    #[arg(long)]
    pub treated: PathBuf,
    #[arg(long, default_value = "whole_corpus")]
    pub policy: DenominatorPolicy,
    /// Also write comparison.csv and comparison.json here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct MemoryArgs {
    #[command(subcommand)]
    pub action: MemoryAction,
    #[arg(long, global = true)]
    pub store: Option<PathBuf>,
    /// Machine-readable output.
    #[arg(long, global = true)]
    pub json: bool,
}

#[derive(Debug, Clone, Subcommand)]
pub enum MemoryAction {
    List,
    Show { record_id: String },
    Stats,
}

/// Parses `argv`, executes the command and returns the process exit code.
pub fn main_with_args<I, S>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_CLEAN };
            if e.use_stderr() {
                let _ = write!(stderr, "{e}");
            } else {
                let _ = write!(stdout, "{e}");
            }
            return code;
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(&args, stdout, stderr),
        Command::Report(args) => cmd_report(&args, stdout).map(|_| EXIT_CLEAN),
        Command::Memory(args) => cmd_memory(&args, stdout, stderr).map(|_| EXIT_CLEAN),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

/// File name for a task's transcript; characters outside `[A-Za-z0-9._-]`
/// become `_`.
pub fn transcript_file_name(task_id: &str) -> String {
    let safe: String = task_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '_' })
        .collect();
    format!("{safe}.json")
}

fn build_generator(config: &RunConfig) -> Result<Box<dyn Generator>, CliError> {
    match &config.generator {
        GeneratorSelection::Replay { script } => {
            let script = ReplayScript::load(script).map_err(|e| CliError::Config(e.to_string()))?;
            Ok(Box::new(ReplayGenerator::new(script)))
        }
        GeneratorSelection::Remote { .. } => {
            let remote = config.remote_generator().expect("remote selection");
            Ok(Box::new(RemoteGenerator::new(remote).map_err(|e| CliError::Config(e.to_string()))?))
        }
    }
}

fn build_embedder(config: &RunConfig) -> Result<Box<dyn Embedder<Scalar>>, CliError> {
    match &config.embedder {
        EmbedderSelection::Hashed { dimension } => Ok(Box::new(HashedEmbedder::new(*dimension))),
        EmbedderSelection::Remote(remote) => Ok(Box::new(
            RemoteEmbedder::new(remote.clone()).map_err(|e| CliError::Config(e.to_string()))?,
        )),
    }
}

fn load_store(path: &Path, stderr: &mut dyn Write) -> Result<VectorStore<Scalar>, CliError> {
    let loaded = VectorStore::<Scalar>::load(path).map_err(|e| CliError::CorruptStore(e.to_string()))?;
    for warning in &loaded.warnings {
        writeln!(stderr, "warning: {warning}")?;
    }
    Ok(loaded.store)
}

fn summary_json(summary: &CorpusSummary<Rate>, transcripts: &[SessionTranscript]) -> serde_json::Value {
    let outcomes: serde_json::Map<String, serde_json::Value> = transcripts
        .iter()
        .map(|t| (t.task.task_id.clone(), json!(t.outcome)))
        .collect();
    json!({
        "n_tasks": summary.n_tasks,
        "n_clean": summary.n_clean,
        "n_exhausted": summary.n_exhausted,
        "n_aborted": summary.n_aborted,
        "total_generations": summary.total_generations,
        "outcomes": outcomes,
        "rates": summary.rates.as_ref().map(metrics::rate_table_json),
    })
}

/// Executes a corpus run and returns the exit code.
pub fn cmd_run(args: &RunArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, CliError> {
    let mut config = RunConfig::load(&args.config)?;
    if let Some(p) = args.parallelism {
        config.parallelism = p;
    }
    if args.no_retrieval {
        config.loop_config.retrieval_enabled = false;
    }
    if args.no_writeback {
        config.loop_config.writeback_enabled = false;
    }
    if let Some(m) = args.max_repairs {
        config.loop_config.max_repairs = m;
    }
    if let Some(out) = &args.out {
        config.output_dir = out.clone();
    }
    config.probe_tools |= args.probe_tools;
    config.validate()?;

    let tasks = load_corpus(&config.corpus)?;
    crate::orchestrator::validate_corpus(&tasks).map_err(|e| CliError::Config(e.to_string()))?;
    if config.probe_tools {
        config
            .analyzers
            .probe()
            .map_err(|e| CliError::ToolUnavailable(e.to_string()))?;
    }

    let generator = build_generator(&config)?;
    let embedder = build_embedder(&config)?;
    let verifier =
        ToolchainVerifier::new(config.analyzers.clone()).map_err(|e| CliError::Config(e.to_string()))?;
    let store = RwLock::new(load_store(&config.store, stderr)?);

    let repair_loop = RepairLoop {
        config: &config.loop_config,
        generator: generator.as_ref(),
        verifier: &verifier,
        embedder: embedder.as_ref(),
        store: &store,
    };
    let run = repair_loop
        .run_corpus::<Rate>(&tasks, config.parallelism)
        .map_err(|e| CliError::Config(e.to_string()))?;

    fs::create_dir_all(&config.output_dir)?;
    for transcript in &run.transcripts {
        let path = config.output_dir.join(transcript_file_name(&transcript.task.task_id));
        let mut text = serde_json::to_string_pretty(transcript).map_err(|e| CliError::Other(e.to_string()))?;
        text.push('\n');
        fs::write(path, text)?;
    }
    let mut summary = serde_json::to_string_pretty(&summary_json(&run.summary, &run.transcripts))
        .map_err(|e| CliError::Other(e.to_string()))?;
    summary.push('\n');
    fs::write(config.output_dir.join("summary.json"), summary)?;

    if let Some(rates) = &run.summary.rates {
        write!(stdout, "{}", metrics::rate_table_csv(rates))?;
    }
    writeln!(
        stderr,
        "{} tasks: {} clean, {} exhausted, {} aborted ({} generations)",
        run.summary.n_tasks, run.summary.n_clean, run.summary.n_exhausted, run.summary.n_aborted, run.summary.total_generations
    )?;
    let all_clean = run.transcripts.iter().all(|t| t.outcome == SessionOutcome::Clean);
    Ok(if all_clean { EXIT_CLEAN } else { EXIT_UNREPAIRED })
}

/// Reads every transcript in `dir` (file names ending in `.json`, except
/// `summary.json`) in file-name order.
pub fn load_transcripts(dir: &Path) -> Result<Vec<SessionTranscript>, CliError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::CorruptTranscript {
            path: dir.display().to_string(),
            reason: e.to_string(),
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "json"))
        .filter(|p| p.file_name().is_some_and(|n| n != "summary.json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let corrupt = |reason: String| CliError::CorruptTranscript {
                path: p.display().to_string(),
                reason,
            };
            let text = fs::read_to_string(p).map_err(|e| corrupt(e.to_string()))?;
            serde_json::from_str(&text).map_err(|e| corrupt(e.to_string()))
        })
        .collect()
}

/// Final labels recomputed from each transcript's last report; sessions
/// with no attempts carry no label.
pub fn recomputed_labels(transcripts: &[SessionTranscript]) -> Vec<ErrorLabel> {
    transcripts
        .iter()
        .filter_map(|t| t.final_report().map(|r| r.recompute_label()))
        .collect()
}

pub fn cmd_report(args: &ReportArgs, stdout: &mut dyn Write) -> Result<metrics::ComparisonReport<Rate>, CliError> {
    let table = |dir: &Path| -> Result<metrics::RateTable<Rate>, CliError> {
        let labels = recomputed_labels(&load_transcripts(dir)?);
        metrics::aggregate::<Rate>(&labels, args.policy).map_err(|e| match e {
            MetricsError::EmptyCorpus => CliError::EmptyCorpus(dir.display().to_string()),
            other => CliError::Other(other.to_string()),
        })
    };
    let baseline = table(&args.baseline)?;
    let treated = table(&args.treated)?;
    let report = metrics::compare(&baseline, &treated).map_err(|e| CliError::Other(e.to_string()))?;
    let csv = metrics::comparison_csv(&report);
    write!(stdout, "{csv}")?;
    if let Some(out) = &args.out {
        fs::create_dir_all(out)?;
        fs::write(out.join("comparison.csv"), &csv)?;
        let json = serde_json::to_string_pretty(&metrics::comparison_json(&report))
            .map_err(|e| CliError::Other(e.to_string()))?;
        fs::write(out.join("comparison.json"), json + "\n")?;
    }
    Ok(report)
}

fn truncate_chars(text: &str, max: usize) -> String {
    let flat = text.split_whitespace().collect::<Vec<_>>().join(" ");
    if flat.chars().count() <= max {
        flat
    } else {
        let mut cut: String = flat.chars().take(max.saturating_sub(3)).collect();
        cut.push_str("...");
        cut
    }
}

pub fn cmd_memory(args: &MemoryArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let path = args
        .store
        .clone()
        .ok_or_else(|| CliError::Config("--store is required".into()))?;
    let store = load_store(&path, stderr)?;
    match &args.action {
        MemoryAction::List => {
            if args.json {
                let rows: Vec<_> = store
                    .records()
                    .iter()
                    .map(|r| json!({"record_id": r.record_id, "model_id": r.model_id, "task_text": r.task_text}))
                    .collect();
                writeln!(stdout, "{}", serde_json::Value::Array(rows))?;
            } else {
                writeln!(stdout, "{} records", store.len())?;
                for r in store.records() {
                    writeln!(stdout, "{}\t{}\t{}", r.record_id, r.model_id, truncate_chars(&r.task_text, 60))?;
                }
            }
        }
        MemoryAction::Show { record_id } => {
            let record = store
                .get(record_id)
                .ok_or_else(|| CliError::RecordNotFound(record_id.clone()))?;
            if args.json {
                writeln!(stdout, "{}", serde_json::to_string(record).map_err(|e| CliError::Other(e.to_string()))?)?;
            } else {
                writeln!(stdout, "record_id: {}", record.record_id)?;
                writeln!(stdout, "model_id: {}", record.model_id)?;
                writeln!(stdout, "created_at: {}", record.created_at.to_rfc3339())?;
                writeln!(stdout, "task_text: {}", record.task_text)?;
                writeln!(stdout, "final_code:\n{}", record.final_code)?;
            }
        }
        MemoryAction::Stats => {
            let dimension = store.dimension();
            if args.json {
                writeln!(stdout, "{}", json!({"records": store.len(), "dimension": dimension}))?;
            } else {
                writeln!(stdout, "{} records", store.len())?;
                match dimension {
                    Some(d) => writeln!(stdout, "dimension {d}")?,
                    None => writeln!(stdout, "dimension unset")?,
                }
            }
        }
    }
    Ok(())
}
