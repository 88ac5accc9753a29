//! Tool adapters: compiler, security scanner (SARIF) and symbolic-execution
//! harness, plus the gated pipeline that runs them for one candidate.
//!
//! Every candidate gets its own temporary directory; tools run with that
//! directory as their working directory and see the source under a relative
//! name (`main.c`, `main.cpp`, ...), so reported file names do not depend on
//! where the directory was created.

pub mod compiler;
pub mod process;
pub mod sarif;
pub mod symbolic;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use compiler::{run_compiler, CompileOutcome, CompileStatus};
pub use sarif::{is_critical, parse_sarif, run_security, SecurityFinding, SecurityOutcome};
pub use symbolic::{run_symbolic, SymbolicExitPolicy, SymbolicOutcome, SymbolicStatus};

use crate::domain::{
    AnalysisReport, CandidateProgram, CandidateRef, Channel, ChannelStatus, Diagnostic, PerChannel,
    TaskSpec,
};

#[derive(Debug, Error)]
pub enum AnalyzerError {
    #[error("tool unavailable: {0}")]
    ToolUnavailable(String),
    #[error("{tool} timed out after {seconds}s")]
    Timeout { tool: String, seconds: f64 },
    #[error("malformed SARIF: {0}")]
    MalformedSarif(String),
    #[error("SARIF input missing: {0}")]
    MissingSarif(String),
    #[error("{tool} failed: {detail}")]
    ToolFailed { tool: String, detail: String },
    #[error("invalid analyzer config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Where security findings come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SarifSource {
    /// Run a scanner. If the argv mentions `{sarif}` the document is read
    /// from that file afterwards, otherwise from stdout.
    InvokeTool { argv: Vec<String> },
    /// Read a pre-computed document; `{task_id}` and `{attempt}` in the
    /// pattern are substituted.
    IngestFile { pattern: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalyzerConfig {
    /// Placeholders: `{source}`, `{out}`, `{workdir}`, `{task_id}`, `{attempt}`.
    pub compiler_cmd: Vec<String>,
    /// Seconds.
    pub compiler_timeout: f64,
    pub sarif_source: SarifSource,
    pub security_timeout: f64,
    pub security_severity_threshold: f64,
    /// Adds `{harness}` and `{outdir}` to the compiler placeholders.
    pub symbolic_cmd: Vec<String>,
    pub symbolic_timeout: f64,
    pub symbolic_exit_policy: SymbolicExitPolicy,
    /// Base directory for relative `harness_ref`s.
    pub harness_root: Option<PathBuf>,
    /// Base directory for relative SARIF ingest patterns.
    pub sarif_root: Option<PathBuf>,
    /// Parent of the per-candidate temp dirs (system temp dir if unset).
    pub workdir_root: Option<PathBuf>,
}

fn argv(parts: &[&str]) -> Vec<String> {
    parts.iter().map(|s| s.to_string()).collect()
}

impl Default for AnalyzerConfig {
    fn default() -> Self {
        Self {
            compiler_cmd: argv(&["gcc", "-fdiagnostics-format=json", "-o", "{out}", "{source}"]),
            compiler_timeout: 30.0,
            sarif_source: SarifSource::IngestFile {
                pattern: "sarif/{task_id}/{attempt}.sarif".into(),
            },
            security_timeout: 300.0,
            security_severity_threshold: sarif::DEFAULT_SEVERITY_THRESHOLD,
            symbolic_cmd: argv(&["sh", "{harness}", "{source}", "{outdir}"]),
            symbolic_timeout: 120.0,
            symbolic_exit_policy: SymbolicExitPolicy::default(),
            harness_root: None,
            sarif_root: None,
            workdir_root: None,
        }
    }
}

fn seconds(value: f64) -> Duration {
    Duration::from_secs_f64(value.max(0.0))
}

impl AnalyzerConfig {
    pub fn validate(&self) -> Result<(), AnalyzerError> {
        let bad = |m: &str| Err(AnalyzerError::InvalidConfig(m.into()));
        for (name, t) in [
            ("compiler_timeout", self.compiler_timeout),
            ("security_timeout", self.security_timeout),
            ("symbolic_timeout", self.symbolic_timeout),
        ] {
            if !(t.is_finite() && t > 0.0) {
                return bad(&format!("{name} must be > 0"));
            }
        }
        if !(0.0..=10.0).contains(&self.security_severity_threshold) {
            return bad("security_severity_threshold must be in [0, 10]");
        }
        if self.compiler_cmd.is_empty() || self.symbolic_cmd.is_empty() {
            return bad("compiler_cmd and symbolic_cmd must be non-empty");
        }
        if matches!(&self.sarif_source, SarifSource::InvokeTool { argv } if argv.is_empty()) {
            return bad("sarif_source.argv must be non-empty");
        }
        Ok(())
    }

    pub fn compiler_timeout(&self) -> Duration {
        seconds(self.compiler_timeout)
    }

    pub fn security_timeout(&self) -> Duration {
        seconds(self.security_timeout)
    }

    pub fn symbolic_timeout(&self) -> Duration {
        seconds(self.symbolic_timeout)
    }

    /// Checks that every configured executable can be found.
    pub fn probe(&self) -> Result<(), AnalyzerError> {
        let mut programs = vec![&self.compiler_cmd[0], &self.symbolic_cmd[0]];
        if let SarifSource::InvokeTool { argv } = &self.sarif_source {
            programs.push(&argv[0]);
        }
        for program in programs {
            if process::resolve_program(program).is_none() {
                return Err(AnalyzerError::ToolUnavailable(program.clone()));
            }
        }
        Ok(())
    }
}

/// File name the candidate is written under, by language tag.
pub fn source_file_name(language_tag: &str) -> String {
    match language_tag.to_ascii_lowercase().as_str() {
        "c" | "" => "main.c".into(),
        "cpp" | "c++" | "cxx" | "cc" => "main.cpp".into(),
        other => format!("main.{other}"),
    }
}

/// Disposable per-candidate directory holding the source file and tool
/// outputs. Removed on drop.
pub struct Workspace {
    dir: tempfile::TempDir,
    source_name: String,
    source_text: String,
    task_id: String,
    attempt_index: u32,
}

impl Workspace {
    pub fn create(
        cfg: &AnalyzerConfig,
        language_tag: &str,
        candidate: &CandidateProgram,
    ) -> Result<Self, AnalyzerError> {
        let mut builder = tempfile::Builder::new();
        builder.prefix("mendloop-");
        let dir = match &cfg.workdir_root {
            Some(root) => {
                fs::create_dir_all(root)?;
                builder.tempdir_in(root)?
            }
            None => builder.tempdir()?,
        };
        let source_name = source_file_name(language_tag);
        fs::write(dir.path().join(&source_name), candidate.source_text.as_bytes())?;
        Ok(Self {
            dir,
            source_name,
            source_text: candidate.source_text.clone(),
            task_id: candidate.task_id.clone(),
            attempt_index: candidate.attempt_index,
        })
    }

    pub fn dir(&self) -> &Path {
        self.dir.path()
    }

    pub fn source_text(&self) -> &str {
        &self.source_text
    }

    pub fn task_id(&self) -> &str {
        &self.task_id
    }

    pub fn attempt_index(&self) -> u32 {
        self.attempt_index
    }

    pub fn sarif_path(&self) -> PathBuf {
        self.dir().join("security.sarif")
    }

    pub fn symbolic_outdir(&self) -> PathBuf {
        self.dir().join("symbolic-out")
    }

    /// Expands the shared placeholders; unknown ones are left untouched.
    pub fn expand(&self, template: &[String]) -> Vec<String> {
        let vars = BTreeMap::from([
            ("source", self.source_name.clone()),
            ("out", "candidate.out".to_string()),
            ("sarif", "security.sarif".to_string()),
            ("outdir", "symbolic-out".to_string()),
            ("workdir", self.dir().to_string_lossy().into_owned()),
            ("task_id", self.task_id.clone()),
            ("attempt", self.attempt_index.to_string()),
        ]);
        process::expand_argv(template, &vars)
    }
}

/// Anything that can turn a candidate into an analysis report.
pub trait Verifier: Send + Sync {
    fn analyze(&self, task: &TaskSpec, candidate: &CandidateProgram) -> AnalysisReport;
}

/// The real pipeline: compile, then security scan, then symbolic harness.
/// Downstream channels are skipped when the candidate does not compile.
#[derive(Debug, Clone)]
pub struct ToolchainVerifier {
    config: AnalyzerConfig,
}

impl ToolchainVerifier {
    pub fn new(config: AnalyzerConfig) -> Result<Self, AnalyzerError> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &AnalyzerConfig {
        &self.config
    }
}

impl Verifier for ToolchainVerifier {
    fn analyze(&self, task: &TaskSpec, candidate: &CandidateProgram) -> AnalysisReport {
        let candidate_ref = CandidateRef {
            task_id: candidate.task_id.clone(),
            attempt_index: candidate.attempt_index,
        };
        let mut diagnostics: PerChannel<Vec<Diagnostic>> = PerChannel::default();
        let mut status = PerChannel::uniform(ChannelStatus::Skipped);
        let mut notes = Vec::new();
        let record_failure = |status: &mut PerChannel<ChannelStatus>,
                              notes: &mut Vec<String>,
                              channel: Channel,
                              e: AnalyzerError| {
            log::warn!("{} channel for {}#{}: {e}", channel, candidate.task_id, candidate.attempt_index);
            *status.get_mut(channel) = ChannelStatus::ToolError;
            notes.push(format!("{channel}: {e}"));
        };

        let ws = match Workspace::create(&self.config, &task.language_tag, candidate) {
            Ok(ws) => ws,
            Err(e) => {
                record_failure(&mut status, &mut notes, Channel::Compilation, e);
                return AnalysisReport::new(candidate_ref, diagnostics, status, notes);
            }
        };

        match run_compiler(&ws, &self.config) {
            Ok(outcome) => {
                status.compilation = ChannelStatus::Ran;
                diagnostics.compilation = outcome.diagnostics;
                if outcome.status == CompileStatus::Failed {
                    return AnalysisReport::new(candidate_ref, diagnostics, status, notes);
                }
            }
            Err(e) => {
                record_failure(&mut status, &mut notes, Channel::Compilation, e);
                return AnalysisReport::new(candidate_ref, diagnostics, status, notes);
            }
        }

        match run_security(&ws, &self.config) {
            Ok(outcome) => {
                status.security = ChannelStatus::Ran;
                diagnostics.security = outcome.diagnostics;
            }
            Err(e) => record_failure(&mut status, &mut notes, Channel::Security, e),
        }

        match run_symbolic(&ws, task.harness_ref.as_deref(), &self.config) {
            Ok(Some(outcome)) => {
                status.semantic = ChannelStatus::Ran;
                diagnostics.semantic = outcome.diagnostics;
            }
            Ok(None) => {}
            Err(e) => record_failure(&mut status, &mut notes, Channel::Semantic, e),
        }

        AnalysisReport::new(candidate_ref, diagnostics, status, notes)
    }
}
