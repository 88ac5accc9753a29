//! Symbolic-execution harness adapter. The tool is expected to write one
//! `*.err` file per failing path into its output directory (the KLEE
//! convention); each becomes one semantic diagnostic.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::process::run_tool;
use super::{AnalyzerConfig, AnalyzerError, Workspace};
use crate::domain::{Channel, Diagnostic, Severity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymbolicExitPolicy {
    /// Failure is signalled by error artifacts; a nonzero exit without
    /// artifacts means the tool itself broke.
    #[default]
    ArtifactsOnly,
    /// Any nonzero exit also counts as a semantic failure.
    NonzeroIsFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymbolicStatus {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymbolicOutcome {
    pub status: SymbolicStatus,
    pub diagnostics: Vec<Diagnostic>,
}

fn collect_err_files(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    if !dir.is_dir() {
        return Ok(());
    }
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_err_files(&path, out)?;
        } else if path.extension().is_some_and(|e| e == "err") {
            out.push(path);
        }
    }
    Ok(())
}

/// `test000001.assert.err` -> `assert`.
fn error_kind(path: &Path) -> Option<String> {
    let stem = path.file_stem()?.to_str()?;
    stem.split_once('.').map(|(_, kind)| kind.to_string()).filter(|k| !k.is_empty())
}

/// Converts one error artifact into a diagnostic. `File:` and `Line:`
/// headers, when present, become the location.
pub fn artifact_diagnostic(path: &Path, body: &str) -> Diagnostic {
    let message = body.trim();
    let message = if message.is_empty() {
        path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
    } else {
        message.to_string()
    };
    let mut diag = Diagnostic::new(Channel::Semantic, Severity::Error, message);
    diag.rule_id = error_kind(path).map(|k| format!("symbolic/{k}"));
    let header = |name: &str| {
        body.lines()
            .find_map(|l| l.strip_prefix(name).map(|v| v.trim().to_string()))
    };
    if let (Some(file), Some(line)) = (header("File:"), header("Line:").and_then(|l| l.parse::<u32>().ok())) {
        let file = Path::new(&file)
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or(file);
        diag = diag.at(file, line, 1);
    }
    diag
}

/// Scans `outdir` recursively for error artifacts, in path order.
pub fn scan_error_artifacts(outdir: &Path) -> std::io::Result<Vec<Diagnostic>> {
    let mut files = Vec::new();
    collect_err_files(outdir, &mut files)?;
    files.sort();
    files
        .iter()
        .map(|p| {
            let body = fs::read(p)?;
            Ok(artifact_diagnostic(p, &String::from_utf8_lossy(&body)))
        })
        .collect()
}

/// Runs the harness for a compiled candidate. Returns `Ok(None)` when the
/// task has no harness, i.e. the channel is skipped.
pub fn run_symbolic(
    ws: &Workspace,
    harness_ref: Option<&str>,
    cfg: &AnalyzerConfig,
) -> Result<Option<SymbolicOutcome>, AnalyzerError> {
    let Some(harness) = harness_ref else {
        return Ok(None);
    };
    let harness_path = match &cfg.harness_root {
        Some(root) => root.join(harness),
        None => PathBuf::from(harness),
    };
    let outdir = ws.symbolic_outdir();
    if outdir.exists() {
        fs::remove_dir_all(&outdir)?;
    }
    fs::create_dir_all(&outdir)?;

    let mut argv = ws.expand(&cfg.symbolic_cmd);
    for arg in &mut argv {
        *arg = arg.replace("{harness}", &harness_path.to_string_lossy());
    }
    let output = run_tool(&argv, ws.dir(), cfg.symbolic_timeout(), "symbolic")?;
    let mut diagnostics = scan_error_artifacts(&outdir)?;

    if !output.success() && diagnostics.is_empty() {
        match cfg.symbolic_exit_policy {
            SymbolicExitPolicy::ArtifactsOnly => {
                return Err(AnalyzerError::ToolFailed {
                    tool: argv.first().cloned().unwrap_or_default(),
                    detail: format!("exit status {:?} without error artifacts: {}", output.exit_code, output.combined()),
                });
            }
            SymbolicExitPolicy::NonzeroIsFailure => {
                let raw = output.combined();
                let message = if raw.is_empty() {
                    format!("harness exited with status {:?}", output.exit_code)
                } else {
                    raw
                };
                diagnostics.push(Diagnostic::new(Channel::Semantic, Severity::Error, message));
            }
        }
    }
    let status = if diagnostics.is_empty() { SymbolicStatus::Pass } else { SymbolicStatus::Fail };
    Ok(Some(SymbolicOutcome { status, diagnostics }))
}
