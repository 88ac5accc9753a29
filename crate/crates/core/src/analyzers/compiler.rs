//! Compiler adapter. Diagnostics are read from the GCC-style JSON stream
//! (`-fdiagnostics-format=json`) on stderr.

use serde::Deserialize;

use super::process::{run_tool, ToolOutput};
use super::{AnalyzerConfig, AnalyzerError, Workspace};
use crate::domain::{Channel, Diagnostic, Severity};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompileStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompileOutcome {
    pub status: CompileStatus,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Deserialize)]
struct JsonDiagnostic {
    kind: String,
    message: String,
    #[serde(default)]
    option: Option<String>,
    #[serde(default)]
    locations: Vec<JsonLocation>,
    #[serde(default)]
    children: Vec<JsonDiagnostic>,
}

#[derive(Debug, Deserialize)]
struct JsonLocation {
    caret: JsonPosition,
}

#[derive(Debug, Deserialize)]
struct JsonPosition {
    file: String,
    line: u32,
    #[serde(default)]
    column: u32,
}

fn severity_of(kind: &str) -> Severity {
    match kind {
        "warning" => Severity::Warning,
        "note" => Severity::Note,
        // "error", "fatal error", "sorry", "ice" and anything unknown
        _ => Severity::Error,
    }
}

fn flatten(diag: JsonDiagnostic, out: &mut Vec<Diagnostic>) {
    let mut converted = Diagnostic::new(Channel::Compilation, severity_of(&diag.kind), diag.message);
    converted.rule_id = diag.option;
    if let Some(loc) = diag.locations.first() {
        converted = converted.at(loc.caret.file.clone(), loc.caret.line, loc.caret.column);
    }
    out.push(converted);
    for child in diag.children {
        flatten(child, out);
    }
}

/// Parses a JSON diagnostic stream. The stream may be interleaved with
/// plain-text lines (e.g. linker output); those are ignored here. Returns
/// `None` when no JSON array is found at all.
pub fn parse_json_diagnostics(stderr: &str) -> Option<Vec<Diagnostic>> {
    let mut batches: Vec<Vec<JsonDiagnostic>> = Vec::new();
    if let Ok(all) = serde_json::from_str::<Vec<JsonDiagnostic>>(stderr.trim()) {
        batches.push(all);
    } else {
        for line in stderr.lines().map(str::trim).filter(|l| l.starts_with('[')) {
            if let Ok(batch) = serde_json::from_str::<Vec<JsonDiagnostic>>(line) {
                batches.push(batch);
            }
        }
        if batches.is_empty() {
            return None;
        }
    }
    let mut out = Vec::new();
    for diag in batches.into_iter().flatten() {
        flatten(diag, &mut out);
    }
    Some(out.into_iter().filter(|d| !d.message.trim().is_empty()).collect())
}

/// Turns one compiler run into an outcome: failed iff the exit code is
/// nonzero or an error diagnostic was parsed. Output that is not a JSON
/// diagnostic stream becomes one error wrapping the raw text, as does a
/// failing run that produced no parseable error.
pub fn interpret_compiler_output(output: &ToolOutput) -> CompileOutcome {
    let mut diagnostics = match parse_json_diagnostics(&output.stderr) {
        Some(diags) => diags,
        None => {
            let raw = output.combined();
            if raw.trim().is_empty() {
                Vec::new()
            } else {
                vec![Diagnostic::new(Channel::Compilation, Severity::Error, raw)]
            }
        }
    };
    let has_error = diagnostics.iter().any(Diagnostic::is_error);
    if !output.success() && !has_error {
        let raw = output.combined();
        let message = if raw.is_empty() {
            format!("compiler exited with status {:?}", output.exit_code)
        } else {
            raw
        };
        diagnostics.push(Diagnostic::new(Channel::Compilation, Severity::Error, message));
    }
    let failed = !output.success() || diagnostics.iter().any(Diagnostic::is_error);
    CompileOutcome {
        status: if failed { CompileStatus::Failed } else { CompileStatus::Ok },
        diagnostics,
    }
}

/// Compiles the workspace's source with `cfg.compiler_cmd`.
pub fn run_compiler(ws: &Workspace, cfg: &AnalyzerConfig) -> Result<CompileOutcome, AnalyzerError> {
    if ws.source_text().trim().is_empty() {
        return Ok(CompileOutcome {
            status: CompileStatus::Failed,
            diagnostics: vec![Diagnostic::new(
                Channel::Compilation,
                Severity::Error,
                "empty source text: nothing to compile",
            )],
        });
    }
    let argv = ws.expand(&cfg.compiler_cmd);
    let output = run_tool(&argv, ws.dir(), cfg.compiler_timeout(), "compile")?;
    Ok(interpret_compiler_output(&output))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn output(code: i32, stderr: &str) -> ToolOutput {
        ToolOutput {
            exit_code: Some(code),
            stdout: String::new(),
            stderr: stderr.to_string(),
        }
    }

    #[test]
    fn clean_stream() {
        let outcome = interpret_compiler_output(&output(0, "[]\n"));
        assert_eq!(outcome.status, CompileStatus::Ok);
        assert!(outcome.diagnostics.is_empty());
    }

    #[test]
    fn warning_only_is_ok() {
        let stderr = r#"[{"kind": "warning", "message": "unused variable 'x'", "option": "-Wunused-variable", "locations": [{"caret": {"file": "main.c", "line": 2, "column": 7}}], "children": []}]"#;
        let outcome = interpret_compiler_output(&output(0, stderr));
        assert_eq!(outcome.status, CompileStatus::Ok);
        assert_eq!(outcome.diagnostics[0].rule_id.as_deref(), Some("-Wunused-variable"));
        assert_eq!(outcome.diagnostics[0].severity, Severity::Warning);
    }

    #[test]
    fn unparseable_failure_wraps_raw_output() {
        let outcome = interpret_compiler_output(&output(1, "main.c:1: something broke\n"));
        assert_eq!(outcome.status, CompileStatus::Failed);
        assert_eq!(outcome.diagnostics.len(), 1);
        assert_eq!(outcome.diagnostics[0].message, "main.c:1: something broke");
    }

    #[test]
    fn nonzero_exit_without_errors_synthesizes_one() {
        let stderr = "[]\n/usr/bin/ld: undefined reference to `foo'\ncollect2: error: ld returned 1 exit status\n";
        let outcome = interpret_compiler_output(&output(1, stderr));
        assert_eq!(outcome.status, CompileStatus::Failed);
        assert_eq!(outcome.diagnostics.len(), 1);
        assert!(outcome.diagnostics[0].message.contains("undefined reference"));
    }

    #[test]
    fn children_become_notes() {
        let stderr = r#"[{"kind": "error", "message": "conflicting types", "locations": [{"caret": {"file": "main.c", "line": 4, "column": 5}}], "children": [{"kind": "note", "message": "previous declaration", "locations": [{"caret": {"file": "main.c", "line": 1, "column": 5}}]}]}]"#;
        let outcome = interpret_compiler_output(&output(1, stderr));
        assert_eq!(outcome.diagnostics.len(), 2);
        assert_eq!(outcome.diagnostics[1].severity, Severity::Note);
    }
}
