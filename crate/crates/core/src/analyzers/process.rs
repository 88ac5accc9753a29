use std::collections::BTreeMap;
use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::Duration;

use wait_timeout::ChildExt;

use super::AnalyzerError;

/// Captured result of one tool invocation.
#[derive(Debug, Clone)]
pub struct ToolOutput {
    pub exit_code: Option<i32>,
    pub stdout: String,
    pub stderr: String,
}

impl ToolOutput {
    pub fn success(&self) -> bool {
        self.exit_code == Some(0)
    }

    /// stdout and stderr joined, for fallback diagnostics.
    pub fn combined(&self) -> String {
        let mut text = self.stderr.trim().to_string();
        let out = self.stdout.trim();
        if !out.is_empty() {
            if !text.is_empty() {
                text.push('\n');
            }
            text.push_str(out);
        }
        text
    }
}

/// Replaces `{name}` placeholders in every argv element.
pub fn expand_argv(template: &[String], vars: &BTreeMap<&str, String>) -> Vec<String> {
    template
        .iter()
        .map(|arg| {
            vars.iter()
                .fold(arg.clone(), |acc, (name, value)| acc.replace(&format!("{{{name}}}"), value))
        })
        .collect()
}

/// Runs `argv` in `cwd`, killing it after `timeout`. Output streams go to
/// files under `cwd` named after `label`, so large outputs cannot block the
/// child.
pub fn run_tool(
    argv: &[String],
    cwd: &Path,
    timeout: Duration,
    label: &str,
) -> Result<ToolOutput, AnalyzerError> {
    let program = argv.first().ok_or_else(|| AnalyzerError::ToolUnavailable("<empty argv>".into()))?;
    let stdout_path = cwd.join(format!(".{label}.stdout"));
    let stderr_path = cwd.join(format!(".{label}.stderr"));
    let mut child = Command::new(program)
        .args(&argv[1..])
        .current_dir(cwd)
        .stdin(Stdio::null())
        .stdout(File::create(&stdout_path)?)
        .stderr(File::create(&stderr_path)?)
        .spawn()
        .map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound | std::io::ErrorKind::PermissionDenied => {
                AnalyzerError::ToolUnavailable(program.clone())
            }
            _ => AnalyzerError::Io(e),
        })?;

    let status = match child.wait_timeout(timeout)? {
        Some(status) => status,
        None => {
            let _ = child.kill();
            let _ = child.wait();
            return Err(AnalyzerError::Timeout {
                tool: program.clone(),
                seconds: timeout.as_secs_f64(),
            });
        }
    };
    let read = |p: &Path| fs::read(p).map(|b| String::from_utf8_lossy(&b).into_owned());
    let output = ToolOutput {
        exit_code: status.code(),
        stdout: read(&stdout_path)?,
        stderr: read(&stderr_path)?,
    };
    let _ = fs::remove_file(&stdout_path);
    let _ = fs::remove_file(&stderr_path);
    Ok(output)
}

/// Resolves a program name the way `Command` would: paths are checked
/// directly, bare names are searched on `PATH`.
pub fn resolve_program(program: &str) -> Option<PathBuf> {
    let candidate = Path::new(program);
    if candidate.components().count() > 1 || candidate.is_absolute() {
        return candidate.is_file().then(|| candidate.to_path_buf());
    }
    let path = std::env::var_os("PATH")?;
    std::env::split_paths(&path)
        .map(|dir| dir.join(program))
        .find(|p| p.is_file())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argv(parts: &[&str]) -> Vec<String> {
        parts.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn expands_placeholders() {
        let vars = BTreeMap::from([("source", "main.c".to_string()), ("out", "a.out".to_string())]);
        let out = expand_argv(&argv(&["gcc", "-o", "{out}", "{source}", "-D{source}"]), &vars);
        assert_eq!(out, argv(&["gcc", "-o", "a.out", "main.c", "-Dmain.c"]));
    }

    #[test]
    fn captures_streams_and_exit_code() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_tool(
            &argv(&["sh", "-c", "echo out; echo err >&2; exit 3"]),
            dir.path(),
            Duration::from_secs(10),
            "t",
        )
        .unwrap();
        assert_eq!(out.exit_code, Some(3));
        assert_eq!(out.stdout, "out\n");
        assert_eq!(out.stderr, "err\n");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn missing_binary_is_unavailable() {
        let dir = tempfile::tempdir().unwrap();
        let err = run_tool(&argv(&["/nonexistent/tool"]), dir.path(), Duration::from_secs(1), "t");
        assert!(matches!(err, Err(AnalyzerError::ToolUnavailable(_))));
    }

    #[test]
    fn slow_tool_times_out() {
        let dir = tempfile::tempdir().unwrap();
        let err = run_tool(&argv(&["sleep", "5"]), dir.path(), Duration::from_millis(100), "t");
        assert!(matches!(err, Err(AnalyzerError::Timeout { .. })));
    }

    #[test]
    fn resolves_on_path() {
        assert!(resolve_program("sh").is_some());
        assert!(resolve_program("definitely-not-a-real-tool-xyz").is_none());
        assert!(resolve_program("/bin/sh").is_some());
    }
}
