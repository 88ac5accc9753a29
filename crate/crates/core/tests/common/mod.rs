#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use mendloop::analyzers::Verifier;
use mendloop::domain::{
    AnalysisReport, CandidateProgram, CandidateRef, Channel, ChannelStatus, Diagnostic, PerChannel,
    Severity, TaskSpec,
};
use mendloop::generator::ReplayScript;

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

pub fn task(i: usize) -> TaskSpec {
    TaskSpec {
        task_id: format!("task-{i:03}"),
        description: format!("write a C function number {i} that copies at most n bytes between buffers"),
        language_tag: "c".into(),
        harness_ref: Some("harness.sh".into()),
        model_id: "replay-model".into(),
    }
}

/// Fault kinds understood by [`MarkerVerifier`] and the shell stubs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    None,
    Compile,
    Security,
    Semantic,
}

impl Fault {
    pub fn marker(self) -> &'static str {
        match self {
            Fault::None => "",
            Fault::Compile => "FAULT_COMPILE",
            Fault::Security => "FAULT_SECURITY",
            Fault::Semantic => "FAULT_SEMANTIC",
        }
    }
}

pub fn completion(task_id: &str, attempt: u32, fault: Fault) -> String {
    format!(
        "Here is the program.\n```c\n#include <string.h>\n/* {task_id} attempt {attempt} {} */\nint main(void) {{\n    return 0;\n}}\n```\n",
        fault.marker()
    )
}

pub fn script_for(task_id: &str, faults: &[Fault], script: &mut ReplayScript) {
    for (attempt, fault) in faults.iter().enumerate() {
        script.insert(task_id, attempt as u32, completion(task_id, attempt as u32, *fault));
    }
}

/// In-process analyzer stand-in keyed on marker strings in the source.
pub struct MarkerVerifier;

impl Verifier for MarkerVerifier {
    fn analyze(&self, _task: &TaskSpec, c: &CandidateProgram) -> AnalysisReport {
        let mut diags: PerChannel<Vec<Diagnostic>> = PerChannel::default();
        let mut status = PerChannel::uniform(ChannelStatus::Ran);
        if c.source_text.contains(Fault::Compile.marker()) {
            diags.compilation.push(
                Diagnostic::new(Channel::Compilation, Severity::Error, "expected ';' before 'return'")
                    .at("main.c", 3, 5),
            );
            status.security = ChannelStatus::Skipped;
            status.semantic = ChannelStatus::Skipped;
        } else {
            if c.source_text.contains(Fault::Security.marker()) {
                diags.security.push(
                    Diagnostic::new(Channel::Security, Severity::Error, "unbounded write (security-severity 9.3)")
                        .with_rule("cpp/unbounded-write")
                        .at("main.c", 2, 1),
                );
            }
            if c.source_text.contains(Fault::Semantic.marker()) {
                diags.semantic.push(
                    Diagnostic::new(Channel::Semantic, Severity::Error, "Error: ASSERTION FAIL")
                        .with_rule("symbolic/assert")
                        .at("main.c", 4, 1),
                );
            }
        }
        AnalysisReport::new(
            CandidateRef {
                task_id: c.task_id.clone(),
                attempt_index: c.attempt_index,
            },
            diags,
            status,
            Vec::new(),
        )
    }
}

const COMPILER_STUB: &str = r#"if grep -q FAULT_COMPILE "$1"; then
  echo '[{"kind": "error", "message": "expected semicolon before return", "children": [], "locations": [{"caret": {"file": "main.c", "line": 3, "column": 5}}]}]' >&2
  exit 1
fi
echo '[]' >&2
"#;

const SCANNER_STUB: &str = r#"if grep -q FAULT_SECURITY "$1"; then
  cat > "$2" <<'SARIF'
{"version": "2.1.0", "runs": [{"tool": {"driver": {"name": "stub", "rules": [{"id": "cpp/unbounded-write", "defaultConfiguration": {"level": "error"}, "properties": {"security-severity": "9.3"}}]}}, "results": [{"ruleId": "cpp/unbounded-write", "ruleIndex": 0, "message": {"text": "unbounded write"}, "locations": [{"physicalLocation": {"artifactLocation": {"uri": "main.c"}, "region": {"startLine": 2}}}]}]}]}
SARIF
else
  echo '{"version": "2.1.0", "runs": []}' > "$2"
fi
"#;

const HARNESS_STUB: &str = r#"if grep -q FAULT_SEMANTIC "$1"; then
  printf 'Error: ASSERTION FAIL: out == expected\nFile: main.c\nLine: 4\n' > "$2/test000001.assert.err"
fi
exit 0
"#;

pub struct CliFixture {
    pub dir: PathBuf,
    pub config: PathBuf,
}

/// Writes a self-contained run directory: shell-stub analyzers, a corpus
/// manifest, a replay script and `run.json`. Data paths in the config are
/// relative to `dir`; the stub commands are absolute.
pub fn write_cli_fixture(dir: &Path, sessions: &[(TaskSpec, Vec<Fault>)], extra: &str) -> CliFixture {
    fs::create_dir_all(dir.join("stubs")).unwrap();
    fs::write(dir.join("stubs/cc.sh"), COMPILER_STUB).unwrap();
    fs::write(dir.join("stubs/scan.sh"), SCANNER_STUB).unwrap();
    fs::write(dir.join("harness.sh"), HARNESS_STUB).unwrap();

    let mut script = ReplayScript::new();
    let mut corpus = String::new();
    for (task, faults) in sessions {
        script_for(&task.task_id, faults, &mut script);
        corpus.push_str(&serde_json::to_string(task).unwrap());
        corpus.push('\n');
    }
    fs::write(dir.join("corpus.jsonl"), corpus).unwrap();
    fs::write(dir.join("script.json"), script.to_json()).unwrap();

    let stubs = dir.join("stubs");
    let config = format!(
        r#"{{
  "generator": {{"backend": "replay", "script": "script.json"}},
  "embedder": {{"backend": "hashed", "dimension": 384}},
  "analyzers": {{
    "compiler_cmd": ["sh", "{cc}", "{{source}}"],
    "sarif_source": {{"mode": "invoke_tool", "argv": ["sh", "{scan}", "{{source}}", "{{sarif}}"]}},
    "symbolic_cmd": ["sh", "{{harness}}", "{{source}}", "{{outdir}}"]
  }},
  "corpus": "corpus.jsonl",
  "output_dir": "out",
  "store": "memory.jsonl"{extra}
}}
"#,
        cc = stubs.join("cc.sh").display(),
        scan = stubs.join("scan.sh").display(),
    );
    let config_path = dir.join("run.json");
    fs::write(&config_path, config).unwrap();
    CliFixture {
        dir: dir.to_path_buf(),
        config: config_path,
    }
}

/// Raw transcript text with the value of every `wall_time_ms` line
/// replaced by 0. Everything else is compared byte for byte.
pub fn normalized_transcript(path: &Path) -> String {
    let text = fs::read_to_string(path).unwrap();
    let mut out = String::with_capacity(text.len());
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim_start();
        if trimmed.starts_with("\"wall_time_ms\":") {
            let indent = &line[..line.len() - trimmed.len()];
            let comma = if trimmed.trim_end().ends_with(',') { "," } else { "" };
            out.push_str(&format!("{indent}\"wall_time_ms\": 0{comma}\n"));
        } else {
            out.push_str(line);
        }
    }
    out
}
