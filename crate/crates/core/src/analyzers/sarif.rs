//! SARIF 2.1.0 ingestion and the criticality policy.
//!
//! Only the fields needed for findings are modelled:
//! `runs[].results[].{ruleId, ruleIndex, level, message, locations[0].physicalLocation, suppressions}`
//! and the rule metadata `properties."security-severity"`.

use std::collections::{BTreeMap, HashMap};
use std::fs;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::process::run_tool;
use super::{AnalyzerConfig, AnalyzerError, SarifSource, Workspace};
use crate::domain::{Channel, Diagnostic, Severity, SourceLocation};

/// Default cut-off on the 0–10 `security-severity` scale.
pub const DEFAULT_SEVERITY_THRESHOLD: f64 = 7.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecurityFinding {
    pub rule_id: String,
    pub severity_score: Option<f64>,
    pub level: Severity,
    pub message: String,
    pub location: Option<SourceLocation>,
}

#[derive(Deserialize)]
struct Log {
    runs: Vec<Run>,
}

#[derive(Deserialize)]
struct Run {
    #[serde(default)]
    tool: Option<Tool>,
    #[serde(default)]
    results: Option<Vec<SarifResult>>,
}

#[derive(Deserialize)]
struct Tool {
    driver: ToolComponent,
    #[serde(default)]
    extensions: Vec<ToolComponent>,
}

#[derive(Deserialize)]
struct ToolComponent {
    #[serde(default)]
    rules: Vec<Rule>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct Rule {
    id: String,
    #[serde(default)]
    default_configuration: Option<RuleConfiguration>,
    #[serde(default)]
    properties: Option<HashMap<String, Value>>,
}

#[derive(Deserialize)]
struct RuleConfiguration {
    #[serde(default)]
    level: Option<String>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct SarifResult {
    #[serde(default)]
    rule_id: Option<String>,
    #[serde(default)]
    rule_index: Option<usize>,
    #[serde(default)]
    rule: Option<RuleReference>,
    #[serde(default)]
    level: Option<String>,
    #[serde(default)]
    message: Option<Message>,
    #[serde(default)]
    locations: Vec<Location>,
    #[serde(default)]
    suppressions: Option<Vec<Suppression>>,
}

#[derive(Deserialize)]
struct RuleReference {
    #[serde(default)]
    id: Option<String>,
    #[serde(default)]
    index: Option<usize>,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    markdown: Option<String>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct Location {
    #[serde(default)]
    physical_location: Option<PhysicalLocation>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct PhysicalLocation {
    #[serde(default)]
    artifact_location: Option<ArtifactLocation>,
    #[serde(default)]
    region: Option<Region>,
}

#[derive(Deserialize)]
struct ArtifactLocation {
    #[serde(default)]
    uri: Option<String>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct Region {
    #[serde(default)]
    start_line: Option<u32>,
    #[serde(default)]
    start_column: Option<u32>,
}

#[derive(Deserialize)]
struct Suppression {
    #[serde(default)]
    status: Option<String>,
}

fn parse_level(level: &str) -> Result<Severity, AnalyzerError> {
    match level {
        "error" => Ok(Severity::Error),
        "warning" => Ok(Severity::Warning),
        "note" | "none" => Ok(Severity::Note),
        other => Err(AnalyzerError::MalformedSarif(format!("unknown result level `{other}`"))),
    }
}

fn severity_score(rule: &Rule) -> Result<Option<f64>, AnalyzerError> {
    let Some(value) = rule.properties.as_ref().and_then(|p| p.get("security-severity")) else {
        return Ok(None);
    };
    let score = match value {
        Value::String(s) => s.trim().parse::<f64>().ok(),
        Value::Number(n) => n.as_f64(),
        _ => None,
    };
    match score {
        Some(s) if (0.0..=10.0).contains(&s) => Ok(Some(s)),
        _ => Err(AnalyzerError::MalformedSarif(format!(
            "rule {} has invalid security-severity {value}",
            rule.id
        ))),
    }
}

/// A suppression only hides a result when it has not been rejected.
fn is_suppressed(result: &SarifResult) -> bool {
    result
        .suppressions
        .as_deref()
        .unwrap_or_default()
        .iter()
        .any(|s| s.status.as_deref() != Some("rejected"))
}

fn strip_file_scheme(uri: &str) -> &str {
    uri.strip_prefix("file://").unwrap_or(uri)
}

/// Parses a SARIF 2.1.0 document into one finding per un-suppressed
/// result.
pub fn parse_sarif(document: &str) -> Result<Vec<SecurityFinding>, AnalyzerError> {
    let log: Log = serde_json::from_str(document)
        .map_err(|e| AnalyzerError::MalformedSarif(e.to_string()))?;
    let mut findings = Vec::new();
    for run in log.runs {
        let rules: Vec<&Rule> = run
            .tool
            .as_ref()
            .map(|t| t.driver.rules.iter().chain(t.extensions.iter().flat_map(|e| e.rules.iter())).collect())
            .unwrap_or_default();
        let driver_rules: &[Rule] = run.tool.as_ref().map(|t| t.driver.rules.as_slice()).unwrap_or_default();
        for result in run.results.unwrap_or_default() {
            if is_suppressed(&result) {
                continue;
            }
            let index = result.rule_index.or(result.rule.as_ref().and_then(|r| r.index));
            let indexed_rule = index.and_then(|i| driver_rules.get(i));
            let rule_id = result
                .rule_id
                .clone()
                .or_else(|| result.rule.as_ref().and_then(|r| r.id.clone()))
                .or_else(|| indexed_rule.map(|r| r.id.clone()))
                .filter(|id| !id.is_empty())
                .ok_or_else(|| AnalyzerError::MalformedSarif("result without a rule id".into()))?;
            let rule = indexed_rule
                .filter(|r| r.id == rule_id)
                .or_else(|| rules.iter().copied().find(|r| r.id == rule_id));

            let level = match (&result.level, rule.and_then(|r| r.default_configuration.as_ref())) {
                (Some(level), _) => parse_level(level)?,
                (None, Some(RuleConfiguration { level: Some(level) })) => parse_level(level)?,
                _ => Severity::Warning,
            };
            let severity_score = match rule {
                Some(rule) => severity_score(rule)?,
                None => None,
            };
            let message = result
                .message
                .as_ref()
                .and_then(|m| m.text.clone().or_else(|| m.markdown.clone()))
                .filter(|m| !m.trim().is_empty())
                .unwrap_or_else(|| rule_id.clone());
            let location = result
                .locations
                .first()
                .and_then(|l| l.physical_location.as_ref())
                .and_then(|p| {
                    let uri = p.artifact_location.as_ref()?.uri.as_deref()?;
                    let region = p.region.as_ref();
                    Some(SourceLocation {
                        file: strip_file_scheme(uri).to_string(),
                        line: region.and_then(|r| r.start_line).unwrap_or(1).max(1),
                        column: region.and_then(|r| r.start_column).unwrap_or(1).max(1),
                    })
                });
            findings.push(SecurityFinding {
                rule_id,
                severity_score,
                level,
                message,
                location,
            });
        }
    }
    Ok(findings)
}

/// Criticality policy: a scored finding is critical at or above the
/// threshold; an unscored one is critical when its level is `error`.
pub fn is_critical(finding: &SecurityFinding, threshold: f64) -> bool {
    match finding.severity_score {
        Some(score) => score >= threshold,
        None => finding.level == Severity::Error,
    }
}

/// Maps findings onto security-channel diagnostics. Only critical findings
/// carry error severity, so the label can be recomputed from diagnostics
/// alone.
pub fn findings_to_diagnostics(findings: &[SecurityFinding], threshold: f64) -> Vec<Diagnostic> {
    findings
        .iter()
        .map(|f| {
            let severity = if is_critical(f, threshold) {
                Severity::Error
            } else if f.level == Severity::Note {
                Severity::Note
            } else {
                Severity::Warning
            };
            let mut message = f.message.clone();
            if let Some(score) = f.severity_score {
                message.push_str(&format!(" (security-severity {score})"));
            }
            Diagnostic {
                channel: Channel::Security,
                severity,
                rule_id: Some(f.rule_id.clone()),
                message,
                location: f.location.clone(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecurityOutcome {
    pub findings: Vec<SecurityFinding>,
    pub diagnostics: Vec<Diagnostic>,
}

/// Produces security findings for a compiled candidate, either by running
/// the scanner or by ingesting a SARIF file prepared out of band.
pub fn run_security(ws: &Workspace, cfg: &AnalyzerConfig) -> Result<SecurityOutcome, AnalyzerError> {
    let document = match &cfg.sarif_source {
        SarifSource::InvokeTool { argv } => {
            let writes_file = argv.iter().any(|a| a.contains("{sarif}"));
            let output = run_tool(&ws.expand(argv), ws.dir(), cfg.security_timeout(), "security")?;
            if !output.success() {
                return Err(AnalyzerError::ToolFailed {
                    tool: argv.first().cloned().unwrap_or_default(),
                    detail: format!("exit status {:?}: {}", output.exit_code, output.combined()),
                });
            }
            if writes_file {
                fs::read_to_string(ws.sarif_path())
                    .map_err(|e| AnalyzerError::MissingSarif(format!("{}: {e}", ws.sarif_path().display())))?
            } else {
                output.stdout
            }
        }
        SarifSource::IngestFile { pattern } => {
            let vars = BTreeMap::from([
                ("task_id", ws.task_id().to_string()),
                ("attempt", ws.attempt_index().to_string()),
            ]);
            let path = super::process::expand_argv(std::slice::from_ref(pattern), &vars).remove(0);
            let path = match &cfg.sarif_root {
                Some(root) => root.join(path),
                None => path.into(),
            };
            fs::read_to_string(&path)
                .map_err(|e| AnalyzerError::MissingSarif(format!("{}: {e}", path.display())))?
        }
    };
    let findings = parse_sarif(&document)?;
    let diagnostics = findings_to_diagnostics(&findings, cfg.security_severity_threshold);
    Ok(SecurityOutcome { findings, diagnostics })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn finding(score: Option<f64>, level: Severity) -> SecurityFinding {
        SecurityFinding {
            rule_id: "cpp/x".into(),
            severity_score: score,
            level,
            message: "m".into(),
            location: None,
        }
    }

    #[test]
    fn criticality_policy_table() {
        let cases = [
            (Some(9.3), Severity::Error, 7.0, true),
            (Some(4.0), Severity::Error, 7.0, false),
            (Some(7.0), Severity::Note, 7.0, true),
            (Some(6.99), Severity::Warning, 7.0, false),
            (None, Severity::Error, 7.0, true),
            (None, Severity::Warning, 7.0, false),
            (None, Severity::Note, 0.0, false),
            (Some(0.0), Severity::Note, 0.0, true),
        ];
        for (score, level, threshold, expected) in cases {
            assert_eq!(
                is_critical(&finding(score, level), threshold),
                expected,
                "{score:?} {level:?} {threshold}"
            );
        }
    }

    #[test]
    fn empty_runs() {
        assert!(parse_sarif(r#"{"version":"2.1.0","runs":[]}"#).unwrap().is_empty());
        assert!(parse_sarif(r#"{"version":"2.1.0","runs":[{"tool":{"driver":{"name":"x"}},"results":[]}]}"#)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn level_defaults_to_warning_then_rule_default() {
        let doc = r#"{"runs":[{"tool":{"driver":{"name":"q","rules":[
            {"id":"a"},{"id":"b","defaultConfiguration":{"level":"note"}}]}},
          "results":[{"ruleId":"a","message":{"text":"x"}},{"ruleId":"b","message":{"text":"y"}}]}]}"#;
        let findings = parse_sarif(doc).unwrap();
        assert_eq!(findings[0].level, Severity::Warning);
        assert_eq!(findings[1].level, Severity::Note);
    }

    #[test]
    fn rule_index_resolves_id_and_numeric_severity() {
        let doc = r#"{"runs":[{"tool":{"driver":{"name":"q","rules":[
            {"id":"cpp/overflow","properties":{"security-severity":8.1}}]}},
          "results":[{"ruleIndex":0,"message":{"text":"overflow"}}]}]}"#;
        let findings = parse_sarif(doc).unwrap();
        assert_eq!(findings[0].rule_id, "cpp/overflow");
        assert_eq!(findings[0].severity_score, Some(8.1));
    }

    #[test]
    fn rejected_suppression_keeps_result() {
        let doc = r#"{"runs":[{"results":[
            {"ruleId":"a","message":{"text":"x"},"suppressions":[{"kind":"inSource","status":"rejected"}]},
            {"ruleId":"b","message":{"text":"y"},"suppressions":[{"kind":"inSource"}]}]}]}"#;
        let findings = parse_sarif(doc).unwrap();
        assert_eq!(findings.len(), 1);
        assert_eq!(findings[0].rule_id, "a");
    }

    #[test]
    fn structural_errors_are_malformed() {
        for doc in [
            "not json",
            "{}",
            r#"{"runs":{}}"#,
            r#"{"runs":[{"results":[{"message":{"text":"no rule"}}]}]}"#,
            r#"{"runs":[{"results":[{"ruleId":"a","level":"fatal"}]}]}"#,
            r#"{"runs":[{"tool":{"driver":{"rules":[{"id":"a","properties":{"security-severity":"high"}}]}},"results":[{"ruleId":"a"}]}]}"#,
        ] {
            assert!(matches!(parse_sarif(doc), Err(AnalyzerError::MalformedSarif(_))), "{doc}");
        }
    }

    #[test]
    fn only_critical_findings_become_errors() {
        let diags = findings_to_diagnostics(
            &[finding(Some(9.3), Severity::Error), finding(Some(3.0), Severity::Error)],
            7.0,
        );
        assert_eq!(diags[0].severity, Severity::Error);
        assert_eq!(diags[1].severity, Severity::Warning);
        assert!(diags.iter().all(|d| d.rule_id.as_deref() == Some("cpp/x")));
    }
}
