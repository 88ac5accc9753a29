//! Shared value types: tasks, candidates, diagnostics, error labels and
//! session transcripts, plus the two pure operations over them
//! ([`classify`] and [`serialize_diagnostics`]).
//!
//! Every type here has a canonical snake_case JSON shape that is used by
//! the store, the transcript files and the CLI.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

/// One generation task from a corpus manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: String,
    pub description: String,
    pub language_tag: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub harness_ref: Option<String>,
    pub model_id: String,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.task_id.trim().is_empty() {
            return Err("task_id must be non-empty".into());
        }
        if self.description.trim().is_empty() {
            return Err(format!("task {}: description must be non-empty", self.task_id));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Generated,
    Replayed,
}

/// One generated program for one attempt. `source_text` is exactly the
/// byte sequence handed to the analyzers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateProgram {
    pub task_id: String,
    pub attempt_index: u32,
    pub source_text: String,
    pub provenance: Provenance,
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Compilation,
    Security,
    Semantic,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::Compilation, Channel::Security, Channel::Semantic];

    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Compilation => "compilation",
            Channel::Security => "security",
            Channel::Semantic => "semantic",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
    Note,
}

impl Severity {
    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
            Severity::Note => "note",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SourceLocation {
    pub file: String,
    pub line: u32,
    pub column: u32,
}

impl fmt::Display for SourceLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.file, self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Diagnostic {
    pub channel: Channel,
    pub severity: Severity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule_id: Option<String>,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<SourceLocation>,
}

impl Diagnostic {
    pub fn new(channel: Channel, severity: Severity, message: impl Into<String>) -> Self {
        Self {
            channel,
            severity,
            rule_id: None,
            message: message.into(),
            location: None,
        }
    }

    pub fn with_rule(mut self, rule_id: impl Into<String>) -> Self {
        self.rule_id = Some(rule_id.into());
        self
    }

    pub fn at(mut self, file: impl Into<String>, line: u32, column: u32) -> Self {
        self.location = Some(SourceLocation {
            file: file.into(),
            line: line.max(1),
            column: column.max(1),
        });
        self
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.message.trim().is_empty() {
            return Err("diagnostic message must be non-empty".into());
        }
        if self.channel == Channel::Security && self.rule_id.as_deref().is_none_or(str::is_empty) {
            return Err("security diagnostics require a rule_id".into());
        }
        if let Some(loc) = &self.location {
            if loc.line == 0 || loc.column == 0 {
                return Err("diagnostic locations are 1-based".into());
            }
        }
        Ok(())
    }

    /// Ordering key: (channel, file, line, rule_id, message).
    fn sort_key(&self) -> (Channel, Option<&str>, Option<u32>, Option<&str>, &str) {
        (
            self.channel,
            self.location.as_ref().map(|l| l.file.as_str()),
            self.location.as_ref().map(|l| l.line),
            self.rule_id.as_deref(),
            self.message.as_str(),
        )
    }

    /// Renders the diagnostic as a single feedback line.
    pub fn feedback_line(&self) -> String {
        let mut line = format!("[{}] {}", self.channel, self.severity.as_str());
        if let Some(rule) = &self.rule_id {
            line.push(' ');
            line.push_str(rule);
        }
        if let Some(loc) = &self.location {
            line.push_str(&format!(" {loc}"));
        }
        line.push_str(": ");
        line.push_str(&self.message.split_whitespace().collect::<Vec<_>>().join(" "));
        line
    }
}

/// Total order used for prompts and transcripts.
pub fn compare_diagnostics(a: &Diagnostic, b: &Diagnostic) -> Ordering {
    a.sort_key()
        .cmp(&b.sort_key())
        .then_with(|| a.severity.cmp(&b.severity))
        .then_with(|| a.location.cmp(&b.location))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriState {
    Yes,
    No,
    NotEvaluated,
}

/// The three-dimension error label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ErrorLabel {
    pub compilation_error: bool,
    pub security_error: TriState,
    pub semantic_error: TriState,
}

impl ErrorLabel {
    pub const ALL_CLEAN: ErrorLabel = ErrorLabel {
        compilation_error: false,
        security_error: TriState::No,
        semantic_error: TriState::No,
    };

    pub fn is_all_clean(&self) -> bool {
        *self == Self::ALL_CLEAN
    }

    /// Compilation failures leave the downstream dimensions unevaluated.
    pub fn is_gated(&self) -> bool {
        !self.compilation_error
            || (self.security_error == TriState::NotEvaluated
                && self.semantic_error == TriState::NotEvaluated)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelStatus {
    Ran,
    Skipped,
    ToolError,
}

/// One value per analysis channel.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerChannel<T> {
    pub compilation: T,
    pub security: T,
    pub semantic: T,
}

impl<T> PerChannel<T> {
    pub fn get(&self, channel: Channel) -> &T {
        match channel {
            Channel::Compilation => &self.compilation,
            Channel::Security => &self.security,
            Channel::Semantic => &self.semantic,
        }
    }

    pub fn get_mut(&mut self, channel: Channel) -> &mut T {
        match channel {
            Channel::Compilation => &mut self.compilation,
            Channel::Security => &mut self.security,
            Channel::Semantic => &mut self.semantic,
        }
    }
}

impl PerChannel<ChannelStatus> {
    pub fn uniform(status: ChannelStatus) -> Self {
        Self {
            compilation: status,
            security: status,
            semantic: status,
        }
    }
}

/// Reference to the candidate a report was produced for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateRef {
    pub task_id: String,
    pub attempt_index: u32,
}

/// Merged verdict of all analyzers for one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub candidate: CandidateRef,
    pub diagnostics: PerChannel<Vec<Diagnostic>>,
    pub channel_status: PerChannel<ChannelStatus>,
    pub label: ErrorLabel,
    /// Free-form notes about tool failures (timeouts, missing binaries).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_notes: Vec<String>,
}

impl AnalysisReport {
    /// Builds a report and derives its label; diagnostics are stored in
    /// canonical order.
    pub fn new(
        candidate: CandidateRef,
        mut diagnostics: PerChannel<Vec<Diagnostic>>,
        channel_status: PerChannel<ChannelStatus>,
        tool_notes: Vec<String>,
    ) -> Self {
        for channel in Channel::ALL {
            diagnostics.get_mut(channel).sort_by(compare_diagnostics);
        }
        let label = classify(&diagnostics, &channel_status);
        Self {
            candidate,
            diagnostics,
            channel_status,
            label,
            tool_notes,
        }
    }

    /// Label recomputed from the diagnostics and statuses, ignoring the
    /// stored `label` field.
    pub fn recompute_label(&self) -> ErrorLabel {
        classify(&self.diagnostics, &self.channel_status)
    }

    pub fn all_diagnostics(&self) -> impl Iterator<Item = &Diagnostic> {
        Channel::ALL
            .into_iter()
            .flat_map(move |c| self.diagnostics.get(c).iter())
    }

    pub fn error_diagnostics(&self) -> Vec<Diagnostic> {
        self.all_diagnostics().filter(|d| d.is_error()).cloned().collect()
    }
}

/// Derives the error label from per-channel diagnostics and statuses.
///
/// Security and semantic errors are signalled by error-severity
/// diagnostics on their channel: the security adapter only emits error
/// severity for findings that meet the criticality policy.
pub fn classify(
    diagnostics: &PerChannel<Vec<Diagnostic>>,
    status: &PerChannel<ChannelStatus>,
) -> ErrorLabel {
    let compilation_error = diagnostics.compilation.iter().any(Diagnostic::is_error);
    if compilation_error {
        return ErrorLabel {
            compilation_error,
            security_error: TriState::NotEvaluated,
            semantic_error: TriState::NotEvaluated,
        };
    }
    let downstream = |channel: Channel| match status.get(channel) {
        ChannelStatus::Ran => {
            if diagnostics.get(channel).iter().any(Diagnostic::is_error) {
                TriState::Yes
            } else {
                TriState::No
            }
        }
        ChannelStatus::Skipped | ChannelStatus::ToolError => TriState::NotEvaluated,
    };
    // A compiler that could not be run produced no artifact either.
    let compiled = status.compilation == ChannelStatus::Ran;
    ErrorLabel {
        compilation_error,
        security_error: if compiled { downstream(Channel::Security) } else { TriState::NotEvaluated },
        semantic_error: if compiled { downstream(Channel::Semantic) } else { TriState::NotEvaluated },
    }
}

/// Renders diagnostics as prompt feedback: one line per diagnostic in
/// canonical order, cut at a diagnostic boundary once `budget` characters
/// are used, followed by a `...N more` tail when anything was dropped.
pub fn serialize_diagnostics(diags: &[Diagnostic], budget: usize) -> String {
    let mut sorted: Vec<&Diagnostic> = diags.iter().collect();
    sorted.sort_by(|a, b| compare_diagnostics(a, b));

    let mut out = String::new();
    let mut used = 0usize;
    let mut included = 0usize;
    for diag in &sorted {
        let line = diag.feedback_line();
        let cost = line.chars().count() + usize::from(included > 0);
        if used + cost > budget {
            break;
        }
        if included > 0 {
            out.push('\n');
        }
        out.push_str(&line);
        used += cost;
        included += 1;
    }
    let remaining = sorted.len() - included;
    if remaining > 0 {
        if included > 0 {
            out.push('\n');
        }
        out.push_str(&format!("...{remaining} more"));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionOutcome {
    Clean,
    Exhausted,
    Aborted,
}

/// One generate/analyze cycle inside a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub candidate: CandidateProgram,
    pub report: AnalysisReport,
    pub prompt_text: String,
    pub retrieved_example_ids: Vec<String>,
    pub wall_time_ms: u64,
}

/// Full ordered history of one task's repair loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTranscript {
    pub task: TaskSpec,
    pub attempts: Vec<AttemptRecord>,
    pub outcome: SessionOutcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abort_reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stored_record_id: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl SessionTranscript {
    pub fn final_report(&self) -> Option<&AnalysisReport> {
        self.attempts.last().map(|a| &a.report)
    }

    /// Checks the outcome/attempt invariants against the loop settings the
    /// session ran with.
    pub fn check_invariants(&self, max_repairs: u32, diagnostic_budget: usize) -> Result<(), String> {
        let used = self.attempts.len();
        let bound = 1 + max_repairs as usize;
        if used > bound {
            return Err(format!("{used} attempts exceeds bound {bound}"));
        }
        for (i, attempt) in self.attempts.iter().enumerate() {
            if attempt.candidate.attempt_index as usize != i {
                return Err(format!("attempt {i} has index {}", attempt.candidate.attempt_index));
            }
        }
        let any_clean = self.attempts.iter().any(|a| a.report.label.is_all_clean());
        match self.outcome {
            SessionOutcome::Clean => {
                let last = self.final_report().ok_or("clean outcome with no attempts")?;
                if !last.label.is_all_clean() {
                    return Err("clean outcome but final label is not all-clean".into());
                }
                if self.attempts[..used - 1].iter().any(|a| a.report.label.is_all_clean()) {
                    return Err("loop continued past an all-clean attempt".into());
                }
            }
            SessionOutcome::Exhausted => {
                if used != bound {
                    return Err(format!("exhausted after {used} attempts, expected {bound}"));
                }
                if any_clean {
                    return Err("exhausted outcome contains an all-clean attempt".into());
                }
            }
            SessionOutcome::Aborted => {
                if any_clean {
                    return Err("aborted outcome contains an all-clean attempt".into());
                }
            }
        }
        // Each repair prompt carries the previous attempt's error feedback
        // as serialized under the same budget.
        for pair in self.attempts.windows(2) {
            let feedback = serialize_diagnostics(&pair[0].report.error_diagnostics(), diagnostic_budget);
            if !pair[1].prompt_text.contains(&feedback) {
                return Err(format!(
                    "attempt {} prompt is missing the feedback of attempt {}",
                    pair[1].candidate.attempt_index, pair[0].candidate.attempt_index
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn statuses(c: ChannelStatus, s: ChannelStatus, m: ChannelStatus) -> PerChannel<ChannelStatus> {
        PerChannel {
            compilation: c,
            security: s,
            semantic: m,
        }
    }

    #[test]
    fn compilation_error_gates_downstream() {
        let diags = PerChannel {
            compilation: vec![Diagnostic::new(Channel::Compilation, Severity::Error, "expected ';'")],
            ..Default::default()
        };
        let label = classify(
            &diags,
            &statuses(ChannelStatus::Ran, ChannelStatus::Skipped, ChannelStatus::Skipped),
        );
        assert_eq!(
            label,
            ErrorLabel {
                compilation_error: true,
                security_error: TriState::NotEvaluated,
                semantic_error: TriState::NotEvaluated,
            }
        );
    }

    #[test]
    fn empty_diagnostics_all_ran_is_clean() {
        let label = classify(&PerChannel::default(), &PerChannel::uniform(ChannelStatus::Ran));
        assert!(label.is_all_clean());
    }

    #[test]
    fn critical_security_finding_only() {
        let diags = PerChannel {
            security: vec![Diagnostic::new(Channel::Security, Severity::Error, "unbounded write")
                .with_rule("cpp/unbounded-write")],
            ..Default::default()
        };
        let label = classify(&diags, &PerChannel::uniform(ChannelStatus::Ran));
        assert_eq!(
            label,
            ErrorLabel {
                compilation_error: false,
                security_error: TriState::Yes,
                semantic_error: TriState::No,
            }
        );
    }

    #[test]
    fn tool_error_is_never_clean() {
        let label = classify(
            &PerChannel::default(),
            &statuses(ChannelStatus::Ran, ChannelStatus::ToolError, ChannelStatus::Ran),
        );
        assert_eq!(label.security_error, TriState::NotEvaluated);
        assert!(!label.is_all_clean());

        let label = classify(
            &PerChannel::default(),
            &statuses(ChannelStatus::ToolError, ChannelStatus::Ran, ChannelStatus::Ran),
        );
        assert!(!label.is_all_clean());
    }

    #[test]
    fn warnings_do_not_count_as_errors() {
        let diags = PerChannel {
            compilation: vec![Diagnostic::new(Channel::Compilation, Severity::Warning, "unused variable")],
            security: vec![Diagnostic::new(Channel::Security, Severity::Warning, "minor")
                .with_rule("cpp/minor")],
            ..Default::default()
        };
        assert!(classify(&diags, &PerChannel::uniform(ChannelStatus::Ran)).is_all_clean());
    }

    #[test]
    fn serialize_empty_is_empty() {
        assert_eq!(serialize_diagnostics(&[], 100), "");
    }

    #[test]
    fn serialize_security_line() {
        let d = Diagnostic::new(Channel::Security, Severity::Error, "Potentially unbounded write")
            .with_rule("cpp/unbounded-write")
            .at("main.c", 14, 5);
        let text = serialize_diagnostics(&[d], 1000);
        assert_eq!(text.lines().count(), 1);
        assert!(text.contains("security"));
        assert!(text.contains("cpp/unbounded-write"));
        assert!(text.contains("main.c:14"));
        assert!(text.contains("Potentially unbounded write"));
    }

    #[test]
    fn serialize_truncates_at_boundaries() {
        // Every line is the same width so the budget arithmetic is easy to
        // count by hand: 3 lines + 2 separators.
        let diags: Vec<Diagnostic> = (10..60)
            .map(|line| {
                Diagnostic::new(Channel::Compilation, Severity::Error, "bad token").at("main.c", line, 1)
            })
            .collect();
        let width = diags[0].feedback_line().chars().count();
        let budget = 3 * width + 2;
        let text = serialize_diagnostics(&diags, budget);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[3], "...47 more");
        assert!(lines[0].contains("main.c:10:1"));
        assert!(lines[2].contains("main.c:12:1"));
        assert!(text.chars().count() <= budget + "\n...47 more".len());

        // One character short drops the third line.
        let text = serialize_diagnostics(&diags, budget - 1);
        assert!(text.ends_with("...48 more"));
    }

    #[test]
    fn serialize_orders_by_channel_then_location() {
        let a = Diagnostic::new(Channel::Semantic, Severity::Error, "assertion failed");
        let b = Diagnostic::new(Channel::Compilation, Severity::Error, "x").at("main.c", 9, 1);
        let c = Diagnostic::new(Channel::Compilation, Severity::Error, "y").at("main.c", 2, 1);
        let text = serialize_diagnostics(&[a, b, c], 1000);
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].contains("main.c:2:1"));
        assert!(lines[1].contains("main.c:9:1"));
        assert!(lines[2].starts_with("[semantic]"));
    }

    #[test]
    fn multiline_messages_collapse() {
        let d = Diagnostic::new(Channel::Semantic, Severity::Error, "Error: ASSERTION FAIL\nFile: main.c\n");
        assert_eq!(d.feedback_line(), "[semantic] error: Error: ASSERTION FAIL File: main.c");
    }

    #[test]
    fn diagnostic_validation() {
        assert!(Diagnostic::new(Channel::Security, Severity::Error, "m").validate().is_err());
        assert!(Diagnostic::new(Channel::Compilation, Severity::Error, " ").validate().is_err());
        assert!(Diagnostic::new(Channel::Compilation, Severity::Error, "m").validate().is_ok());
    }

    #[test]
    fn canonical_json_uses_snake_case() {
        let label = ErrorLabel {
            compilation_error: false,
            security_error: TriState::NotEvaluated,
            semantic_error: TriState::Yes,
        };
        let json = serde_json::to_string(&label).unwrap();
        assert_eq!(
            json,
            r#"{"compilation_error":false,"security_error":"not_evaluated","semantic_error":"yes"}"#
        );
    }
}
