//! The closed feedback loop: retrieve, prompt, generate, analyze, feed
//! error diagnostics back, and write clean programs to the store.
//!
//! A session makes one initial generation and at most `max_repairs` repair
//! generations. Retrieval is keyed on the task description only, so it is
//! done once per session and the same examples appear in every prompt.

mod prompt;

pub use prompt::{build_prompt, PromptTemplate, RepairContext, DEFAULT_TEMPLATE_ID};

use std::collections::HashSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analyzers::Verifier;
use crate::domain::{
    serialize_diagnostics, AttemptRecord, CandidateProgram, ErrorLabel, SessionOutcome,
    SessionTranscript, TaskSpec,
};
use crate::generator::{extract_code, DecodingParams, Generator, GeneratorRequest};
use crate::metrics::{aggregate, DenominatorPolicy, RateTable};
use crate::retrieval::{Embedder, EmbeddingVector, RepairRecord, SharedStore};
use crate::scalar::{EmbeddingScalar, RateScalar};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OrchestratorError {
    #[error("duplicate task_id `{0}` in corpus")]
    DuplicateTaskId(String),
    #[error("invalid task: {0}")]
    InvalidTask(String),
    #[error("invalid loop config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopConfig {
    pub max_repairs: u32,
    pub retrieval_k: usize,
    pub prompt_template_id: String,
    /// Character budget for the feedback section.
    pub diagnostic_budget: usize,
    pub retrieval_enabled: bool,
    pub writeback_enabled: bool,
    pub decoding: DecodingParams,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            max_repairs: 3,
            retrieval_k: crate::retrieval::DEFAULT_RETRIEVAL_K,
            prompt_template_id: DEFAULT_TEMPLATE_ID.into(),
            diagnostic_budget: 8000,
            retrieval_enabled: true,
            writeback_enabled: true,
            decoding: DecodingParams::default(),
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<&'static PromptTemplate, OrchestratorError> {
        if self.diagnostic_budget == 0 {
            return Err(OrchestratorError::InvalidConfig("diagnostic_budget must be > 0".into()));
        }
        if self.decoding.max_tokens == 0 {
            return Err(OrchestratorError::InvalidConfig("decoding.max_tokens must be > 0".into()));
        }
        if !(self.decoding.temperature.is_finite() && self.decoding.temperature >= 0.0) {
            return Err(OrchestratorError::InvalidConfig("decoding.temperature must be >= 0".into()));
        }
        PromptTemplate::lookup(&self.prompt_template_id).ok_or_else(|| {
            OrchestratorError::InvalidConfig(format!(
                "unknown prompt template `{}`",
                self.prompt_template_id
            ))
        })
    }
}

/// Outcome counts plus error rates over the final label of every session
/// that produced at least one attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSummary<R> {
    pub n_tasks: usize,
    pub n_clean: usize,
    pub n_exhausted: usize,
    pub n_aborted: usize,
    pub total_generations: usize,
    pub rates: Option<RateTable<R>>,
}

impl<R: RateScalar> CorpusSummary<R> {
    pub fn from_transcripts(transcripts: &[SessionTranscript], policy: DenominatorPolicy) -> Self {
        let count = |o: SessionOutcome| transcripts.iter().filter(|t| t.outcome == o).count();
        let labels: Vec<ErrorLabel> = transcripts
            .iter()
            .filter_map(|t| t.final_report().map(|r| r.recompute_label()))
            .collect();
        Self {
            n_tasks: transcripts.len(),
            n_clean: count(SessionOutcome::Clean),
            n_exhausted: count(SessionOutcome::Exhausted),
            n_aborted: count(SessionOutcome::Aborted),
            total_generations: transcripts.iter().map(|t| t.attempts.len()).sum(),
            rates: aggregate(&labels, policy).ok(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CorpusRun<R> {
    pub transcripts: Vec<SessionTranscript>,
    pub summary: CorpusSummary<R>,
}

/// Everything a session needs. The store is the only shared mutable state.
pub struct RepairLoop<'a, T: EmbeddingScalar> {
    pub config: &'a LoopConfig,
    pub generator: &'a dyn Generator,
    pub verifier: &'a dyn Verifier,
    pub embedder: &'a dyn Embedder<T>,
    pub store: &'a SharedStore<T>,
}

impl<'a, T: EmbeddingScalar> RepairLoop<'a, T> {
    fn retrieve(
        &self,
        task: &TaskSpec,
        notes: &mut Vec<String>,
    ) -> (Option<EmbeddingVector<T>>, Vec<RepairRecord<T>>) {
        let needs_query = (self.config.retrieval_enabled && self.config.retrieval_k > 0)
            || self.config.writeback_enabled;
        if !needs_query {
            return (None, Vec::new());
        }
        let query = match self.embedder.embed(&task.description) {
            Ok(q) => q,
            Err(e) => {
                notes.push(format!("embedding failed: {e}"));
                return (None, Vec::new());
            }
        };
        if !self.config.retrieval_enabled || self.config.retrieval_k == 0 {
            return (Some(query), Vec::new());
        }
        let hits = {
            let store = self.store.read().unwrap_or_else(|p| p.into_inner());
            store.top_k(&query, self.config.retrieval_k)
        };
        match hits {
            Ok(hits) => (Some(query), hits.into_iter().map(|h| h.record).collect()),
            Err(e) => {
                notes.push(format!("retrieval failed: {e}"));
                (Some(query), Vec::new())
            }
        }
    }

    fn write_back(
        &self,
        task: &TaskSpec,
        query: Option<EmbeddingVector<T>>,
        final_code: &str,
        label: ErrorLabel,
        notes: &mut Vec<String>,
    ) -> Option<String> {
        let Some(embedding) = query else {
            notes.push("write-back skipped: no embedding for task".into());
            return None;
        };
        let record = RepairRecord::new(&task.description, final_code, embedding, label, &task.model_id);
        let mut store = self.store.write().unwrap_or_else(|p| p.into_inner());
        match store.store_repair(record) {
            Ok(id) => Some(id),
            Err(e) => {
                log::error!("write-back for {} failed: {e}", task.task_id);
                notes.push(format!("write-back failed: {e}"));
                None
            }
        }
    }

    /// Runs one task to a clean program, exhaustion, or a generator failure.
    pub fn run_session(&self, task: &TaskSpec) -> SessionTranscript {
        let template = PromptTemplate::lookup(&self.config.prompt_template_id)
            .or_else(|| PromptTemplate::lookup(DEFAULT_TEMPLATE_ID))
            .expect("default template exists");
        let mut notes = Vec::new();
        let (query, retrieved) = self.retrieve(task, &mut notes);
        let retrieved_ids: Vec<String> = retrieved.iter().map(|r| r.record_id.clone()).collect();

        let mut attempts = Vec::new();
        let mut repair: Option<RepairContext> = None;
        for attempt_index in 0..=self.config.max_repairs {
            let prompt_text = build_prompt(task, &retrieved, repair.as_ref(), template);
            let request = GeneratorRequest {
                prompt_text: prompt_text.clone(),
                model_id: task.model_id.clone(),
                max_tokens: self.config.decoding.max_tokens,
                temperature: self.config.decoding.temperature,
                seed: self.config.decoding.seed,
                task_id: task.task_id.clone(),
                attempt_index,
            };
            let started = Instant::now();
            let completion = match self.generator.generate(&request) {
                Ok(text) => text,
                Err(e) => {
                    log::error!("{} attempt {attempt_index}: {e}", task.task_id);
                    return SessionTranscript {
                        task: task.clone(),
                        attempts,
                        outcome: SessionOutcome::Aborted,
                        abort_reason: Some(e.to_string()),
                        stored_record_id: None,
                        notes,
                    };
                }
            };
            let candidate = CandidateProgram {
                task_id: task.task_id.clone(),
                attempt_index,
                source_text: extract_code(&completion, &task.language_tag),
                provenance: self.generator.provenance(),
            };
            let report = self.verifier.analyze(task, &candidate);
            let wall_time_ms = started.elapsed().as_millis() as u64;
            let clean = report.label.is_all_clean();
            let label = report.label;

            let mut feedback = serialize_diagnostics(&report.error_diagnostics(), self.config.diagnostic_budget);
            if !report.tool_notes.is_empty() {
                if !feedback.is_empty() {
                    feedback.push('\n');
                }
                feedback.push_str(&format!("(analysis incomplete: {})", report.tool_notes.join("; ")));
            }
            let next_repair = RepairContext {
                feedback,
                previous_source: candidate.source_text.clone(),
            };
            attempts.push(AttemptRecord {
                candidate,
                report,
                prompt_text,
                retrieved_example_ids: retrieved_ids.clone(),
                wall_time_ms,
            });

            if clean {
                let final_code = &attempts.last().expect("just pushed").candidate.source_text;
                let stored_record_id = if self.config.writeback_enabled {
                    self.write_back(task, query, final_code, label, &mut notes)
                } else {
                    None
                };
                return SessionTranscript {
                    task: task.clone(),
                    attempts,
                    outcome: SessionOutcome::Clean,
                    abort_reason: None,
                    stored_record_id,
                    notes,
                };
            }
            repair = Some(next_repair);
        }
        SessionTranscript {
            task: task.clone(),
            attempts,
            outcome: SessionOutcome::Exhausted,
            abort_reason: None,
            stored_record_id: None,
            notes,
        }
    }

    /// Runs every task with at most `parallelism` sessions in flight.
    /// Transcripts come back in input order. Write-backs are visible to
    /// sessions that start later.
    pub fn run_corpus<R: RateScalar>(
        &self,
        tasks: &[TaskSpec],
        parallelism: usize,
    ) -> Result<CorpusRun<R>, OrchestratorError> {
        validate_corpus(tasks)?;
        let workers = parallelism.max(1).min(tasks.len().max(1));
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<SessionTranscript>>> = Mutex::new(vec![None; tasks.len()]);

        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let index = next.fetch_add(1, Ordering::Relaxed);
                    let Some(task) = tasks.get(index) else {
                        break;
                    };
                    let transcript = self.run_session(task);
                    slots.lock().unwrap_or_else(|p| p.into_inner())[index] = Some(transcript);
                });
            }
        });

        let transcripts: Vec<SessionTranscript> = slots
            .into_inner()
            .unwrap_or_else(|p| p.into_inner())
            .into_iter()
            .map(|t| t.expect("every task ran"))
            .collect();
        let summary = CorpusSummary::from_transcripts(&transcripts, DenominatorPolicy::WholeCorpus);
        Ok(CorpusRun { transcripts, summary })
    }
}

/// Task ids must be unique and every task well-formed.
pub fn validate_corpus(tasks: &[TaskSpec]) -> Result<(), OrchestratorError> {
    let mut seen = HashSet::new();
    for task in tasks {
        task.validate().map_err(OrchestratorError::InvalidTask)?;
        if !seen.insert(task.task_id.as_str()) {
            return Err(OrchestratorError::DuplicateTaskId(task.task_id.clone()));
        }
    }
    Ok(())
}
