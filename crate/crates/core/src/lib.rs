//! Retrieval-augmented, multi-tool self-repair loop for generated programs.
//!
//! A [`generator`] backend proposes a program, the [`analyzers`] compile it,
//! scan it for security findings and run it under a symbolic-execution
//! harness, and the [`orchestrator`] feeds error diagnostics back until the
//! program is clean or the repair budget runs out. Clean programs are
//! written back to the [`retrieval`] memory, and [`metrics`] aggregates
//! error labels into rate tables and baseline comparisons.

pub mod analyzers;
pub mod cli;
pub mod domain;
pub mod generator;
pub mod metrics;
pub mod orchestrator;
pub mod retrieval;
pub mod scalar;

pub use domain::{
    classify, serialize_diagnostics, AnalysisReport, CandidateProgram, Channel, ChannelStatus,
    Diagnostic, ErrorLabel, PerChannel, SessionOutcome, SessionTranscript, Severity, TaskSpec,
    TriState,
};

/// Embedding element type used by the CLI and the default store.
pub type Scalar = f64;
pub type Embedding = retrieval::EmbeddingVector<Scalar>;
pub type RepairRecord = retrieval::RepairRecord<Scalar>;
pub type VectorStore = retrieval::VectorStore<Scalar>;

/// Exact rate type used for reported metrics.
pub type Rate = num_rational::BigRational;
pub type RateTable = metrics::RateTable<Rate>;
pub type ComparisonReport = metrics::ComparisonReport<Rate>;
