//! Error-rate tables over the three label dimensions and baseline/treated
//! comparisons.
//!
//! All arithmetic happens in the table's scalar type (exact for rationals);
//! rounding to two decimals (half to even) happens only when rendering.

mod render;

pub use render::{
    comparison_csv, comparison_json, parse_comparison_csv, rate_columns_csv, rate_table_csv,
    rate_table_json, ComparisonRow,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Channel, ErrorLabel, PerChannel, TriState};
use crate::scalar::RateScalar;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("cannot aggregate an empty corpus")]
    EmptyCorpus,
    #[error("denominator policies differ: {baseline:?} vs {treated:?}")]
    PolicyMismatch {
        baseline: DenominatorPolicy,
        treated: DenominatorPolicy,
    },
    #[error("malformed table: {0}")]
    Malformed(String),
}

/// How unevaluated security/semantic dimensions enter a rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenominatorPolicy {
    /// errors / all programs; unevaluated programs count as non-errors.
    #[default]
    WholeCorpus,
    /// errors / evaluated programs.
    EvaluatedOnly,
    /// (errors + unevaluated) / all programs.
    GatedAsError,
}

impl DenominatorPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            DenominatorPolicy::WholeCorpus => "whole_corpus",
            DenominatorPolicy::EvaluatedOnly => "evaluated_only",
            DenominatorPolicy::GatedAsError => "gated_as_error",
        }
    }
}

impl std::str::FromStr for DenominatorPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "whole_corpus" => Ok(Self::WholeCorpus),
            "evaluated_only" => Ok(Self::EvaluatedOnly),
            "gated_as_error" => Ok(Self::GatedAsError),
            other => Err(format!("unknown denominator policy `{other}`")),
        }
    }
}

/// Display name of a dimension in rendered tables.
pub fn metric_name(channel: Channel) -> &'static str {
    match channel {
        Channel::Compilation => "Compilation",
        Channel::Security => "Security",
        Channel::Semantic => "Semantic",
    }
}

/// Error rate of one dimension. Counts are absent for tables built from
/// externally reported rates.
#[derive(Debug, Clone, PartialEq)]
pub struct DimensionRate<T> {
    pub error_rate_percent: T,
    pub n_total: Option<u64>,
    pub n_error: Option<u64>,
    pub n_not_evaluated: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateTable<T> {
    pub denominator_policy: DenominatorPolicy,
    pub dimensions: PerChannel<DimensionRate<T>>,
}

impl<T: RateScalar> RateTable<T> {
    /// Table from already-computed percentages, in
    /// (compilation, security, semantic) order.
    pub fn from_rates(policy: DenominatorPolicy, rates: [T; 3]) -> Self {
        let [compilation, security, semantic] = rates.map(|r| DimensionRate {
            error_rate_percent: r,
            n_total: None,
            n_error: None,
            n_not_evaluated: None,
        });
        Self {
            denominator_policy: policy,
            dimensions: PerChannel {
                compilation,
                security,
                semantic,
            },
        }
    }

    /// Like [`RateTable::from_rates`] but parsing decimal strings such as
    /// `"36.35"`.
    pub fn from_decimal_rates(policy: DenominatorPolicy, rates: [&str; 3]) -> Result<Self, MetricsError> {
        let parse = |s: &str| T::from_decimal(s).ok_or_else(|| MetricsError::Malformed(format!("bad rate `{s}`")));
        Ok(Self::from_rates(policy, [parse(rates[0])?, parse(rates[1])?, parse(rates[2])?]))
    }

    pub fn rate(&self, channel: Channel) -> &T {
        &self.dimensions.get(channel).error_rate_percent
    }
}

fn dimension_state(label: &ErrorLabel, channel: Channel) -> TriState {
    match channel {
        Channel::Compilation => {
            if label.compilation_error {
                TriState::Yes
            } else {
                TriState::No
            }
        }
        Channel::Security => label.security_error,
        Channel::Semantic => label.semantic_error,
    }
}

/// Per-dimension error rates over a corpus of labels.
///
/// Under `evaluated_only` a dimension with no evaluated programs has rate 0.
pub fn aggregate<T: RateScalar>(
    labels: &[ErrorLabel],
    policy: DenominatorPolicy,
) -> Result<RateTable<T>, MetricsError> {
    if labels.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    let n_total = labels.len() as u64;
    let rate_for = |channel: Channel| {
        let (mut errors, mut unevaluated) = (0u64, 0u64);
        for label in labels {
            match dimension_state(label, channel) {
                TriState::Yes => errors += 1,
                TriState::NotEvaluated => unevaluated += 1,
                TriState::No => {}
            }
        }
        let (numerator, denominator) = match policy {
            DenominatorPolicy::WholeCorpus => (errors, n_total),
            DenominatorPolicy::EvaluatedOnly => (errors, n_total - unevaluated),
            DenominatorPolicy::GatedAsError => (errors + unevaluated, n_total),
        };
        let rate = if denominator == 0 {
            T::zero()
        } else {
            T::from_ratio(numerator, denominator) * T::hundred()
        };
        DimensionRate {
            error_rate_percent: rate,
            n_total: Some(n_total),
            n_error: Some(errors),
            n_not_evaluated: Some(unevaluated),
        }
    };
    Ok(RateTable {
        denominator_policy: policy,
        dimensions: PerChannel {
            compilation: rate_for(Channel::Compilation),
            security: rate_for(Channel::Security),
            semantic: rate_for(Channel::Semantic),
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DimensionComparison<T> {
    pub baseline: T,
    pub treated: T,
    /// Percentage points.
    pub absolute_reduction: T,
    /// Percent of the baseline rate; absent when the baseline is zero.
    pub relative_reduction: Option<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport<T> {
    pub baseline: RateTable<T>,
    pub treated: RateTable<T>,
    pub dimensions: PerChannel<DimensionComparison<T>>,
    /// 100 − treated security error rate.
    pub clean_rate_security: T,
}

pub fn compare<T: RateScalar>(
    baseline: &RateTable<T>,
    treated: &RateTable<T>,
) -> Result<ComparisonReport<T>, MetricsError> {
    if baseline.denominator_policy != treated.denominator_policy {
        return Err(MetricsError::PolicyMismatch {
            baseline: baseline.denominator_policy,
            treated: treated.denominator_policy,
        });
    }
    let row = |channel: Channel| {
        let b = baseline.rate(channel).clone();
        let t = treated.rate(channel).clone();
        let absolute = b.clone() - t.clone();
        let relative = (!b.is_zero()).then(|| absolute.clone() / b.clone() * T::hundred());
        DimensionComparison {
            baseline: b,
            treated: t,
            absolute_reduction: absolute,
            relative_reduction: relative,
        }
    };
    Ok(ComparisonReport {
        baseline: baseline.clone(),
        treated: treated.clone(),
        dimensions: PerChannel {
            compilation: row(Channel::Compilation),
            security: row(Channel::Security),
            semantic: row(Channel::Semantic),
        },
        clean_rate_security: T::hundred() - treated.rate(Channel::Security).clone(),
    })
}
