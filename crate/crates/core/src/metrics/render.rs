use serde::Deserialize;
use serde_json::{json, Value};

use super::{metric_name, ComparisonReport, DimensionRate, MetricsError, RateTable};
use crate::domain::Channel;
use crate::scalar::{format_fixed2, RateScalar};

fn csv_text(rows: Vec<Vec<String>>) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer.write_record(&row).expect("in-memory csv write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory csv flush")).expect("csv is utf-8")
}

/// One row per dimension: `metric,baseline,treated,absolute_reduction`,
/// values rendered to two decimals.
pub fn comparison_csv<T: RateScalar>(report: &ComparisonReport<T>) -> String {
    let mut rows = vec![vec![
        "metric".to_string(),
        "baseline".into(),
        "treated".into(),
        "absolute_reduction".into(),
    ]];
    for channel in Channel::ALL {
        let d = report.dimensions.get(channel);
        rows.push(vec![
            metric_name(channel).to_string(),
            format_fixed2(&d.baseline),
            format_fixed2(&d.treated),
            format_fixed2(&d.absolute_reduction),
        ]);
    }
    csv_text(rows)
}

/// Final-rate comparison across several systems: one column per named
/// table.
pub fn rate_columns_csv<T: RateScalar>(tables: &[(&str, &RateTable<T>)]) -> String {
    let mut header = vec!["metric".to_string()];
    header.extend(tables.iter().map(|(name, _)| name.to_string()));
    let mut rows = vec![header];
    for channel in Channel::ALL {
        let mut row = vec![metric_name(channel).to_string()];
        row.extend(tables.iter().map(|(_, t)| format_fixed2(t.rate(channel))));
        rows.push(row);
    }
    csv_text(rows)
}

fn count(value: Option<u64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

/// `metric,error_rate_percent,n_error,n_not_evaluated,n_total`.
pub fn rate_table_csv<T: RateScalar>(table: &RateTable<T>) -> String {
    let mut rows = vec![vec![
        "metric".to_string(),
        "error_rate_percent".into(),
        "n_error".into(),
        "n_not_evaluated".into(),
        "n_total".into(),
    ]];
    for channel in Channel::ALL {
        let d = table.dimensions.get(channel);
        rows.push(vec![
            metric_name(channel).to_string(),
            format_fixed2(&d.error_rate_percent),
            count(d.n_error),
            count(d.n_not_evaluated),
            count(d.n_total),
        ]);
    }
    csv_text(rows)
}

fn value_json<T: RateScalar>(value: &T) -> Value {
    json!({
        "value": value.to_f64(),
        "exact": value.exact_repr(),
        "rendered": format_fixed2(value),
    })
}

fn dimension_json<T: RateScalar>(d: &DimensionRate<T>) -> Value {
    json!({
        "error_rate_percent": value_json(&d.error_rate_percent),
        "n_total": d.n_total,
        "n_error": d.n_error,
        "n_not_evaluated": d.n_not_evaluated,
    })
}

pub fn rate_table_json<T: RateScalar>(table: &RateTable<T>) -> Value {
    json!({
        "denominator_policy": table.denominator_policy.as_str(),
        "compilation": dimension_json(&table.dimensions.compilation),
        "security": dimension_json(&table.dimensions.security),
        "semantic": dimension_json(&table.dimensions.semantic),
    })
}

/// Full-precision JSON form of a comparison.
pub fn comparison_json<T: RateScalar>(report: &ComparisonReport<T>) -> Value {
    let mut dims = serde_json::Map::new();
    for channel in Channel::ALL {
        let d = report.dimensions.get(channel);
        dims.insert(
            channel.as_str().to_string(),
            json!({
                "baseline": value_json(&d.baseline),
                "treated": value_json(&d.treated),
                "absolute_reduction": value_json(&d.absolute_reduction),
                "relative_reduction": d.relative_reduction.as_ref().map(value_json),
            }),
        );
    }
    json!({
        "baseline": rate_table_json(&report.baseline),
        "treated": rate_table_json(&report.treated),
        "dimensions": dims,
        "clean_rate_security": value_json(&report.clean_rate_security),
    })
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ComparisonRow {
    pub metric: String,
    pub baseline: f64,
    pub treated: f64,
    pub absolute_reduction: f64,
}

/// Reads back the output of [`comparison_csv`].
pub fn parse_comparison_csv(text: &str) -> Result<Vec<ComparisonRow>, MetricsError> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<Vec<ComparisonRow>, _>>()
        .map_err(|e| MetricsError::Malformed(e.to_string()))
}
