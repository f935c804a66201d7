//! Aggregation of repeated runs into min/median/max tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// Minimum, median and maximum of a sample. The median of an even-sized sample is the
/// mean of the two middle values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderStats {
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

pub fn order_stats(values: &[f64]) -> Option<OrderStats> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let median = if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    };
    Some(OrderStats {
        min: v[0],
        median,
        max: v[n - 1],
    })
}

/// One measured value from one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub test: String,
    pub metric: String,
    pub method: String,
    pub run: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub test: String,
    pub metric: String,
    pub method: String,
    pub runs: usize,
    pub stats: OrderStats,
}

/// Groups measurements by `(test, metric, method)` and summarises each group.
/// Groups keep the order in which their first measurement appeared.
pub fn aggregate(measurements: &[Measurement]) -> Vec<ReportRow> {
    let mut order: Vec<(String, String, String)> = Vec::new();
    let mut groups: BTreeMap<(String, String, String), Vec<f64>> = BTreeMap::new();
    for m in measurements {
        let key = (m.test.clone(), m.metric.clone(), m.method.clone());
        let entry = groups.entry(key.clone()).or_default();
        if entry.is_empty() {
            order.push(key);
        }
        entry.push(m.value);
    }
    order
        .into_iter()
        .map(|key| {
            let values = &groups[&key];
            ReportRow {
                runs: values.len(),
                stats: order_stats(values).expect("group is non-empty"),
                test: key.0,
                metric: key.1,
                method: key.2,
            }
        })
        .collect()
}

/// Aligned text table.
pub fn render_table(rows: &[ReportRow]) -> String {
    let headers = ["test", "metric", "method", "runs", "min", "median", "max"];
    let cells: Vec<[String; 7]> = rows
        .iter()
        .map(|r| {
            [
                r.test.clone(),
                r.metric.clone(),
                r.method.clone(),
                r.runs.to_string(),
                format_value(r.stats.min),
                format_value(r.stats.median),
                format_value(r.stats.max),
            ]
        })
        .collect();
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, fields: &[&str]| {
        let parts: Vec<String> = fields
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (f, w))| if i < 3 { format!("{f:<w$}") } else { format!("{f:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&mut out, &headers);
    for row in &cells {
        let refs: Vec<&str> = row.iter().map(String::as_str).collect();
        line(&mut out, &refs);
    }
    out
}

/// Tab-separated `test metric method runs min median max` lines.
pub fn render_tsv(rows: &[ReportRow]) -> String {
    let mut out = String::new();
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.test, r.metric, r.method, r.runs, r.stats.min, r.stats.median, r.stats.max
        );
    }
    out
}

fn format_value(v: f64) -> String {
    if v == 0.0 || (v.abs() >= 1e-3 && v.abs() < 1e4) {
        format!("{v:.4}")
    } else {
        format!("{v:.3e}")
    }
}
