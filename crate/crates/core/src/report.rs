//! Study reports and their CSV / JSON serializations.
//!
//! CSV is the canonical output. Every row carries the base columns
//! `statistic,E,scale,N,K_or_eta,estimate,stderr,trials,seed`, followed by any
//! study-specific columns. Floats are written with 17 significant digits.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use serde_json::{json, Map, Value};

use crate::error::Result;

pub const BASE_COLUMNS: [&str; 9] =
    ["statistic", "E", "scale", "N", "K_or_eta", "estimate", "stderr", "trials", "seed"];

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub statistic: String,
    pub e: f64,
    pub scale: String,
    pub n: usize,
    pub k_or_eta: f64,
    pub estimate: f64,
    pub stderr: f64,
    /// Effective (valid) trial count behind this row.
    pub trials: u64,
    pub seed: u64,
    /// Study-specific columns, in output order.
    pub extra: Vec<(String, f64)>,
}

impl ReportRow {
    pub fn extra(&self, name: &str) -> Option<f64> {
        self.extra.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }
}

/// Result of one study.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StatReport {
    pub study: String,
    pub rows: Vec<ReportRow>,
    /// Scalar summaries (fits, extrema, test statistics). Serialized to JSON only.
    pub summary: BTreeMap<String, f64>,
    /// Warnings, e.g. a violated regularity hypothesis that did not stop the computation.
    pub flags: Vec<String>,
    pub requested_trials: u64,
    /// Trials dropped because the eigensolver failed or the draw was degenerate.
    pub failed_trials: u64,
}

/// 17 significant digits, fixed textual form.
pub fn format_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:.16e}")
    }
}

fn json_f64(x: f64) -> Value {
    serde_json::Number::from_f64(x).map(Value::Number).unwrap_or(Value::Null)
}

impl StatReport {
    pub fn new(study: impl Into<String>, requested_trials: u64) -> Self {
        StatReport { study: study.into(), requested_trials, ..Default::default() }
    }

    pub fn rows_named<'a>(&'a self, statistic: &'a str) -> impl Iterator<Item = &'a ReportRow> {
        self.rows.iter().filter(move |r| r.statistic == statistic)
    }

    /// Names of the study-specific columns, in order of first appearance.
    pub fn extra_columns(&self) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        for row in &self.rows {
            for (k, _) in &row.extra {
                if !names.contains(k) {
                    names.push(k.clone());
                }
            }
        }
        names
    }

    pub fn to_csv(&self) -> String {
        let extras = self.extra_columns();
        let mut out = String::new();
        let header: Vec<&str> =
            BASE_COLUMNS.iter().copied().chain(extras.iter().map(String::as_str)).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for r in &self.rows {
            let _ = write!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.statistic,
                format_f64(r.e),
                r.scale,
                r.n,
                format_f64(r.k_or_eta),
                format_f64(r.estimate),
                format_f64(r.stderr),
                r.trials,
                r.seed
            );
            for name in &extras {
                out.push(',');
                if let Some(v) = r.extra(name) {
                    out.push_str(&format_f64(v));
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> Value {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| {
                let mut m = Map::new();
                m.insert("statistic".into(), json!(r.statistic));
                m.insert("E".into(), json_f64(r.e));
                m.insert("scale".into(), json!(r.scale));
                m.insert("N".into(), json!(r.n));
                m.insert("K_or_eta".into(), json_f64(r.k_or_eta));
                m.insert("estimate".into(), json_f64(r.estimate));
                m.insert("stderr".into(), json_f64(r.stderr));
                m.insert("trials".into(), json!(r.trials));
                m.insert("seed".into(), json!(r.seed));
                let extra: Map<String, Value> =
                    r.extra.iter().map(|(k, v)| (k.clone(), json_f64(*v))).collect();
                m.insert("extra".into(), Value::Object(extra));
                Value::Object(m)
            })
            .collect();
        let summary: Map<String, Value> =
            self.summary.iter().map(|(k, v)| (k.clone(), json_f64(*v))).collect();
        json!({
            "study": self.study,
            "rows": rows,
            "summary": summary,
            "flags": self.flags,
            "requested_trials": self.requested_trials,
            "failed_trials": self.failed_trials,
        })
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut w, &self.to_json())?;
        w.write_all(b"\n")?;
        Ok(())
    }

    /// Appends all rows, summaries (prefixed) and flags of `other`.
    pub fn absorb(&mut self, other: StatReport, prefix: &str) {
        self.rows.extend(other.rows);
        for (k, v) in other.summary {
            self.summary.insert(format!("{prefix}{k}"), v);
        }
        self.flags.extend(other.flags);
        self.failed_trials += other.failed_trials;
    }
}
