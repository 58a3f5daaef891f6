//! CSV and JSON report tables. Numbers are written with 17 significant
//! digits, which round-trips every `f64`; absent values are empty.

use std::io::Write;

use lqlab::inequality::{CheckReport, Provenance, Status};
use serde::{Deserialize, Serialize};

use crate::config::Format;

pub const COLUMNS: [&str; 12] =
    ["check_id", "case_id", "p", "q", "lhs", "rhs", "constant", "provenance", "status", "tolerance", "seed", "runtime_ms"];

pub fn number(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        // "inf", "-inf", "NaN" parse back with str::parse.
        x.to_string()
    }
}

fn optional(x: Option<f64>) -> String {
    x.map(number).unwrap_or_default()
}

/// One report as text fields; JSON rows add the free-text note.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Row {
    pub check_id: String,
    pub case_id: String,
    pub p: String,
    pub q: String,
    pub lhs: String,
    pub rhs: String,
    pub constant: String,
    pub provenance: String,
    pub status: String,
    pub tolerance: String,
    pub seed: String,
    pub runtime_ms: String,
    pub note: String,
}

impl From<&CheckReport> for Row {
    fn from(r: &CheckReport) -> Self {
        Self {
            check_id: r.check_id.clone(),
            case_id: r.case_id.clone(),
            p: number(r.p),
            q: optional(r.q),
            lhs: number(r.lhs),
            rhs: number(r.rhs),
            constant: number(r.constant),
            provenance: r.provenance.label().into(),
            status: r.status.label().into(),
            tolerance: number(r.tolerance),
            seed: r.seed.map(|s| s.to_string()).unwrap_or_default(),
            runtime_ms: optional(r.runtime_ms),
            note: r.note.clone(),
        }
    }
}

impl Row {
    fn fields(&self) -> [&str; 12] {
        [
            &self.check_id,
            &self.case_id,
            &self.p,
            &self.q,
            &self.lhs,
            &self.rhs,
            &self.constant,
            &self.provenance,
            &self.status,
            &self.tolerance,
            &self.seed,
            &self.runtime_ms,
        ]
    }

    pub fn to_report(&self) -> Result<CheckReport, String> {
        let num = |s: &str| s.parse::<f64>().map_err(|e| format!("bad number {s:?}: {e}"));
        let opt = |s: &str| if s.is_empty() { Ok(None) } else { num(s).map(Some) };
        let label = |s: &str| format!("\"{s}\"");
        Ok(CheckReport {
            check_id: self.check_id.clone(),
            case_id: self.case_id.clone(),
            p: num(&self.p)?,
            q: opt(&self.q)?,
            lhs: num(&self.lhs)?,
            rhs: num(&self.rhs)?,
            constant: num(&self.constant)?,
            provenance: serde_json::from_str::<Provenance>(&label(&self.provenance)).map_err(|e| e.to_string())?,
            status: serde_json::from_str::<Status>(&label(&self.status)).map_err(|e| e.to_string())?,
            tolerance: num(&self.tolerance)?,
            seed: if self.seed.is_empty() { None } else { Some(self.seed.parse().map_err(|e| format!("bad seed: {e}"))?) },
            runtime_ms: opt(&self.runtime_ms)?,
            note: self.note.clone(),
        })
    }
}

pub fn render(reports: &[CheckReport], format: Format) -> Result<Vec<u8>, String> {
    let rows: Vec<Row> = reports.iter().map(Row::from).collect();
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(COLUMNS).map_err(|e| e.to_string())?;
            for r in &rows {
                w.write_record(r.fields()).map_err(|e| e.to_string())?;
            }
            w.into_inner().map_err(|e| e.to_string())
        }
        Format::Json => {
            let mut out = serde_json::to_vec_pretty(&rows).map_err(|e| e.to_string())?;
            out.push(b'\n');
            Ok(out)
        }
    }
}

pub fn parse_json(bytes: &[u8]) -> Result<Vec<CheckReport>, String> {
    let rows: Vec<Row> = serde_json::from_slice(bytes).map_err(|e| e.to_string())?;
    rows.iter().map(Row::to_report).collect()
}

pub fn write(bytes: &[u8], path: Option<&str>) -> std::io::Result<()> {
    match path {
        Some(p) => std::fs::write(p, bytes),
        None => std::io::stdout().lock().write_all(bytes),
    }
}
