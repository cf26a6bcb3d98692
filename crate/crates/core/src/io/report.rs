//! CSV / JSON rendering of method reports.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::methods::MethodReport;

pub const REPORT_COLUMNS: [&str; 10] =
    ["case", "topology", "method", "r", "objective", "validated_cost", "error_pct", "gap", "time_s", "status"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(format!("unknown report format '{other}' (expected csv or json)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no reports to write")]
    Empty,
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

/// Shortest representation that reads back to the same `f64`.
fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v}")
    }
}

fn json_num(v: f64) -> Value {
    serde_json::Number::from_f64(v).map(Value::Number).unwrap_or(Value::Null)
}

fn csv_row(r: &MethodReport) -> [String; 10] {
    [
        r.case.clone(),
        r.topology.to_string(),
        r.method.clone(),
        fmt_num(r.r),
        fmt_num(r.objective),
        fmt_num(r.validated_cost),
        fmt_num(r.error_pct),
        fmt_num(r.mip_gap),
        fmt_num(r.wall_time_s),
        r.status.as_str().to_string(),
    ]
}

fn json_row(r: &MethodReport) -> Value {
    let mut obj = Map::new();
    let values = [
        json!(r.case),
        json!(r.topology.to_string()),
        json!(r.method),
        json_num(r.r),
        json_num(r.objective),
        json_num(r.validated_cost),
        json_num(r.error_pct),
        json_num(r.mip_gap),
        json_num(r.wall_time_s),
        json!(r.status.as_str()),
    ];
    for (key, value) in REPORT_COLUMNS.iter().zip(values) {
        obj.insert((*key).to_string(), value);
    }
    Value::Object(obj)
}

/// Render `reports` into `out` (no emptiness check).
pub fn render_report(reports: &[MethodReport], format: ReportFormat, out: impl Write) -> Result<(), ReportError> {
    let path = PathBuf::from("<stream>");
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            let err = |source| ReportError::Csv { path: path.clone(), source };
            w.write_record(REPORT_COLUMNS).map_err(err)?;
            for r in reports {
                w.write_record(csv_row(r)).map_err(err)?;
            }
            w.flush().map_err(|source| ReportError::Io { path: path.clone(), source })
        }
        ReportFormat::Json => {
            let rows: Vec<Value> = reports.iter().map(json_row).collect();
            let mut out = out;
            serde_json::to_writer_pretty(&mut out, &rows)
                .map_err(|e| ReportError::Io { path: path.clone(), source: e.into() })?;
            out.write_all(b"\n").map_err(|source| ReportError::Io { path, source })
        }
    }
}

pub fn write_report(reports: &[MethodReport], format: ReportFormat, dest: &Path) -> Result<(), ReportError> {
    if reports.is_empty() {
        return Err(ReportError::Empty);
    }
    let with_path = |e: ReportError| match e {
        ReportError::Io { source, .. } => ReportError::Io { path: dest.to_path_buf(), source },
        ReportError::Csv { source, .. } => ReportError::Csv { path: dest.to_path_buf(), source },
        other => other,
    };
    let file = File::create(dest).map_err(|source| ReportError::Io { path: dest.to_path_buf(), source })?;
    let mut out = BufWriter::new(file);
    render_report(reports, format, &mut out).map_err(with_path)?;
    out.flush().map_err(|source| ReportError::Io { path: dest.to_path_buf(), source })
}
