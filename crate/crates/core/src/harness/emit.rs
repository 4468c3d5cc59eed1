//! CSV and JSON output. Floats are written with 17 significant digits so
//! they parse back to the same value; missing values are empty fields.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::Serialize;

use super::speedup::{SpeedupRow, SpeedupTable};
use crate::error::{Error, Result};
use crate::solver::{ConvergenceTrace, TraceRow};

pub const TRACE_HEADER: [&str; 8] = [
    "epoch",
    "wall_seconds",
    "objective",
    "suboptimality",
    "lyapunov_g",
    "max_staleness",
    "last_objective",
    "grad_evals",
];

pub const SPEEDUP_HEADER: [&str; 8] = [
    "mode",
    "threads",
    "median_seconds",
    "speedup",
    "median_epochs",
    "max_staleness",
    "reached_runs",
    "total_runs",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::InvalidArgument(format!("unknown format {other:?}"))),
        }
    }
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt_f64(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn opt_u64(v: Option<u64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_trace_csv<W: Write>(trace: &ConvergenceTrace, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TRACE_HEADER)?;
    for r in &trace.rows {
        out.write_record([
            r.epoch.to_string(),
            fmt_f64(r.wall_seconds),
            fmt_f64(r.objective),
            opt_f64(r.suboptimality),
            opt_f64(r.lyapunov_g),
            opt_u64(r.max_staleness),
            fmt_f64(r.last_objective),
            r.grad_evals.to_string(),
        ])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn parse<T: std::str::FromStr>(rec: &csv::StringRecord, k: usize) -> Result<T> {
    let field = rec.get(k).unwrap_or("");
    field.parse().map_err(|_| Error::Parse {
        line: rec.position().map_or(0, |p| p.line() as usize),
        msg: format!("bad value {field:?} in column {}", k + 1),
    })
}

fn parse_opt<T: std::str::FromStr>(rec: &csv::StringRecord, k: usize) -> Result<Option<T>> {
    if rec.get(k).unwrap_or("").is_empty() {
        Ok(None)
    } else {
        parse(rec, k).map(Some)
    }
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<()> {
    let h = rdr.headers()?;
    if h.iter().ne(expected.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            msg: format!("unexpected header {:?}", h.iter().collect::<Vec<_>>()),
        });
    }
    Ok(())
}

pub fn read_trace_csv<R: Read>(r: R) -> Result<Vec<TraceRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    check_header(&mut rdr, &TRACE_HEADER)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        rows.push(TraceRow {
            epoch: parse(&rec, 0)?,
            wall_seconds: parse(&rec, 1)?,
            objective: parse(&rec, 2)?,
            suboptimality: parse_opt(&rec, 3)?,
            lyapunov_g: parse_opt(&rec, 4)?,
            max_staleness: parse_opt(&rec, 5)?,
            last_objective: parse(&rec, 6)?,
            grad_evals: parse(&rec, 7)?,
        });
    }
    Ok(rows)
}

pub fn write_speedup_csv<W: Write>(table: &SpeedupTable, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SPEEDUP_HEADER)?;
    for r in &table.rows {
        out.write_record([
            r.mode.to_string(),
            r.threads.to_string(),
            opt_f64(r.median_seconds),
            opt_f64(r.speedup),
            opt_f64(r.median_epochs),
            r.max_staleness.to_string(),
            r.reached_runs.to_string(),
            r.total_runs.to_string(),
        ])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_speedup_csv<R: Read>(r: R) -> Result<Vec<SpeedupRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    check_header(&mut rdr, &SPEEDUP_HEADER)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        rows.push(SpeedupRow {
            mode: parse(&rec, 0)?,
            threads: parse(&rec, 1)?,
            median_seconds: parse_opt(&rec, 2)?,
            speedup: parse_opt(&rec, 3)?,
            median_epochs: parse_opt(&rec, 4)?,
            max_staleness: parse(&rec, 5)?,
            reached_runs: parse(&rec, 6)?,
            total_runs: parse(&rec, 7)?,
        });
    }
    Ok(rows)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

/// Writes a CSV through `f`, attaching `path` to I/O failures.
fn write_csv_file<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    let mut w = create(path)?;
    f(&mut w).map_err(|e| match e {
        Error::Csv(c) if c.is_io_error() => match c.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!("checked is_io_error"),
        },
        other => other,
    })?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// Trace as CSV, or as JSON with `metadata` alongside the rows.
pub fn emit_trace(trace: &ConvergenceTrace, metadata: &serde_json::Value, format: Format, path: &Path) -> Result<()> {
    match format {
        Format::Csv => write_csv_file(path, |w| write_trace_csv(trace, w)),
        Format::Json => write_json(&serde_json::json!({ "metadata": metadata, "trace": trace }), path),
    }
}

pub fn emit_speedup(table: &SpeedupTable, metadata: &serde_json::Value, format: Format, path: &Path) -> Result<()> {
    match format {
        Format::Csv => write_csv_file(path, |w| write_speedup_csv(table, w)),
        Format::Json => write_json(&serde_json::json!({ "metadata": metadata, "speedup": table }), path),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parallel::LockMode;

    fn row(epoch: usize, sub: Option<f64>) -> TraceRow {
        TraceRow {
            epoch,
            wall_seconds: 0.1 * epoch as f64 + 1e-17,
            objective: std::f64::consts::PI / epoch as f64,
            last_objective: 1.0 / 3.0,
            suboptimality: sub,
            lyapunov_g: None,
            grad_evals: 4000,
            max_staleness: Some(7),
        }
    }

    #[test]
    fn empty_trace_is_header_only() {
        let mut buf = Vec::new();
        write_trace_csv(&ConvergenceTrace::default(), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), TRACE_HEADER.join(",") + "\n");
    }

    #[test]
    fn trace_round_trip() {
        let trace = ConvergenceTrace {
            rows: vec![row(1, Some(1e-3)), row(2, None), row(3, Some(2.2250738585072014e-308))],
            ..Default::default()
        };
        let mut buf = Vec::new();
        write_trace_csv(&trace, &mut buf).unwrap();
        assert_eq!(read_trace_csv(&buf[..]).unwrap(), trace.rows);
    }

    #[test]
    fn speedup_round_trip() {
        let table = SpeedupTable {
            target: 1e-10,
            rows: vec![
                SpeedupRow {
                    mode: LockMode::LockFree,
                    threads: 1,
                    median_seconds: Some(0.123_456_789_012_345_68),
                    speedup: Some(1.0),
                    median_epochs: Some(12.0),
                    max_staleness: 0,
                    reached_runs: 5,
                    total_runs: 5,
                },
                SpeedupRow {
                    mode: LockMode::Locked,
                    threads: 8,
                    median_seconds: None,
                    speedup: None,
                    median_epochs: None,
                    max_staleness: 31,
                    reached_runs: 1,
                    total_runs: 5,
                },
            ],
        };
        let mut buf = Vec::new();
        write_speedup_csv(&table, &mut buf).unwrap();
        assert_eq!(read_speedup_csv(&buf[..]).unwrap(), table.rows);
    }

    #[test]
    fn wrong_header_rejected() {
        assert!(read_trace_csv("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn io_errors_carry_path() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, "x").unwrap();
        let path = blocker.join("trace.csv");
        let err = emit_trace(&ConvergenceTrace::default(), &serde_json::Value::Null, Format::Csv, &path).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        assert!(err.to_string().contains("file"));
    }
}
