//! Trace and summary serialisation.
//!
//! Traces are line-delimited JSON (one record per line) or CSV with header
//! `n,x0,…,x{d−1},theta,proposals`. Floats are written in shortest
//! round-trip form and parsed exactly, so positions survive a write/read
//! cycle bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::point::Point;

/// Current summary layout version.
pub const SCHEMA_VERSION: u32 = 1;

/// Summary fields that legitimately differ between identical runs.
pub const VOLATILE_FIELDS: &[&str] = &["wall_clock_seconds"];

/// One retained step of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub n: u64,
    pub x: Point,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    /// Proposals spent on the step that produced `x` (0 for the initial point).
    pub proposals: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceFormat {
    Jsonl,
    Csv,
}

impl FromStr for TraceFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(TraceFormat::Jsonl),
            "csv" => Ok(TraceFormat::Csv),
            other => Err(Error::InvalidInput(format!("unknown trace format {other:?}"))),
        }
    }
}

/// CSV header for dimension `d`.
pub fn csv_header(d: usize) -> Vec<String> {
    let mut h = vec!["n".to_string()];
    h.extend((0..d).map(|i| format!("x{i}")));
    h.push("theta".into());
    h.push("proposals".into());
    h
}

/// Writes `records` to `out` in the given format.
pub fn write_trace_to<W: Write>(records: &[TraceRecord], d: usize, format: TraceFormat, out: W) -> Result<()> {
    match format {
        TraceFormat::Jsonl => {
            let mut out = BufWriter::new(out);
            for r in records {
                serde_json::to_writer(&mut out, r)?;
                out.write_all(b"\n")?;
            }
            out.flush()?;
        }
        TraceFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(csv_header(d))?;
            for r in records {
                if r.x.dim() != d {
                    return Err(Error::InvalidInput(format!(
                        "record {} has dimension {}, expected {d}",
                        r.n,
                        r.x.dim()
                    )));
                }
                let mut row = vec![r.n.to_string()];
                row.extend(r.x.coords().iter().map(|c| c.to_string()));
                row.push(r.theta.map(|t| t.to_string()).unwrap_or_default());
                row.push(r.proposals.to_string());
                w.write_record(&row)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

/// Runs `write` against a fresh file at `path`, removing the file if anything fails.
fn write_atomically(path: &Path, write: impl FnOnce(&mut File) -> Result<()>) -> Result<()> {
    let mut file = File::create(path)?;
    let res = write(&mut file).and_then(|_| file.sync_all().map_err(Error::from));
    if res.is_err() {
        drop(file);
        let _ = std::fs::remove_file(path);
    }
    res
}

pub fn write_trace(records: &[TraceRecord], d: usize, path: &Path, format: TraceFormat) -> Result<()> {
    write_atomically(path, |f| write_trace_to(records, d, format, f))
}

pub fn read_trace_from<R: BufRead>(input: R, format: TraceFormat) -> Result<Vec<TraceRecord>> {
    match format {
        TraceFormat::Jsonl => input
            .lines()
            .filter(|l| l.as_ref().map(|s| !s.trim().is_empty()).unwrap_or(true))
            .map(|l| Ok(serde_json::from_str(&l?)?))
            .collect(),
        TraceFormat::Csv => {
            let mut r = csv::Reader::from_reader(input);
            let header = r.headers()?.clone();
            let d = header.len().checked_sub(3).ok_or_else(|| Error::Format("short CSV header".into()))?;
            if header.iter().collect::<Vec<_>>() != csv_header(d) {
                return Err(Error::Format(format!("unexpected CSV header {header:?}")));
            }
            let num = |s: &str| -> Result<f64> {
                s.parse().map_err(|_| Error::Format(format!("bad number {s:?}")))
            };
            let mut out = Vec::new();
            for row in r.records() {
                let row = row?;
                let n = row[0].parse().map_err(|_| Error::Format(format!("bad step {:?}", &row[0])))?;
                let x = (1..=d).map(|i| num(&row[i])).collect::<Result<Vec<_>>>()?;
                let theta = match &row[d + 1] {
                    "" => None,
                    s => Some(num(s)?),
                };
                let proposals = row[d + 2]
                    .parse()
                    .map_err(|_| Error::Format(format!("bad proposals {:?}", &row[d + 2])))?;
                out.push(TraceRecord {
                    n,
                    x: Point::new(x),
                    theta,
                    proposals,
                });
            }
            Ok(out)
        }
    }
}

pub fn read_trace(path: &Path, format: TraceFormat) -> Result<Vec<TraceRecord>> {
    read_trace_from(BufReader::new(File::open(path)?), format)
}

/// The single structured document emitted by every pipeline.
///
/// Sections that a pipeline does not produce are left empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryDocument {
    pub schema_version: u32,
    pub command: String,
    /// Everything needed to re-run the pipeline.
    pub config: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_hat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stderr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci95: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub renewal: Option<serde_json::Value>,
    /// Pipeline-specific results (drift profile, angle chain report, sweep table, …).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub details: Option<serde_json::Value>,
    pub wall_clock_seconds: f64,
}

impl SummaryDocument {
    pub fn new(command: impl Into<String>, config: serde_json::Value) -> Self {
        SummaryDocument {
            schema_version: SCHEMA_VERSION,
            command: command.into(),
            config,
            v_hat: None,
            stderr: None,
            ci95: None,
            direction: None,
            renewal: None,
            details: None,
            wall_clock_seconds: 0.0,
        }
    }

    pub fn to_json_string(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// The document with volatile fields removed, for determinism comparisons.
    pub fn stable_view(&self) -> Result<serde_json::Value> {
        let mut v = serde_json::to_value(self)?;
        strip_volatile(&mut v);
        Ok(v)
    }
}

/// Removes [`VOLATILE_FIELDS`] from a parsed summary.
pub fn strip_volatile(v: &mut serde_json::Value) {
    if let Some(obj) = v.as_object_mut() {
        for f in VOLATILE_FIELDS {
            obj.remove(*f);
        }
    }
}

pub fn write_summary(doc: &SummaryDocument, path: &Path) -> Result<()> {
    let text = doc.to_json_string()?;
    write_atomically(path, |f| Ok(f.write_all(text.as_bytes())?))
}

pub fn read_summary(path: &Path) -> Result<SummaryDocument> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}
