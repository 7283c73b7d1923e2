//! Per-iteration records of an optimization run and their CSV form.
//!
//! Columns: `seed, t, x_disc, x_cont, y, feasible, incumbent, violations,
//! wall_ms, scaling`. `x_disc` is a bit string with slot 0 first, `x_cont` is
//! `;`-separated, and floats use the shortest representation that parses back
//! to the same value. An empty `incumbent` cell means no feasible observation
//! has been made yet.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const HEADER: [&str; 10] = [
    "seed",
    "t",
    "x_disc",
    "x_cont",
    "y",
    "feasible",
    "incumbent",
    "violations",
    "wall_ms",
    "scaling",
];

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub seed: u64,
    /// 1-based iteration index.
    pub t: usize,
    pub x_disc: Vec<bool>,
    pub x_cont: Vec<f64>,
    pub y: f64,
    pub feasible: bool,
    /// Best `y` over feasible observations up to and including this row.
    pub incumbent: Option<f64>,
    /// Number of violated user constraints at the query.
    pub violations: usize,
    pub wall_ms: f64,
    pub scaling: String,
}

pub fn next_incumbent(prev: Option<f64>, y: f64, feasible: bool) -> Option<f64> {
    match (prev, feasible) {
        (Some(p), true) => Some(p.min(y)),
        (None, true) => Some(y),
        (p, false) => p,
    }
}

pub fn bits_to_string(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

pub fn parse_bits(s: &str) -> Result<Vec<bool>> {
    s.chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            _ => Err(Error::NonBinary(s.to_string())),
        })
        .collect()
}

fn join_reals(v: &[f64]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

fn parse_f64(field: &str, s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Schema(format!("column {field}: cannot parse {s:?} as a number")))
}

impl TraceRecord {
    fn to_row(&self) -> [String; 10] {
        [
            self.seed.to_string(),
            self.t.to_string(),
            bits_to_string(&self.x_disc),
            join_reals(&self.x_cont),
            self.y.to_string(),
            self.feasible.to_string(),
            self.incumbent.map(|v| v.to_string()).unwrap_or_default(),
            self.violations.to_string(),
            self.wall_ms.to_string(),
            self.scaling.clone(),
        ]
    }

    fn from_row(row: &csv::StringRecord) -> Result<Self> {
        if row.len() != HEADER.len() {
            return Err(Error::Schema(format!(
                "trace row has {} fields, expected {}",
                row.len(),
                HEADER.len()
            )));
        }
        let int = |i: usize| -> Result<u64> {
            row[i].parse().map_err(|_| {
                Error::Schema(format!("column {}: bad integer {:?}", HEADER[i], &row[i]))
            })
        };
        let x_cont = if row[3].is_empty() {
            Vec::new()
        } else {
            row[3]
                .split(';')
                .map(|s| parse_f64("x_cont", s))
                .collect::<Result<_>>()?
        };
        let feasible = match &row[5] {
            "true" => true,
            "false" => false,
            other => {
                return Err(Error::Schema(format!(
                    "column feasible: bad flag {other:?}"
                )))
            }
        };
        Ok(Self {
            seed: int(0)?,
            t: int(1)? as usize,
            x_disc: parse_bits(&row[2])?,
            x_cont,
            y: parse_f64("y", &row[4])?,
            feasible,
            incumbent: if row[6].is_empty() {
                None
            } else {
                Some(parse_f64("incumbent", &row[6])?)
            },
            violations: int(7)? as usize,
            wall_ms: parse_f64("wall_ms", &row[8])?,
            scaling: row[9].to_string(),
        })
    }
}

/// Streams records to CSV, flushing after each row.
pub struct TraceWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(w: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(w);
        inner.write_record(HEADER)?;
        inner.flush()?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, rec: &TraceRecord) -> Result<()> {
        self.inner.write_record(rec.to_row())?;
        self.inner.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> Result<W> {
        self.inner
            .into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
    }
}

pub fn write_trace<W: Write>(w: W, records: &[TraceRecord]) -> Result<()> {
    let mut tw = TraceWriter::new(w)?;
    for r in records {
        tw.write(r)?;
    }
    Ok(())
}

pub fn trace_to_string(records: &[TraceRecord]) -> Result<String> {
    let mut buf = Vec::new();
    write_trace(&mut buf, records)?;
    String::from_utf8(buf).map_err(|e| Error::Schema(e.to_string()))
}

pub fn read_trace<R: Read>(r: R) -> Result<Vec<TraceRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let header = rdr.headers()?.clone();
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(Error::Schema(format!("unexpected trace header {header:?}")));
    }
    rdr.records()
        .map(|row| TraceRecord::from_row(&row?))
        .collect()
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<Vec<TraceRecord>> {
    read_trace(std::fs::File::open(path)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub rows: usize,
    /// 1-based row numbers whose recorded incumbent disagrees with the recomputed one.
    pub mismatches: Vec<usize>,
}

impl ReplayReport {
    pub fn is_consistent(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Recompute the incumbent column from `(y, feasible)` and compare.
pub fn replay(records: &[TraceRecord]) -> ReplayReport {
    let mut inc = None;
    let mut mismatches = Vec::new();
    for (i, r) in records.iter().enumerate() {
        inc = next_incumbent(inc, r.y, r.feasible);
        if inc != r.incumbent {
            mismatches.push(i + 1);
        }
    }
    ReplayReport {
        rows: records.len(),
        mismatches,
    }
}

/// Incumbent value after each record.
pub fn incumbents(records: &[TraceRecord]) -> Vec<Option<f64>> {
    records
        .iter()
        .scan(None, |inc, r| {
            *inc = next_incumbent(*inc, r.y, r.feasible);
            Some(*inc)
        })
        .collect()
}
