use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::trace::TraceRecord;

/// All seeds of one method within a comparison.
#[derive(Debug, Clone)]
pub struct MethodTraces {
    pub method: String,
    pub traces: Vec<Vec<TraceRecord>>,
}

/// Min and max over the feasible observations of every trace in the pool.
pub fn pooled_range(pool: &[MethodTraces]) -> Option<(f64, f64)> {
    pool.iter()
        .flat_map(|m| m.traces.iter().flatten())
        .filter(|r| r.feasible)
        .fold(None, |acc, r| match acc {
            None => Some((r.y, r.y)),
            Some((lo, hi)) => Some((lo.min(r.y), hi.max(r.y))),
        })
}

/// Incumbent series rescaled to `[0, 1]` by the pooled range. Iterations
/// without a feasible incumbent score 1; a degenerate range scores 0.
pub fn normalized_errors(trace: &[TraceRecord], range: (f64, f64)) -> Vec<f64> {
    let (lo, hi) = range;
    let width = hi - lo;
    trace
        .iter()
        .map(|r| match r.incumbent {
            None => 1.0,
            Some(_) if width <= 0.0 => 0.0,
            Some(v) => ((v - lo) / width).clamp(0.0, 1.0),
        })
        .collect()
}

/// Simple regret of the incumbent against a known optimum value.
pub fn regrets(trace: &[TraceRecord], optimum: f64) -> Vec<Option<f64>> {
    trace
        .iter()
        .map(|r| r.incumbent.map(|v| v - optimum))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationSummary {
    pub iter: usize,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

/// Mean and sample standard deviation across runs at each iteration. Runs
/// shorter than the longest simply stop contributing.
pub fn summarize(series: &[Vec<f64>]) -> Vec<IterationSummary> {
    let len = series.iter().map(Vec::len).max().unwrap_or(0);
    (0..len)
        .map(|i| {
            let vals: Vec<f64> = series.iter().filter_map(|s| s.get(i).copied()).collect();
            let n = vals.len();
            let mean = vals.iter().sum::<f64>() / n as f64;
            let std = if n < 2 {
                0.0
            } else {
                (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            };
            IterationSummary {
                iter: i + 1,
                mean,
                std,
                n,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TidyRow {
    pub method: String,
    pub seed: u64,
    pub iter: usize,
    pub value: Option<f64>,
    pub regret: Option<f64>,
    pub normalized_error: f64,
    pub violations: usize,
}

/// One row per (method, seed, iteration); `violations` is cumulative.
pub fn tidy_rows(pool: &[MethodTraces], optimum: Option<f64>) -> Vec<TidyRow> {
    let range = pooled_range(pool).unwrap_or((0.0, 0.0));
    let mut rows = Vec::new();
    for m in pool {
        for trace in &m.traces {
            let norm = normalized_errors(trace, range);
            let mut violations = 0;
            for (r, ne) in trace.iter().zip(norm) {
                violations += r.violations;
                rows.push(TidyRow {
                    method: m.method.clone(),
                    seed: r.seed,
                    iter: r.t,
                    value: r.incumbent,
                    regret: optimum.and_then(|o| r.incumbent.map(|v| v - o)),
                    normalized_error: ne,
                    violations,
                });
            }
        }
    }
    rows
}

pub fn write_tidy_csv<W: Write>(w: W, rows: &[TidyRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}
