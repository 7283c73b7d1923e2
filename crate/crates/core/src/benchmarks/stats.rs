use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Alternative {
    /// The first sample tends to be smaller.
    Less,
    /// The first sample tends to be larger.
    Greater,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WilcoxonResult {
    /// Sum of ranks of the positive differences.
    pub w_plus: f64,
    /// Pairs left after dropping zero differences.
    pub n: usize,
    pub p_value: f64,
}

/// Exact one-sided Wilcoxon signed-rank test on the paired differences
/// `a[i] - b[i]`. Zero differences are dropped and tied magnitudes receive
/// average ranks; the null distribution is enumerated exactly over the
/// resulting ranks.
pub fn wilcoxon_signed_rank(
    a: &[f64],
    b: &[f64],
    alternative: Alternative,
) -> Result<WilcoxonResult> {
    check_dim("paired samples", a.len(), b.len())?;
    let diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::InvalidParameter(
            "non-finite paired difference".into(),
        ));
    }
    let n = diffs.len();
    if n == 0 {
        return Ok(WilcoxonResult {
            w_plus: 0.0,
            n,
            p_value: 1.0,
        });
    }
    let doubled = doubled_ranks(&diffs);
    let w2: usize = diffs
        .iter()
        .zip(&doubled)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();

    // counts[s] = number of sign patterns whose doubled positive-rank sum is s.
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0f64; total + 1];
    counts[0] = 1.0;
    for &r in &doubled {
        for s in (r..=total).rev() {
            counts[s] += counts[s - r];
        }
    }
    let all = 2f64.powi(n as i32);
    let tail: f64 = match alternative {
        Alternative::Less => counts[..=w2].iter().sum(),
        Alternative::Greater => counts[w2..].iter().sum(),
    };
    Ok(WilcoxonResult {
        w_plus: w2 as f64 / 2.0,
        n,
        p_value: (tail / all).min(1.0),
    })
}

/// Twice the average rank of each |d|, which is always an integer.
fn doubled_ranks(diffs: &[f64]) -> Vec<usize> {
    let n = diffs.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| diffs[i].abs().total_cmp(&diffs[j].abs()));
    let mut out = vec![0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && diffs[idx[end]].abs() == diffs[idx[start]].abs() {
            end += 1;
        }
        // Ranks start+1 ..= end averaged, doubled.
        let r2 = start + 1 + end;
        for &i in &idx[start..end] {
            out[i] = r2;
        }
        start = end;
    }
    out
}
