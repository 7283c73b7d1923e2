//! Conjugate Bayesian linear regression over feature vectors.
//!
//! Prior `w ~ N(0, α⁻¹ I)`, likelihood `y ~ N(wᵀφ, β⁻¹)`. The posterior is
//! `N(m, S⁻¹)` with `S = αI + βΦᵀΦ` and `S m = βΦᵀy`. The lower Cholesky
//! factor of `S` is maintained by rank-one updates and rebuilt from `S` every
//! [`REFACTOR_EVERY`] observations.
//!
//! # Checkpoint layout
//!
//! All fields little-endian:
//!
//! | bytes        | content                                  |
//! |--------------|------------------------------------------|
//! | 8            | magic `MVBOPOST`                         |
//! | 4            | format version (`u32`, currently 1)      |
//! | 8 + 8        | `α`, `β` (`f64`)                         |
//! | 8            | observation count `t` (`u64`)            |
//! | 8            | dimension `M` (`u64`)                    |
//! | 8·M          | posterior mean `m`                       |
//! | 8·M²         | precision `S`, row-major                 |

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::rng::Rng;

pub const REFACTOR_EVERY: usize = 64;

const MAGIC: &[u8; 8] = b"MVBOPOST";
const VERSION: u32 = 1;

/// Variance scaling applied to Thompson samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScalingMode {
    /// Sample from the posterior as is.
    #[default]
    Unit,
    /// Inflate the covariance by `24 M ln T ln(1/δ)`.
    Theory,
}

impl std::fmt::Display for ScalingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Unit => "unit",
            Self::Theory => "theory",
        })
    }
}

/// Covariance multiplier for Thompson samples.
pub fn scaling_factor(m: usize, horizon: usize, delta: f64, mode: ScalingMode) -> Result<f64> {
    if horizon < 2 {
        return Err(Error::InvalidParameter(format!(
            "horizon must be >= 2, got {horizon}"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    Ok(match mode {
        ScalingMode::Unit => 1.0,
        ScalingMode::Theory => theory_scale(m as f64, horizon as f64, delta),
    })
}

pub(crate) fn theory_scale(m: f64, horizon: f64, delta: f64) -> f64 {
    24.0 * m * horizon.ln() * (1.0 / delta).ln()
}

#[derive(Debug, Clone)]
pub struct PosteriorState {
    alpha: f64,
    beta: f64,
    mean: DVector<f64>,
    precision: DMatrix<f64>,
    chol: DMatrix<f64>,
    rhs: DVector<f64>,
    n_obs: usize,
    since_refactor: usize,
}

impl PosteriorState {
    pub fn new(dim: usize, alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite() && beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "precisions must be positive, got alpha = {alpha}, beta = {beta}"
            )));
        }
        Ok(Self {
            alpha,
            beta,
            mean: DVector::zeros(dim),
            precision: DMatrix::from_diagonal_element(dim, dim, alpha),
            chol: DMatrix::from_diagonal_element(dim, dim, alpha.sqrt()),
            rhs: DVector::zeros(dim),
            n_obs: 0,
            since_refactor: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn n_obs(&self) -> usize {
        self.n_obs
    }
    pub fn mean(&self) -> &[f64] {
        self.mean.as_slice()
    }
    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }
    /// Lower-triangular `L` with `S = LLᵀ`.
    pub fn cholesky(&self) -> &DMatrix<f64> {
        &self.chol
    }
    /// Accumulated `βΦᵀy`.
    pub fn rhs(&self) -> &[f64] {
        self.rhs.as_slice()
    }

    pub fn update(&mut self, phi: &[f64], y: f64) -> Result<()> {
        check_dim("feature vector", self.dim(), phi.len())?;
        if !y.is_finite() || phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite observation".into()));
        }
        let n = self.dim();
        let beta = self.beta;
        for c in 0..n {
            let bc = beta * phi[c];
            if bc == 0.0 {
                continue;
            }
            let col = self.precision.column_mut(c);
            for (s, &p) in col.into_iter().zip(phi) {
                *s += bc * p;
            }
        }
        for (r, &p) in self.rhs.iter_mut().zip(phi) {
            *r += beta * y * p;
        }
        self.n_obs += 1;
        self.since_refactor += 1;
        if self.since_refactor >= REFACTOR_EVERY {
            self.refactor()?;
        } else {
            let mut v: Vec<f64> = phi.iter().map(|p| p * beta.sqrt()).collect();
            if !rank_one_update(&mut self.chol, &mut v) {
                self.refactor()?;
            }
        }
        self.solve_mean()
    }

    /// Rebuild the factor from `S`, retrying once with diagonal jitter.
    pub fn refactor(&mut self) -> Result<()> {
        self.since_refactor = 0;
        if let Some(c) = self.precision.clone().cholesky() {
            self.chol = c.unpack();
            return Ok(());
        }
        let n = self.dim().max(1);
        let jitter = 1e-10 * self.precision.trace() / n as f64;
        let mut jittered = self.precision.clone();
        for i in 0..self.dim() {
            jittered[(i, i)] += jitter;
        }
        match jittered.cholesky() {
            Some(c) => {
                self.chol = c.unpack();
                Ok(())
            }
            None => Err(Error::Factorization),
        }
    }

    fn solve_mean(&mut self) -> Result<()> {
        let mut m = self.rhs.clone();
        if !self.chol.solve_lower_triangular_mut(&mut m)
            || !self.chol.tr_solve_lower_triangular_mut(&mut m)
        {
            return Err(Error::Factorization);
        }
        self.mean = m;
        Ok(())
    }

    /// Draw `w ~ N(m, scale · S⁻¹)`.
    pub fn sample_weights(&self, scale: f64, rng: &mut Rng) -> Result<Vec<f64>> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "scale must be positive, got {scale}"
            )));
        }
        let mut z = DVector::from_iterator(
            self.dim(),
            (0..self.dim()).map(|_| StandardNormal.sample(rng)),
        );
        if !self.chol.tr_solve_lower_triangular_mut(&mut z) {
            return Err(Error::Factorization);
        }
        let s = scale.sqrt();
        Ok(self
            .mean
            .iter()
            .zip(z.iter())
            .map(|(m, v)| m + s * v)
            .collect())
    }

    /// Predictive mean `mᵀφ` and variance `φᵀS⁻¹φ + 1/β`.
    pub fn predict(&self, phi: &[f64]) -> Result<(f64, f64)> {
        check_dim("feature vector", self.dim(), phi.len())?;
        let mean = self.mean.iter().zip(phi).map(|(a, b)| a * b).sum();
        let mut v = DVector::from_column_slice(phi);
        if !self.chol.solve_lower_triangular_mut(&mut v) {
            return Err(Error::Factorization);
        }
        Ok((mean, v.norm_squared() + 1.0 / self.beta))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.dim();
        let mut out = Vec::with_capacity(44 + 8 * (n + n * n));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.alpha.to_le_bytes());
        out.extend_from_slice(&self.beta.to_le_bytes());
        out.extend_from_slice(&(self.n_obs as u64).to_le_bytes());
        out.extend_from_slice(&(n as u64).to_le_bytes());
        for v in self.mean.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for r in 0..n {
            for c in 0..n {
                out.extend_from_slice(&self.precision[(r, c)].to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rd = Reader { bytes, pos: 0 };
        if rd.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = u32::from_le_bytes(rd.take(4)?.try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let alpha = rd.f64()?;
        let beta = rd.f64()?;
        let n_obs = rd.u64()? as usize;
        let n = rd.u64()? as usize;
        let expected = 44usize
            .checked_add(
                n.checked_mul(8)
                    .and_then(|a| a.checked_mul(n + 1))
                    .unwrap_or(usize::MAX),
            )
            .unwrap_or(usize::MAX);
        if bytes.len() != expected {
            return Err(Error::Checkpoint(format!(
                "expected {expected} bytes, got {}",
                bytes.len()
            )));
        }
        let mut state = Self::new(n, alpha, beta)?;
        for i in 0..n {
            state.mean[i] = rd.f64()?;
        }
        for r in 0..n {
            for c in 0..n {
                state.precision[(r, c)] = rd.f64()?;
            }
        }
        state.rhs = &state.precision * &state.mean;
        state.n_obs = n_obs;
        state.refactor()?;
        Ok(state)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos + n;
        let s = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Checkpoint("truncated".into()))?;
        self.pos = end;
        Ok(s)
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
}

/// In-place update of lower-triangular `L` to the factor of `LLᵀ + vvᵀ`.
/// `v` is clobbered. Returns false if a non-positive pivot appears.
fn rank_one_update(l: &mut DMatrix<f64>, v: &mut [f64]) -> bool {
    let n = v.len();
    for k in 0..n {
        let xk = v[k];
        if xk == 0.0 {
            continue;
        }
        let lkk = l[(k, k)];
        let r = lkk.hypot(xk);
        if !(r > 0.0 && r.is_finite() && lkk > 0.0) {
            return false;
        }
        let c = r / lkk;
        let s = xk / lkk;
        l[(k, k)] = r;
        let mut col = l.column_mut(k);
        for i in (k + 1)..n {
            let lik = (col[i] + s * v[i]) / c;
            v[i] = c * v[i] - s * lik;
            col[i] = lik;
        }
    }
    true
}
