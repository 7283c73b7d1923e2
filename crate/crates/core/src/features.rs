//! Frozen feature map `φ(x) = [φᵈ(xᵈ); φᶜ(xᶜ); φᵐ(xᵈ, xᶜ)]`.
//!
//! Layout of a full feature vector of length `M = m_disc + m_cont + m_disc·m_cont`:
//!
//! * `0 .. m_disc`: discrete block. Index 0 is the constant 1, indices
//!   `1 ..= D_d` are the singletons `x_i`, the remaining indices are the pairs
//!   `x_i x_j` (`i < j`) in lexicographic order.
//! * `m_disc .. m_disc + m_cont`: random Fourier features
//!   `sqrt(2/M_c) cos(ω_jᵀx + b_j)` approximating a squared-exponential kernel.
//! * the rest: mixed block, entry `(k, j)` at offset `k·m_cont + j`, equal to
//!   `φᵈ_k · φᶜ_j`.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::rng::seeded;

/// Replayable construction parameters of an expansion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureConfig {
    /// Number of random Fourier features `M_c`.
    pub m_cont: usize,
    /// Kernel bandwidth `σ`.
    pub sigma: f64,
    pub seed: u64,
    /// Optional per-RFF continuous variable scopes; `None` means every RFF
    /// sees all continuous dimensions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rff_scopes: Option<Vec<Vec<usize>>>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            m_cont: 16,
            sigma: 1.0,
            seed: 0,
            rff_scopes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureExpansion {
    d_disc: usize,
    d_cont: usize,
    m_disc: usize,
    m_cont: usize,
    sigma: f64,
    amp: f64,
    /// `m_cont × d_cont`, row-major.
    freqs: Vec<f64>,
    phases: Vec<f64>,
    pairs: Vec<(usize, usize)>,
    rff_scopes: Vec<Vec<usize>>,
    mixed_mask: Option<Vec<bool>>,
}

impl FeatureExpansion {
    pub fn new(d_disc: usize, d_cont: usize, cfg: &FeatureConfig) -> Result<Self> {
        if !(cfg.sigma > 0.0 && cfg.sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "bandwidth must be positive, got {}",
                cfg.sigma
            )));
        }
        // RFFs over an empty continuous space would be constants.
        let m_cont = if d_cont == 0 { 0 } else { cfg.m_cont };
        let rff_scopes: Vec<Vec<usize>> = match &cfg.rff_scopes {
            None => vec![(0..d_cont).collect(); m_cont],
            Some(scopes) => {
                check_dim("rff scopes", m_cont, scopes.len())?;
                let mut out = Vec::with_capacity(m_cont);
                for s in scopes {
                    let mut s = s.clone();
                    s.sort_unstable();
                    s.dedup();
                    if s.is_empty() || s.iter().any(|&v| v >= d_cont) {
                        return Err(Error::InvalidParameter(format!("invalid rff scope {s:?}")));
                    }
                    out.push(s);
                }
                out
            }
        };

        let mut rng = seeded(cfg.seed);
        let mut freqs = vec![0.0; m_cont * d_cont];
        for (i, scope) in rff_scopes.iter().enumerate() {
            for &d in scope {
                let z: f64 = StandardNormal.sample(&mut rng);
                freqs[i * d_cont + d] = z / cfg.sigma;
            }
        }
        let phases = (0..m_cont)
            .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
            .collect();

        let mut pairs = Vec::with_capacity(d_disc * d_disc.saturating_sub(1) / 2);
        for i in 0..d_disc {
            for j in (i + 1)..d_disc {
                pairs.push((i, j));
            }
        }
        Ok(Self {
            d_disc,
            d_cont,
            m_disc: 1 + d_disc + pairs.len(),
            m_cont,
            sigma: cfg.sigma,
            amp: if m_cont > 0 {
                (2.0 / m_cont as f64).sqrt()
            } else {
                0.0
            },
            freqs,
            phases,
            pairs,
            rff_scopes,
            mixed_mask: None,
        })
    }

    /// Restrict the mixed block: masked-out entries always evaluate to zero.
    pub fn with_mixed_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        check_dim("mixed mask", self.m_mixed(), mask.len())?;
        self.mixed_mask = Some(mask);
        Ok(self)
    }

    pub fn d_disc(&self) -> usize {
        self.d_disc
    }
    pub fn d_cont(&self) -> usize {
        self.d_cont
    }
    pub fn m_disc(&self) -> usize {
        self.m_disc
    }
    pub fn m_cont(&self) -> usize {
        self.m_cont
    }
    pub fn m_mixed(&self) -> usize {
        self.m_disc * self.m_cont
    }
    pub fn total(&self) -> usize {
        self.m_disc + self.m_cont + self.m_mixed()
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn cont_offset(&self) -> usize {
        self.m_disc
    }
    pub fn mixed_offset(&self) -> usize {
        self.m_disc + self.m_cont
    }

    /// Frequency vector `ω_j`.
    pub fn freq(&self, j: usize) -> &[f64] {
        &self.freqs[j * self.d_cont..(j + 1) * self.d_cont]
    }
    pub fn phases(&self) -> &[f64] {
        &self.phases
    }
    pub fn rff_scope(&self, j: usize) -> &[usize] {
        &self.rff_scopes[j]
    }

    pub fn mixed_active(&self, k: usize, j: usize) -> bool {
        self.mixed_mask
            .as_ref()
            .is_none_or(|m| m[k * self.m_cont + j])
    }
    pub fn mixed_mask(&self) -> Option<&[bool]> {
        self.mixed_mask.as_deref()
    }

    /// Pairs `(i, j)` in discrete-layout order, starting at index `1 + D_d`.
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Discrete-block index of the monomial `x_i x_j`, `i < j`.
    pub fn pair_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < self.d_disc);
        let n = self.d_disc;
        1 + n + i * (2 * n - i - 1) / 2 + (j - i - 1)
    }

    /// Binary variables appearing in discrete feature `k`.
    pub fn discrete_scope(&self, k: usize) -> Vec<usize> {
        match k {
            0 => Vec::new(),
            k if k <= self.d_disc => vec![k - 1],
            k => {
                let (i, j) = self.pairs[k - 1 - self.d_disc];
                vec![i, j]
            }
        }
    }

    /// Upper bound on `‖φ(x)‖₂` valid for every input.
    pub fn norm_bound(&self) -> f64 {
        let md = self.m_disc as f64;
        let c = if self.m_cont > 0 { 2f64.sqrt() } else { 0.0 };
        md.sqrt() + c + c * md.sqrt()
    }

    pub fn eval_discrete(&self, x_disc: &[bool]) -> Result<Vec<f64>> {
        check_dim("discrete point", self.d_disc, x_disc.len())?;
        let mut out = vec![0.0; self.m_disc];
        self.discrete_into(x_disc, &mut out);
        Ok(out)
    }

    pub(crate) fn discrete_into(&self, x: &[bool], out: &mut [f64]) {
        out[0] = 1.0;
        for (i, &b) in x.iter().enumerate() {
            out[1 + i] = if b { 1.0 } else { 0.0 };
        }
        let base = 1 + self.d_disc;
        for (p, &(i, j)) in self.pairs.iter().enumerate() {
            out[base + p] = if x[i] && x[j] { 1.0 } else { 0.0 };
        }
    }

    fn check_box(&self, x_cont: &[f64]) -> Result<()> {
        check_dim("continuous point", self.d_cont, x_cont.len())?;
        match x_cont.iter().position(|v| !(0.0..=1.0).contains(v)) {
            Some(index) => Err(Error::OutOfBox {
                index,
                value: x_cont[index],
            }),
            None => Ok(()),
        }
    }

    pub fn eval_continuous(&self, x_cont: &[f64]) -> Result<Vec<f64>> {
        self.check_box(x_cont)?;
        let mut out = vec![0.0; self.m_cont];
        self.continuous_into(x_cont, &mut out);
        Ok(out)
    }

    #[inline]
    fn projection(&self, j: usize, x: &[f64]) -> f64 {
        let w = self.freq(j);
        w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.phases[j]
    }

    pub(crate) fn continuous_into(&self, x: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.amp * self.projection(j, x).cos();
        }
    }

    pub fn eval_mixed(&self, x_disc: &[bool], x_cont: &[f64]) -> Result<Vec<f64>> {
        let d = self.eval_discrete(x_disc)?;
        let c = self.eval_continuous(x_cont)?;
        let mut out = vec![0.0; self.m_mixed()];
        self.mixed_into(&d, &c, &mut out);
        Ok(out)
    }

    pub(crate) fn mixed_into(&self, d: &[f64], c: &[f64], out: &mut [f64]) {
        let mc = self.m_cont;
        for (k, &dk) in d.iter().enumerate() {
            for (j, &cj) in c.iter().enumerate() {
                out[k * mc + j] = if self.mixed_active(k, j) {
                    dk * cj
                } else {
                    0.0
                };
            }
        }
    }

    pub fn eval_full(&self, x_disc: &[bool], x_cont: &[f64]) -> Result<Vec<f64>> {
        check_dim("discrete point", self.d_disc, x_disc.len())?;
        self.check_box(x_cont)?;
        let mut out = vec![0.0; self.total()];
        let (d, rest) = out.split_at_mut(self.m_disc);
        let (c, m) = rest.split_at_mut(self.m_cont);
        self.discrete_into(x_disc, d);
        self.continuous_into(x_cont, c);
        self.mixed_into(d, c, m);
        Ok(out)
    }

    /// `∇ₓ Σ_j w_j φᶜ_j(x)`.
    pub fn grad_continuous(&self, x_cont: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
        self.check_box(x_cont)?;
        check_dim("continuous weights", self.m_cont, weights.len())?;
        let mut grad = vec![0.0; self.d_cont];
        self.weighted_value_grad(x_cont, weights, &mut grad);
        Ok(grad)
    }

    /// `(φᶜ_j(x), dφᶜ_j/d(projection))`; the gradient in `x` is the second
    /// value times `freq(j)`.
    pub(crate) fn rff_feature(&self, j: usize, x: &[f64]) -> (f64, f64) {
        let (s, c) = self.projection(j, x).sin_cos();
        (self.amp * c, -self.amp * s)
    }

    /// Returns `Σ_j w_j φᶜ_j(x)` and overwrites `grad` with its gradient.
    pub(crate) fn weighted_value_grad(&self, x: &[f64], weights: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut value = 0.0;
        for (j, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let (s, c) = self.projection(j, x).sin_cos();
            value += w * self.amp * c;
            let coef = -w * self.amp * s;
            for (g, &o) in grad.iter_mut().zip(self.freq(j)) {
                *g += coef * o;
            }
        }
        value
    }
}
