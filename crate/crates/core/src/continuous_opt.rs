//! Multi-start projected-gradient minimization over the unit box.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::features::FeatureExpansion;
use crate::rng::Rng;

const ARMIJO_C: f64 = 1e-4;
const MIN_STEP: f64 = 1e-16;

/// A smooth objective on `[0,1]^dim`.
pub trait BoxObjective {
    fn dim(&self) -> usize;
    /// Returns the value at `x` and writes the gradient into `grad`.
    fn eval(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

/// `offset + Σ_j weights_j φᶜ_j(x)` for a fixed feature expansion.
#[derive(Debug, Clone)]
pub struct RffObjective<'a> {
    fe: &'a FeatureExpansion,
    weights: Vec<f64>,
    offset: f64,
}

impl<'a> RffObjective<'a> {
    pub fn new(fe: &'a FeatureExpansion, weights: Vec<f64>, offset: f64) -> Result<Self> {
        check_dim("continuous weights", fe.m_cont(), weights.len())?;
        Ok(Self {
            fe,
            weights,
            offset,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }
}

impl BoxObjective for RffObjective<'_> {
    fn dim(&self) -> usize {
        self.fe.d_cont()
    }

    fn eval(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.offset + self.fe.weighted_value_grad(x, &self.weights, grad)
    }
}

/// Adapter for closures `(x, grad) -> value`.
pub struct FnObjective<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[f64], &mut [f64]) -> f64> BoxObjective for FnObjective<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        (self.f)(x, grad)
    }
}

/// Negates an objective, turning a maximization into a minimization.
pub struct Negated<'a, P: ?Sized>(pub &'a P);

impl<P: BoxObjective + ?Sized> BoxObjective for Negated<'_, P> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn eval(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let v = self.0.eval(x, grad);
        grad.iter_mut().for_each(|g| *g = -*g);
        -v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MinimizeOptions {
    pub restarts: usize,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            restarts: 10,
            tol: 1e-6,
            max_iters: 500,
        }
    }
}

impl MinimizeOptions {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 || !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "continuous solver needs restarts >= 1 and tol > 0 (got {}, {})",
                self.restarts, self.tol
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
}

fn project(x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
}

fn projected_grad_norm(x: &[f64], g: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .map(|(&xi, &gi)| {
            let d = xi - (xi - gi).clamp(0.0, 1.0);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Local descent from `x0`; `on_accept` sees every accepted iterate.
pub(crate) fn descend<P: BoxObjective + ?Sized>(
    p: &P,
    x0: &[f64],
    tol: f64,
    max_iters: usize,
    mut on_accept: impl FnMut(&[f64], f64),
) -> Minimum {
    let n = p.dim();
    let mut x = x0.to_vec();
    project(&mut x);
    let mut g = vec![0.0; n];
    let mut value = p.eval(&x, &mut g);
    on_accept(&x, value);
    let mut trial = vec![0.0; n];
    let mut g_trial = vec![0.0; n];
    let mut step = 1.0;
    for _ in 0..max_iters {
        if projected_grad_norm(&x, &g) < tol {
            break;
        }
        let mut accepted = false;
        while step >= MIN_STEP {
            for i in 0..n {
                trial[i] = (x[i] - step * g[i]).clamp(0.0, 1.0);
            }
            let decrease: f64 = (0..n).map(|i| g[i] * (trial[i] - x[i])).sum();
            let v = p.eval(&trial, &mut g_trial);
            if v <= value + ARMIJO_C * decrease {
                accepted = true;
                std::mem::swap(&mut x, &mut trial);
                std::mem::swap(&mut g, &mut g_trial);
                value = v;
                on_accept(&x, value);
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        step = (step * 2.0).min(1e6);
    }
    Minimum { x, value }
}

/// Minimize from the box center and `restarts − 1` uniform starts.
pub fn minimize<P: BoxObjective + ?Sized>(
    p: &P,
    opts: &MinimizeOptions,
    rng: &mut Rng,
) -> Result<Minimum> {
    minimize_from(p, &[], opts, rng)
}

/// As [`minimize`], but the given warm starts run first. They do not count
/// against `restarts`.
pub fn minimize_from<P: BoxObjective + ?Sized>(
    p: &P,
    warm_starts: &[Vec<f64>],
    opts: &MinimizeOptions,
    rng: &mut Rng,
) -> Result<Minimum> {
    opts.validate()?;
    let n = p.dim();
    for w in warm_starts {
        check_dim("warm start", n, w.len())?;
    }
    let mut best: Option<Minimum> = None;
    let mut consider = |m: Minimum| {
        if best.as_ref().is_none_or(|b| m.value < b.value) {
            best = Some(m);
        }
    };
    for w in warm_starts {
        consider(descend(p, w, opts.tol, opts.max_iters, |_, _| {}));
    }
    consider(descend(
        p,
        &vec![0.5; n],
        opts.tol,
        opts.max_iters,
        |_, _| {},
    ));
    for _ in 1..opts.restarts {
        let x0: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        consider(descend(p, &x0, opts.tol, opts.max_iters, |_, _| {}));
    }
    Ok(best.expect("at least one start"))
}
