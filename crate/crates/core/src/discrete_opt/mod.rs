//! Minimization of quadratic pseudo-Boolean functions over `{0,1}^n` under
//! linear and quadratic constraints.
//!
//! Three engines share one entry point, [`solve`]: exhaustive enumeration,
//! depth-first branch and bound with a monomial-independence bound, and
//! Metropolis simulated annealing. Exhaustive and branch and bound return a
//! global minimizer; among equal-valued minimizers the lexicographically
//! smallest bit vector (slot 0 first, `false < true`) wins.

mod anneal;
mod bnb;

pub use anneal::{anneal_run, AnnealChain, AnnealSchedule, DEFAULT_PENALTY};
pub use bnb::{branch_and_bound, lower_bound, BnbOutcome};

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::domain::ConstraintSet;
use crate::error::{check_dim, Error, Result};
use crate::rng::Rng;

/// `c0 + Σ lin_i x_i + Σ_{i<j} quad_ij x_i x_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    pub c0: f64,
    pub lin: Vec<f64>,
    // Symmetric n × n with zero diagonal; quad_ij stored at both (i, j) and (j, i).
    sym: Vec<f64>,
}

impl QuadraticForm {
    pub fn zeros(n: usize) -> Self {
        Self {
            c0: 0.0,
            lin: vec![0.0; n],
            sym: vec![0.0; n * n],
        }
    }

    pub fn new(c0: f64, lin: Vec<f64>) -> Self {
        let n = lin.len();
        Self {
            c0,
            lin,
            sym: vec![0.0; n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.lin.len()
    }

    /// Coefficient of `x_i x_j`; symmetric in its arguments, zero when `i == j`.
    pub fn quad(&self, i: usize, j: usize) -> f64 {
        self.sym[i * self.n() + j]
    }

    pub fn set_quad(&mut self, i: usize, j: usize, v: f64) {
        assert!(i != j, "pair coefficient needs distinct indices");
        let n = self.n();
        self.sym[i * n + j] = v;
        self.sym[j * n + i] = v;
    }

    pub fn add_quad(&mut self, i: usize, j: usize, v: f64) {
        let cur = self.quad(i, j);
        self.set_quad(i, j, cur + v);
    }

    pub(crate) fn row(&self, i: usize) -> &[f64] {
        let n = self.n();
        &self.sym[i * n..(i + 1) * n]
    }

    pub fn value(&self, x: &[bool]) -> f64 {
        let n = self.n();
        let mut v = self.c0;
        for i in (0..n).filter(|&i| x[i]) {
            v += self.lin[i];
            let row = self.row(i);
            for j in ((i + 1)..n).filter(|&j| x[j]) {
                v += row[j];
            }
        }
        v
    }

    /// Change in value when bit `i` of `x` is flipped.
    pub(crate) fn flip_delta(&self, x: &[bool], i: usize) -> f64 {
        let row = self.row(i);
        let mut g = self.lin[i];
        for (j, &xj) in x.iter().enumerate() {
            if xj {
                g += row[j];
            }
        }
        if x[i] {
            -g
        } else {
            g
        }
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.lin
            .iter()
            .chain(&self.sym)
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Branching priority `|lin_i| + Σ_j |quad_ij|`.
    pub fn impact(&self, i: usize) -> f64 {
        self.lin[i].abs() + self.row(i).iter().map(|v| v.abs()).sum::<f64>()
    }

    /// Text dump of the instance and its constraints, for debugging.
    pub fn dump(&self, cs: &ConstraintSet) -> String {
        let n = self.n();
        let mut s = String::new();
        let _ = writeln!(s, "n {n}");
        let _ = writeln!(s, "c0 {}", self.c0);
        let _ = writeln!(s, "lin {}", join(&self.lin));
        for i in 0..n {
            for j in (i + 1)..n {
                let q = self.quad(i, j);
                if q != 0.0 {
                    let _ = writeln!(s, "quad {i} {j} {q}");
                }
            }
        }
        for c in &cs.linear {
            let _ = writeln!(s, "linear {} <= {}", join(&c.a), c.b);
        }
        for c in &cs.quadratic {
            let _ = writeln!(
                s,
                "quadratic Q {} q {} <= {}",
                join(&c.q_mat),
                join(&c.q),
                c.b
            );
        }
        s
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SolverMode {
    /// Exhaustive up to 16 variables, branch and bound up to 40, annealing above.
    #[default]
    Auto,
    Exhaustive,
    BranchAndBound,
    Anneal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub mode: SolverMode,
    /// Largest `n` accepted by the exhaustive engine.
    pub exhaustive_cap: usize,
    /// Branch-and-bound node limit; `None` means the full tree.
    pub node_limit: Option<u64>,
    /// Annealing schedule; `None` derives the default from the instance.
    pub schedule: Option<AnnealSchedule>,
    pub penalty: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            mode: SolverMode::Auto,
            exhaustive_cap: 25,
            node_limit: None,
            schedule: None,
            penalty: DEFAULT_PENALTY,
        }
    }
}

impl SolverOptions {
    pub fn with_mode(mode: SolverMode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: Vec<bool>,
    pub value: f64,
}

pub(crate) fn tie_eps(v: f64) -> f64 {
    1e-12 * (1.0 + v.abs())
}

/// Whether `(v, x)` beats the incumbent under the value-then-lexicographic order.
pub(crate) fn improves(v: f64, x: &[bool], best: Option<&Solution>) -> bool {
    match best {
        None => true,
        Some(b) => {
            let eps = tie_eps(b.value);
            v < b.value - eps || (v <= b.value + eps && x < b.x.as_slice())
        }
    }
}

pub fn solve(
    qf: &QuadraticForm,
    cs: &ConstraintSet,
    opts: &SolverOptions,
    rng: &mut Rng,
) -> Result<Solution> {
    check_dim("constraint set", qf.n(), cs.dim())?;
    let n = qf.n();
    let mode = match opts.mode {
        SolverMode::Auto if n <= 16 => SolverMode::Exhaustive,
        SolverMode::Auto if n <= 40 => SolverMode::BranchAndBound,
        SolverMode::Auto => SolverMode::Anneal,
        m => m,
    };
    match mode {
        SolverMode::Exhaustive => exhaustive(qf, cs, opts.exhaustive_cap),
        SolverMode::BranchAndBound => {
            bnb::branch_and_bound(qf, cs, opts.node_limit).map(|r| r.solution)
        }
        SolverMode::Anneal => {
            let schedule = opts
                .schedule
                .clone()
                .unwrap_or_else(|| AnnealSchedule::default_for(qf));
            anneal_run(qf, cs, &schedule, opts.penalty, rng)
        }
        SolverMode::Auto => unreachable!(),
    }
}

/// Enumerate all `2^n` points in Gray-code order.
pub fn exhaustive(qf: &QuadraticForm, cs: &ConstraintSet, cap: usize) -> Result<Solution> {
    let n = qf.n();
    if n > cap || n >= 63 {
        return Err(Error::InvalidParameter(format!(
            "exhaustive search over {n} variables exceeds the cap of {cap}"
        )));
    }
    let mut x = vec![false; n];
    let mut running = qf.c0;
    let mut best: Option<Solution> = None;
    let consider = |x: &[bool], running: f64, best: &mut Option<Solution>| {
        // The running value only screens; candidates are re-evaluated exactly.
        if let Some(b) = best.as_ref() {
            if running > b.value + 1e-9 * (1.0 + b.value.abs()) {
                return;
            }
        }
        let v = qf.value(x);
        if improves(v, x, best.as_ref()) && cs.is_satisfied(x) {
            *best = Some(Solution {
                x: x.to_vec(),
                value: v,
            });
        }
    };
    consider(&x, running, &mut best);
    for k in 1u64..(1u64 << n) {
        let i = k.trailing_zeros() as usize;
        running += qf.flip_delta(&x, i);
        x[i] = !x[i];
        consider(&x, running, &mut best);
    }
    best.ok_or(Error::Infeasible)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Origin;
    use crate::rng::seeded;
    use rand::Rng as _;

    pub(crate) fn brute_force(qf: &QuadraticForm, cs: &ConstraintSet) -> Option<Solution> {
        let n = qf.n();
        let mut best: Option<Solution> = None;
        for code in 0u64..(1 << n) {
            let x: Vec<bool> = (0..n).map(|i| (code >> i) & 1 == 1).collect();
            if !cs.is_satisfied(&x) {
                continue;
            }
            let v = qf.value(&x);
            if improves(v, &x, best.as_ref()) {
                best = Some(Solution { x, value: v });
            }
        }
        best
    }

    pub(crate) fn random_qf(n: usize, rng: &mut Rng) -> QuadraticForm {
        let mut qf = QuadraticForm::new(
            rng.random_range(-1.0..1.0),
            (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        );
        for i in 0..n {
            for j in (i + 1)..n {
                qf.set_quad(i, j, rng.random_range(-1.0..1.0));
            }
        }
        qf
    }

    #[test]
    fn separable_unconstrained_all_ones() {
        let qf = QuadraticForm::new(0.5, vec![-1.0; 6]);
        let cs = ConstraintSet::new(6);
        for mode in [
            SolverMode::Exhaustive,
            SolverMode::BranchAndBound,
            SolverMode::Auto,
        ] {
            let s = solve(&qf, &cs, &SolverOptions::with_mode(mode), &mut seeded(0)).unwrap();
            assert_eq!(s.x, vec![true; 6]);
            assert_eq!(s.value, 0.5 - 6.0);
        }
    }

    #[test]
    fn separable_cardinality_two() {
        let qf = QuadraticForm::new(0.5, vec![-1.0; 8]);
        let cs = ConstraintSet::cardinality(8, 2);
        for mode in [
            SolverMode::Exhaustive,
            SolverMode::BranchAndBound,
            SolverMode::Anneal,
        ] {
            let s = solve(&qf, &cs, &SolverOptions::with_mode(mode), &mut seeded(1)).unwrap();
            assert_eq!(s.x.iter().filter(|&&b| b).count(), 2);
            assert_eq!(s.value, 0.5 - 2.0);
        }
        // lexicographically smallest optimum has the ones at the end
        let s = exhaustive(&qf, &cs, 25).unwrap();
        let mut expect = vec![false; 8];
        expect[6] = true;
        expect[7] = true;
        assert_eq!(s.x, expect);
    }

    #[test]
    fn exhaustive_matches_brute_force() {
        let mut rng = seeded(5);
        for _ in 0..50 {
            let n = rng.random_range(1..9);
            let qf = random_qf(n, &mut rng);
            let mut cs = ConstraintSet::new(n);
            cs.push_linear(
                (0..n).map(|_| rng.random_range(-1.0..2.0)).collect(),
                1.0,
                Origin::User,
            )
            .unwrap();
            let a = exhaustive(&qf, &cs, 25).ok();
            let b = brute_force(&qf, &cs);
            assert_eq!(a, b, "{}", qf.dump(&cs));
        }
    }

    #[test]
    fn infeasible_is_reported() {
        let mut cs = ConstraintSet::new(3);
        cs.push_linear(vec![-1.0; 3], -4.0, Origin::User).unwrap();
        let qf = QuadraticForm::zeros(3);
        for mode in [SolverMode::Exhaustive, SolverMode::BranchAndBound] {
            assert!(matches!(
                solve(&qf, &cs, &SolverOptions::with_mode(mode), &mut seeded(0)),
                Err(Error::Infeasible)
            ));
        }
        assert!(matches!(
            solve(
                &qf,
                &cs,
                &SolverOptions::with_mode(SolverMode::Anneal),
                &mut seeded(0)
            ),
            Err(Error::BudgetExhausted)
        ));
    }

    #[test]
    fn exhaustive_cap_enforced() {
        let qf = QuadraticForm::zeros(5);
        assert!(exhaustive(&qf, &ConstraintSet::new(5), 4).is_err());
    }

    #[test]
    fn empty_problem() {
        let qf = QuadraticForm::new(2.5, vec![]);
        let s = solve(
            &qf,
            &ConstraintSet::new(0),
            &SolverOptions::default(),
            &mut seeded(0),
        )
        .unwrap();
        assert!(s.x.is_empty());
        assert_eq!(s.value, 2.5);
    }

    #[test]
    fn dump_lists_terms() {
        let mut qf = QuadraticForm::new(1.0, vec![2.0, 3.0]);
        qf.set_quad(0, 1, -4.0);
        let text = qf.dump(&ConstraintSet::cardinality(2, 1));
        assert!(text.contains("quad 0 1 -4"));
        assert!(text.contains("linear 1 1 <= 1"));
    }
}
