//! Benchmark objectives, baseline optimizers, and evaluation metrics.

mod baselines;
mod metrics;
mod stats;
mod synthetic;
mod table;

pub use baselines::{random_search, random_search_streaming, sa_search, sa_search_streaming};
pub use metrics::{
    normalized_errors, pooled_range, regrets, summarize, tidy_rows, write_tidy_csv,
    IterationSummary, MethodTraces, TidyRow,
};
pub use stats::{wilcoxon_signed_rank, Alternative, WilcoxonResult};
pub use synthetic::{
    make_synthetic_constrained, make_synthetic_unconstrained, OracleOptimum, SyntheticObjective,
    SyntheticTask, DEFAULT_NOISE_BETA, ORACLE_RESTARTS, SYNTHETIC_CARDINALITY, SYNTHETIC_D_CONT,
    SYNTHETIC_D_DISC, SYNTHETIC_M_CONT,
};
pub use table::{
    load_table_surrogate, synthetic_table_csv, table_from_reader, xgboost_domain_spec,
    TableSurrogate,
};

use crate::acquisition::Objective;
use crate::domain::MixedDomain;
use crate::error::Result;

/// Penalty for infeasible queries: ten times the observed objective range.
/// A degenerate range falls back to a penalty of 10 above the upper end.
pub fn penalty_from_range(lo: f64, hi: f64) -> f64 {
    let range = hi - lo;
    if range > 0.0 {
        hi + 10.0 * range
    } else {
        hi + 10.0
    }
}

/// Replaces the inner objective by a constant penalty on infeasible inputs.
/// Infeasible inputs are never passed to the inner objective.
pub struct PenaltyWrapper<O> {
    inner: O,
    domain: MixedDomain,
    penalty: f64,
    log: Vec<bool>,
}

impl<O: Objective> PenaltyWrapper<O> {
    pub fn new(inner: O, domain: MixedDomain, penalty: f64) -> Self {
        Self {
            inner,
            domain,
            penalty,
            log: Vec::new(),
        }
    }

    pub fn penalty(&self) -> f64 {
        self.penalty
    }

    /// Feasibility of every query so far, in order.
    pub fn log(&self) -> &[bool] {
        &self.log
    }

    pub fn valid_count(&self) -> usize {
        self.log.iter().filter(|&&v| v).count()
    }

    pub fn invalid_count(&self) -> usize {
        self.log.len() - self.valid_count()
    }

    pub fn into_inner(self) -> O {
        self.inner
    }
}

impl<O: Objective> Objective for PenaltyWrapper<O> {
    fn evaluate(&mut self, x_disc: &[bool], x_cont: &[f64]) -> Result<f64> {
        let feasible = self.domain.is_feasible(x_disc, x_cont)?;
        self.log.push(feasible);
        if feasible {
            self.inner.evaluate(x_disc, x_cont)
        } else {
            Ok(self.penalty)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::ConstraintSet;

    #[test]
    fn penalty_exceeds_range() {
        assert_eq!(penalty_from_range(-1.0, 1.0), 21.0);
        assert_eq!(penalty_from_range(2.0, 2.0), 12.0);
    }

    #[test]
    fn wrapper_shields_inner() {
        let d = MixedDomain::unit(3, 1)
            .unwrap()
            .with_constraints(ConstraintSet::cardinality(3, 1))
            .unwrap();
        let mut calls = 0;
        let mut w = PenaltyWrapper::new(
            |_: &[bool], _: &[f64]| {
                calls += 1;
                Ok(0.5)
            },
            d,
            9.0,
        );
        assert_eq!(w.evaluate(&[true, false, false], &[0.1]).unwrap(), 0.5);
        assert_eq!(w.evaluate(&[true, true, false], &[0.1]).unwrap(), 9.0);
        assert_eq!(w.log(), &[true, false]);
        drop(w);
        assert_eq!(calls, 1);
    }
}
