use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{
    acquisition_value, alternate, anneal_mixed, AcquisitionPoint, AlternationConfig,
    MixedAnnealSchedule, SAMPLE_TRIES,
};
use crate::blr::{scaling_factor, PosteriorState, ScalingMode};
use crate::domain::MixedDomain;
use crate::dual_decomp::{minimize_acquisition, DualOptions};
use crate::error::{check_dim, Error, Result};
use crate::features::FeatureExpansion;
use crate::rng::{seeded, Rng};
use crate::trace::{next_incumbent, TraceRecord};

/// A black-box objective to be minimized.
pub trait Objective {
    fn evaluate(&mut self, x_disc: &[bool], x_cont: &[f64]) -> Result<f64>;
}

impl<F: FnMut(&[bool], &[f64]) -> Result<f64>> Objective for F {
    fn evaluate(&mut self, x_disc: &[bool], x_cont: &[f64]) -> Result<f64> {
        self(x_disc, x_cont)
    }
}

/// Inner optimizer for the sampled acquisition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AcquisitionOptimizer {
    #[default]
    Alternating,
    /// Simulated annealing over the mixed domain; infeasible states cost `penalty` extra.
    Annealing {
        #[serde(default)]
        schedule: MixedAnnealSchedule,
        #[serde(default = "default_acq_penalty")]
        penalty: f64,
    },
    DualDecomposition {
        #[serde(default)]
        options: DualOptions,
    },
}

fn default_acq_penalty() -> f64 {
    1e3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoLoopConfig {
    /// Total number of objective queries.
    pub budget: usize,
    /// Random feasible queries before the model is used.
    pub n_init: usize,
    pub scaling: ScalingMode,
    /// Confidence parameter for the theory scaling.
    pub delta: f64,
    /// Prior precision of the weights.
    pub alpha: f64,
    /// Observation noise precision assumed by the model.
    pub beta: f64,
    pub seed: u64,
    pub alternation: AlternationConfig,
    pub optimizer: AcquisitionOptimizer,
}

impl Default for BoLoopConfig {
    fn default() -> Self {
        Self {
            budget: 50,
            n_init: 5,
            scaling: ScalingMode::Unit,
            delta: 0.1,
            alpha: 1.0,
            beta: 1.0,
            seed: 0,
            alternation: AlternationConfig::default(),
            optimizer: AcquisitionOptimizer::Alternating,
        }
    }
}

impl BoLoopConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_init == 0 || self.budget < self.n_init {
            return Err(Error::InvalidParameter(format!(
                "need budget >= n_init >= 1 (got budget {}, n_init {})",
                self.budget, self.n_init
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BoRun {
    pub trace: Vec<TraceRecord>,
    /// Minimizer of the posterior-mean surrogate at the end of the run.
    pub mean_argmin: Option<AcquisitionPoint>,
    pub posterior: PosteriorState,
}

impl BoRun {
    pub fn incumbent(&self) -> Option<f64> {
        self.trace.last().and_then(|r| r.incumbent)
    }
}

pub fn run_bo<O: Objective + ?Sized>(
    objective: &mut O,
    domain: &MixedDomain,
    fe: &FeatureExpansion,
    cfg: &BoLoopConfig,
) -> Result<BoRun> {
    run_bo_streaming(objective, domain, fe, cfg, |_| Ok(()))
}

/// As [`run_bo`], handing each record to `sink` as soon as it is produced so a
/// failing objective still leaves the earlier rows behind.
pub fn run_bo_streaming<O: Objective + ?Sized>(
    objective: &mut O,
    domain: &MixedDomain,
    fe: &FeatureExpansion,
    cfg: &BoLoopConfig,
    mut sink: impl FnMut(&TraceRecord) -> Result<()>,
) -> Result<BoRun> {
    cfg.validate()?;
    check_dim("domain binary slots", fe.d_disc(), domain.d_disc())?;
    check_dim("domain continuous inputs", fe.d_cont(), domain.d_cont())?;
    let mut rng = seeded(cfg.seed);
    let mut post = PosteriorState::new(fe.total(), cfg.alpha, cfg.beta)?;
    let scale = scaling_factor(fe.total(), cfg.budget.max(2), cfg.delta, cfg.scaling)?;
    let scaling = cfg.scaling.to_string();
    let mut trace = Vec::with_capacity(cfg.budget);
    let mut incumbent = None;
    for t in 1..=cfg.budget {
        let clock = Instant::now();
        let (x_disc, x_cont) = if t <= cfg.n_init {
            domain.sample_feasible(&mut rng, SAMPLE_TRIES)?
        } else {
            let w = post.sample_weights(scale, &mut rng)?;
            let p = optimize_acquisition(fe, &w, domain, cfg, &mut rng)?;
            (p.x_disc, p.x_cont)
        };
        let y = objective.evaluate(&x_disc, &x_cont)?;
        if !y.is_finite() {
            return Err(Error::Objective(format!(
                "non-finite observation {y} at iteration {t}"
            )));
        }
        let feasible = domain.is_feasible(&x_disc, &x_cont)?;
        post.update(&fe.eval_full(&x_disc, &x_cont)?, y)?;
        incumbent = next_incumbent(incumbent, y, feasible);
        let rec = TraceRecord {
            seed: cfg.seed,
            t,
            violations: domain.violations(&x_disc)?,
            x_disc,
            x_cont,
            y,
            feasible,
            incumbent,
            wall_ms: clock.elapsed().as_secs_f64() * 1e3,
            scaling: scaling.clone(),
        };
        sink(&rec)?;
        trace.push(rec);
    }
    let mean_argmin = match alternate(fe, post.mean(), domain, &cfg.alternation, &mut rng) {
        Ok(p) => Some(p),
        Err(Error::Infeasible) => None,
        Err(e) => return Err(e),
    };
    Ok(BoRun {
        trace,
        mean_argmin,
        posterior: post,
    })
}

fn optimize_acquisition(
    fe: &FeatureExpansion,
    w: &[f64],
    domain: &MixedDomain,
    cfg: &BoLoopConfig,
    rng: &mut Rng,
) -> Result<AcquisitionPoint> {
    match &cfg.optimizer {
        AcquisitionOptimizer::Alternating => alternate(fe, w, domain, &cfg.alternation, rng),
        AcquisitionOptimizer::Annealing { schedule, penalty } => {
            let start = domain.sample_feasible(rng, SAMPLE_TRIES)?;
            let out = anneal_mixed(start, schedule, rng, |xd, xc| {
                let v = acquisition_value(fe, w, xd, xc)?;
                let feasible = domain.is_feasible(xd, xc)?;
                Ok((if feasible { v } else { v + penalty }, feasible))
            })?;
            match out.best {
                Some((x_disc, x_cont, value)) => Ok(AcquisitionPoint {
                    x_disc,
                    x_cont,
                    value,
                }),
                None => {
                    let (x_disc, x_cont) = domain.sample_feasible(rng, SAMPLE_TRIES)?;
                    let value = acquisition_value(fe, w, &x_disc, &x_cont)?;
                    Ok(AcquisitionPoint {
                        x_disc,
                        x_cont,
                        value,
                    })
                }
            }
        }
        AcquisitionOptimizer::DualDecomposition { options } => {
            minimize_acquisition(fe, w, domain, options, rng)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::{expansion, gaussian_weights};
    use super::*;
    use crate::domain::ConstraintSet;
    use crate::trace::replay;

    fn linear_objective(
        fe: &FeatureExpansion,
        w: Vec<f64>,
    ) -> impl FnMut(&[bool], &[f64]) -> Result<f64> + '_ {
        move |xd, xc| acquisition_value(fe, &w, xd, xc)
    }

    #[test]
    fn degenerate_budget_is_random_search() {
        let fe = expansion(4, 2, 4, 0);
        let domain = MixedDomain::unit(4, 2).unwrap();
        let w = gaussian_weights(fe.total(), &mut seeded(1));
        let cfg = BoLoopConfig {
            budget: 5,
            n_init: 5,
            seed: 3,
            ..Default::default()
        };
        let run = run_bo(&mut linear_objective(&fe, w), &domain, &fe, &cfg).unwrap();
        let mut rng = seeded(3);
        for r in &run.trace {
            let (xd, xc) = domain.sample_feasible(&mut rng, SAMPLE_TRIES).unwrap();
            assert_eq!((xd, xc), (r.x_disc.clone(), r.x_cont.clone()));
        }
    }

    #[test]
    fn trace_shape_and_determinism() {
        let fe = expansion(6, 2, 6, 1);
        let domain = MixedDomain::unit(6, 2)
            .unwrap()
            .with_constraints(ConstraintSet::cardinality(6, 2))
            .unwrap();
        let w = gaussian_weights(fe.total(), &mut seeded(2));
        let cfg = BoLoopConfig {
            budget: 15,
            seed: 9,
            ..Default::default()
        };
        let a = run_bo(&mut linear_objective(&fe, w.clone()), &domain, &fe, &cfg).unwrap();
        let b = run_bo(&mut linear_objective(&fe, w), &domain, &fe, &cfg).unwrap();
        assert_eq!(a.trace.len(), 15);
        assert!(replay(&a.trace).is_consistent());
        assert!(a.trace.iter().all(|r| r.feasible && r.violations == 0));
        let incs: Vec<f64> = a.trace.iter().map(|r| r.incumbent.unwrap()).collect();
        assert!(incs.windows(2).all(|p| p[1] <= p[0]));
        for (ra, rb) in a.trace.iter().zip(&b.trace) {
            assert_eq!(ra.x_disc, rb.x_disc);
            assert_eq!(ra.x_cont, rb.x_cont);
            assert_eq!(ra.y, rb.y);
        }
        assert!(a.mean_argmin.is_some());
    }

    #[test]
    fn failing_objective_flushes_partial_trace() {
        let fe = expansion(3, 1, 4, 0);
        let domain = MixedDomain::unit(3, 1).unwrap();
        let mut calls = 0;
        let mut obj = |_: &[bool], _: &[f64]| -> Result<f64> {
            calls += 1;
            if calls == 4 {
                Err(Error::Objective("boom".into()))
            } else {
                Ok(calls as f64)
            }
        };
        let mut rows = Vec::new();
        let res = run_bo_streaming(&mut obj, &domain, &fe, &BoLoopConfig::default(), |r| {
            rows.push(r.t);
            Ok(())
        });
        assert!(matches!(res, Err(Error::Objective(_))));
        assert_eq!(rows, vec![1, 2, 3]);
    }

    #[test]
    fn invalid_budget_rejected() {
        let cfg = BoLoopConfig {
            budget: 3,
            n_init: 5,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = BoLoopConfig {
            n_init: 0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn annealing_optimizer_queries_feasible_points() {
        let fe = expansion(6, 1, 4, 0);
        let domain = MixedDomain::unit(6, 1)
            .unwrap()
            .with_constraints(ConstraintSet::cardinality(6, 2))
            .unwrap();
        let w = gaussian_weights(fe.total(), &mut seeded(5));
        let cfg = BoLoopConfig {
            budget: 10,
            optimizer: AcquisitionOptimizer::Annealing {
                schedule: MixedAnnealSchedule {
                    steps: 300,
                    ..Default::default()
                },
                penalty: 1e3,
            },
            ..Default::default()
        };
        let run = run_bo(&mut linear_objective(&fe, w), &domain, &fe, &cfg).unwrap();
        assert!(run.trace.iter().all(|r| r.feasible));
    }
}
