use std::sync::OnceLock;

use rand_distr::{Distribution, Normal, StandardNormal};

use crate::acquisition::{acquisition_value, reduce_continuous, Objective, WeightView};
use crate::continuous_opt::{minimize, MinimizeOptions};
use crate::domain::{ConstraintSet, MixedDomain};
use crate::error::{Error, Result};
use crate::features::{FeatureConfig, FeatureExpansion};
use crate::rng::{derive_seed, seeded, Rng};

pub const SYNTHETIC_D_DISC: usize = 8;
pub const SYNTHETIC_D_CONT: usize = 8;
pub const SYNTHETIC_M_CONT: usize = 16;
pub const SYNTHETIC_CARDINALITY: usize = 2;
pub const DEFAULT_NOISE_BETA: f64 = 100.0;
pub const ORACLE_RESTARTS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOptimum {
    pub x_disc: Vec<bool>,
    pub x_cont: Vec<f64>,
    pub value: f64,
}

/// `f(x) = w_trueᵀφ(x)` observed with Gaussian noise of precision `noise_beta`.
#[derive(Debug)]
pub struct SyntheticTask {
    pub domain: MixedDomain,
    pub fe: FeatureExpansion,
    pub w_true: Vec<f64>,
    pub noise_beta: f64,
    oracle: OnceLock<OracleOptimum>,
}

impl SyntheticTask {
    pub fn new(
        domain: MixedDomain,
        fe: FeatureExpansion,
        w_true: Vec<f64>,
        noise_beta: f64,
    ) -> Result<Self> {
        if w_true.len() != fe.total() {
            return Err(Error::DimensionMismatch {
                context: "true weights",
                expected: fe.total(),
                got: w_true.len(),
            });
        }
        if !(noise_beta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise precision must be positive, got {noise_beta}"
            )));
        }
        Ok(Self {
            domain,
            fe,
            w_true,
            noise_beta,
            oracle: OnceLock::new(),
        })
    }

    pub fn noiseless(&self, x_disc: &[bool], x_cont: &[f64]) -> Result<f64> {
        acquisition_value(&self.fe, &self.w_true, x_disc, x_cont)
    }

    /// A noisy objective whose noise stream is fixed by `noise_seed`.
    pub fn objective(&self, noise_seed: u64) -> SyntheticObjective<'_> {
        SyntheticObjective {
            task: self,
            noise: Normal::new(0.0, self.noise_beta.sqrt().recip()).expect("positive std"),
            rng: seeded(noise_seed),
        }
    }

    /// Global minimum over the feasible domain: every feasible binary vector
    /// with a multi-start continuous solve. Computed once and cached.
    pub fn oracle(&self) -> Result<&OracleOptimum> {
        if let Some(o) = self.oracle.get() {
            return Ok(o);
        }
        let o = self.compute_oracle(ORACLE_RESTARTS, 0)?;
        Ok(self.oracle.get_or_init(|| o))
    }

    pub fn compute_oracle(&self, restarts: usize, seed: u64) -> Result<OracleOptimum> {
        let view = WeightView::new(&self.fe, &self.w_true)?;
        let opts = MinimizeOptions {
            restarts,
            ..Default::default()
        };
        let mut rng = seeded(seed);
        let mut best: Option<OracleOptimum> = None;
        for x_disc in self.domain.enumerate_feasible_discrete()? {
            let p = reduce_continuous(&self.fe, &view, &x_disc)?;
            let m = minimize(&p, &opts, &mut rng)?;
            if best.as_ref().is_none_or(|b| m.value < b.value) {
                best = Some(OracleOptimum {
                    x_disc,
                    x_cont: m.x,
                    value: m.value,
                });
            }
        }
        best.ok_or(Error::Infeasible)
    }

    /// Penalty derived from the range of noiseless values over 1000 feasible
    /// random points (see [`super::penalty_from_range`]).
    pub fn reference_penalty(&self) -> Result<f64> {
        let mut rng = seeded(derive_seed(0, "penalty-reference"));
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for _ in 0..1000 {
            let (xd, xc) = self.domain.sample_feasible(&mut rng, 100_000)?;
            let v = self.noiseless(&xd, &xc)?;
            lo = lo.min(v);
            hi = hi.max(v);
        }
        Ok(super::penalty_from_range(lo, hi))
    }
}

pub struct SyntheticObjective<'a> {
    task: &'a SyntheticTask,
    noise: Normal<f64>,
    rng: Rng,
}

impl Objective for SyntheticObjective<'_> {
    fn evaluate(&mut self, x_disc: &[bool], x_cont: &[f64]) -> Result<f64> {
        Ok(self.task.noiseless(x_disc, x_cont)? + self.noise.sample(&mut self.rng))
    }
}

fn build(task_seed: u64, constrained: bool, noise_beta: f64) -> Result<SyntheticTask> {
    let mut domain = MixedDomain::unit(SYNTHETIC_D_DISC, SYNTHETIC_D_CONT)?;
    if constrained {
        domain = domain.with_constraints(ConstraintSet::cardinality(
            SYNTHETIC_D_DISC,
            SYNTHETIC_CARDINALITY,
        ))?;
    }
    let fe = FeatureExpansion::new(
        SYNTHETIC_D_DISC,
        SYNTHETIC_D_CONT,
        &FeatureConfig {
            m_cont: SYNTHETIC_M_CONT,
            sigma: 1.0,
            seed: derive_seed(task_seed, "synthetic-features"),
            rff_scopes: None,
        },
    )?;
    let mut rng = seeded(derive_seed(task_seed, "synthetic-weights"));
    let w_true = (0..fe.total())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    SyntheticTask::new(domain, fe, w_true, noise_beta)
}

/// 8 binary and 8 continuous inputs, 16 random Fourier features, Gaussian true weights.
pub fn make_synthetic_unconstrained(task_seed: u64) -> Result<SyntheticTask> {
    build(task_seed, false, DEFAULT_NOISE_BETA)
}

/// As [`make_synthetic_unconstrained`] with at most two active binary inputs.
pub fn make_synthetic_constrained(task_seed: u64) -> Result<SyntheticTask> {
    build(task_seed, true, DEFAULT_NOISE_BETA)
}
