//! Thompson-sampling acquisition: conditioning reductions, alternating
//! optimization of a sampled weight vector, and the outer BO loop.

mod anneal;
mod bo;

pub use anneal::{anneal_mixed, MixedAnnealSchedule, MixedMove};
pub use bo::{run_bo, run_bo_streaming, AcquisitionOptimizer, BoLoopConfig, BoRun, Objective};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::continuous_opt::{minimize_from, MinimizeOptions, RffObjective};
use crate::discrete_opt::{solve, QuadraticForm, SolverOptions};
use crate::domain::MixedDomain;
use crate::error::{check_dim, Error, Result};
use crate::features::FeatureExpansion;
use crate::rng::Rng;

/// Rejection-sampling attempts per feasible start point.
pub(crate) const SAMPLE_TRIES: usize = 100_000;

/// A length-`M` weight vector split by feature block.
#[derive(Debug, Clone, Copy)]
pub struct WeightView<'a> {
    pub disc: &'a [f64],
    pub cont: &'a [f64],
    /// `m_disc × m_cont`, discrete index major.
    pub mixed: &'a [f64],
    m_cont: usize,
}

impl<'a> WeightView<'a> {
    pub fn new(fe: &FeatureExpansion, w: &'a [f64]) -> Result<Self> {
        check_dim("weight vector", fe.total(), w.len())?;
        let (disc, rest) = w.split_at(fe.m_disc());
        let (cont, mixed) = rest.split_at(fe.m_cont());
        Ok(Self {
            disc,
            cont,
            mixed,
            m_cont: fe.m_cont(),
        })
    }

    pub fn mixed_at(&self, k: usize, j: usize) -> f64 {
        self.mixed[k * self.m_cont + j]
    }

    pub fn concat(&self) -> Vec<f64> {
        [self.disc, self.cont, self.mixed].concat()
    }
}

/// Fix the continuous inputs and return the acquisition as a quadratic form
/// over the binary slots.
pub fn reduce_discrete(
    fe: &FeatureExpansion,
    w: &WeightView,
    x_cont: &[f64],
) -> Result<QuadraticForm> {
    let phi_c = fe.eval_continuous(x_cont)?;
    let (n, mc) = (fe.d_disc(), fe.m_cont());
    let u: Vec<f64> = (0..fe.m_disc())
        .map(|k| {
            let coupled: f64 = (0..mc)
                .filter(|&j| fe.mixed_active(k, j))
                .map(|j| w.mixed_at(k, j) * phi_c[j])
                .sum();
            w.disc[k] + coupled
        })
        .collect();
    let c0 = u[0] + dot(w.cont, &phi_c);
    let mut qf = QuadraticForm::new(c0, u[1..=n].to_vec());
    for (p, &(i, j)) in fe.pairs().iter().enumerate() {
        qf.set_quad(i, j, u[1 + n + p]);
    }
    Ok(qf)
}

/// Fix the binary inputs and return the acquisition as a box objective over
/// the continuous inputs.
pub fn reduce_continuous<'f>(
    fe: &'f FeatureExpansion,
    w: &WeightView,
    x_disc: &[bool],
) -> Result<RffObjective<'f>> {
    let phi_d = fe.eval_discrete(x_disc)?;
    let v: Vec<f64> = (0..fe.m_cont())
        .map(|j| {
            let coupled: f64 = phi_d
                .iter()
                .enumerate()
                .filter(|&(k, &d)| d != 0.0 && fe.mixed_active(k, j))
                .map(|(k, &d)| w.mixed_at(k, j) * d)
                .sum();
            w.cont[j] + coupled
        })
        .collect();
    RffObjective::new(fe, v, dot(w.disc, &phi_d))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `wᵀφ(x)`.
pub fn acquisition_value(
    fe: &FeatureExpansion,
    w: &[f64],
    x_disc: &[bool],
    x_cont: &[f64],
) -> Result<f64> {
    check_dim("weight vector", fe.total(), w.len())?;
    Ok(dot(w, &fe.eval_full(x_disc, x_cont)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlternationConfig {
    pub restarts: usize,
    pub max_rounds: usize,
    /// Stop once a round improves the value by less than this.
    pub tol: f64,
    pub discrete: SolverOptions,
    pub continuous: MinimizeOptions,
}

impl Default for AlternationConfig {
    fn default() -> Self {
        Self {
            restarts: 5,
            max_rounds: 50,
            tol: 1e-9,
            discrete: SolverOptions::default(),
            continuous: MinimizeOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionPoint {
    pub x_disc: Vec<bool>,
    pub x_cont: Vec<f64>,
    pub value: f64,
}

/// Minimize `wᵀφ(x)` over the feasible domain by alternating exact discrete
/// solves with continuous descent, best over several random starts.
pub fn alternate(
    fe: &FeatureExpansion,
    w: &[f64],
    domain: &MixedDomain,
    cfg: &AlternationConfig,
    rng: &mut Rng,
) -> Result<AcquisitionPoint> {
    alternate_inner(fe, w, domain, cfg, rng, |_, _| {})
}

pub(crate) fn alternate_inner(
    fe: &FeatureExpansion,
    w: &[f64],
    domain: &MixedDomain,
    cfg: &AlternationConfig,
    rng: &mut Rng,
    mut on_start: impl FnMut(&AcquisitionPoint, &AcquisitionPoint),
) -> Result<AcquisitionPoint> {
    check_dim("domain binary slots", fe.d_disc(), domain.d_disc())?;
    check_dim("domain continuous inputs", fe.d_cont(), domain.d_cont())?;
    if cfg.restarts == 0 {
        return Err(Error::InvalidParameter(
            "alternation needs at least one restart".into(),
        ));
    }
    let view = WeightView::new(fe, w)?;
    let mut best: Option<AcquisitionPoint> = None;
    for _ in 0..cfg.restarts {
        let (x_disc, mut x_cont) = match domain.sample_feasible(rng, SAMPLE_TRIES) {
            Ok(p) => p,
            Err(Error::NoFeasibleSample { .. }) => (
                vec![false; fe.d_disc()],
                (0..fe.d_cont()).map(|_| rng.random::<f64>()).collect(),
            ),
            Err(e) => return Err(e),
        };
        let start = AcquisitionPoint {
            value: acquisition_value(fe, w, &x_disc, &x_cont)?,
            x_disc,
            x_cont: x_cont.clone(),
        };
        let mut prev = f64::INFINITY;
        let mut cur = None;
        for _ in 0..cfg.max_rounds.max(1) {
            let qf = reduce_discrete(fe, &view, &x_cont)?;
            let sol = solve(&qf, domain.constraints(), &cfg.discrete, rng)?;
            let p = reduce_continuous(fe, &view, &sol.x)?;
            let m = minimize_from(&p, std::slice::from_ref(&x_cont), &cfg.continuous, rng)?;
            x_cont = m.x;
            let improvement = prev - m.value;
            prev = m.value;
            cur = Some(AcquisitionPoint {
                x_disc: sol.x,
                x_cont: x_cont.clone(),
                value: m.value,
            });
            if improvement < cfg.tol {
                break;
            }
        }
        let cur = cur.expect("at least one round");
        on_start(&start, &cur);
        if best.as_ref().is_none_or(|b| cur.value < b.value) {
            best = Some(cur);
        }
    }
    Ok(best.expect("at least one restart"))
}
