use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Metropolis chain over `{0,1}^{D_d} × [0,1]^{D_c}`.
///
/// Each step picks one coordinate uniformly: a binary slot is flipped, a
/// continuous input receives a clamped Gaussian perturbation. Temperature
/// decays geometrically from `t0` to `t0 · final_ratio` over the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixedAnnealSchedule {
    pub t0: f64,
    pub final_ratio: f64,
    /// Proposals after the initial evaluation.
    pub steps: usize,
    pub cont_std: f64,
}

impl Default for MixedAnnealSchedule {
    fn default() -> Self {
        Self {
            t0: 1.0,
            final_ratio: 1e-3,
            steps: 2000,
            cont_std: 0.1,
        }
    }
}

impl MixedAnnealSchedule {
    pub fn temperature(&self, step: usize) -> f64 {
        let span = self.steps.saturating_sub(1).max(1) as f64;
        self.t0 * self.final_ratio.powf(step as f64 / span)
    }

    fn validate(&self) -> Result<()> {
        if !(self.t0 >= 0.0
            && self.final_ratio > 0.0
            && self.final_ratio <= 1.0
            && self.cont_std > 0.0)
        {
            return Err(Error::InvalidParameter(format!(
                "mixed annealing schedule {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MixedMove {
    Flip(usize),
    Perturb { index: usize, from: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixedAnnealOutcome {
    /// Lowest-energy feasible state visited, if any.
    pub best: Option<(Vec<bool>, Vec<f64>, f64)>,
    /// Energy of the current state after each step, starting with the initial state.
    pub chain: Vec<f64>,
}

/// Run the chain. `energy` returns `(energy, feasible)` for a state and is
/// called exactly once per evaluated state, `steps + 1` times in total.
pub fn anneal_mixed<E>(
    start: (Vec<bool>, Vec<f64>),
    schedule: &MixedAnnealSchedule,
    rng: &mut Rng,
    mut energy: E,
) -> Result<MixedAnnealOutcome>
where
    E: FnMut(&[bool], &[f64]) -> Result<(f64, bool)>,
{
    schedule.validate()?;
    let (mut xd, mut xc) = start;
    let (nd, nc) = (xd.len(), xc.len());
    let noise =
        Normal::new(0.0, schedule.cont_std).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let (mut e_cur, feasible) = energy(&xd, &xc)?;
    let mut best = feasible.then(|| (xd.clone(), xc.clone(), e_cur));
    let mut chain = Vec::with_capacity(schedule.steps + 1);
    chain.push(e_cur);
    for step in 0..schedule.steps {
        if nd + nc == 0 {
            break;
        }
        let i = rng.random_range(0..nd + nc);
        let mv = if i < nd {
            xd[i] = !xd[i];
            MixedMove::Flip(i)
        } else {
            let index = i - nd;
            let from = xc[index];
            xc[index] = (from + noise.sample(rng)).clamp(0.0, 1.0);
            MixedMove::Perturb { index, from }
        };
        let (e_new, feasible) = energy(&xd, &xc)?;
        let t = schedule.temperature(step);
        let delta = e_new - e_cur;
        let accept = delta <= 0.0 || (t > 0.0 && rng.random::<f64>() < (-delta / t).exp());
        if accept {
            e_cur = e_new;
            if feasible && best.as_ref().is_none_or(|b| e_new < b.2) {
                best = Some((xd.clone(), xc.clone(), e_new));
            }
        } else {
            match mv {
                MixedMove::Flip(i) => xd[i] = !xd[i],
                MixedMove::Perturb { index, from } => xc[index] = from,
            }
        }
        chain.push(e_cur);
    }
    Ok(MixedAnnealOutcome { best, chain })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn bowl(xd: &[bool], xc: &[f64]) -> Result<(f64, bool)> {
        let ones = xd.iter().filter(|&&b| b).count();
        let e = xc.iter().map(|v| (v - 0.3).powi(2)).sum::<f64>() - ones as f64;
        Ok((if ones > 2 { e + 1e6 } else { e }, ones <= 2))
    }

    #[test]
    fn zero_temperature_is_monotone() {
        let sched = MixedAnnealSchedule {
            t0: 0.0,
            steps: 500,
            ..Default::default()
        };
        let out = anneal_mixed(
            (vec![true; 5], vec![0.9, 0.1]),
            &sched,
            &mut seeded(1),
            bowl,
        )
        .unwrap();
        assert_eq!(out.chain.len(), 501);
        assert!(out.chain.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn best_is_feasible_and_counts_evaluations() {
        let mut calls = 0;
        let out = anneal_mixed(
            (vec![true; 5], vec![0.9, 0.1]),
            &MixedAnnealSchedule::default(),
            &mut seeded(2),
            |xd, xc| {
                calls += 1;
                bowl(xd, xc)
            },
        )
        .unwrap();
        assert_eq!(calls, 2001);
        let (xd, xc, e) = out.best.unwrap();
        assert!(xd.iter().filter(|&&b| b).count() <= 2);
        assert!(xc.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(e < -1.9);
    }

    #[test]
    fn temperature_endpoints() {
        let s = MixedAnnealSchedule {
            t0: 2.0,
            steps: 11,
            ..Default::default()
        };
        assert_eq!(s.temperature(0), 2.0);
        assert!((s.temperature(10) - 2e-3).abs() < 1e-15);
    }
}
