use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::domain::ConstraintSet;
use crate::error::{Error, Result};
use crate::rng::Rng;

use super::{improves, QuadraticForm, Solution};

/// Energy added to every infeasible state, scaled by `1 + total violation`.
pub const DEFAULT_PENALTY: f64 = 1e9;

/// Geometric cooling: temperature at step `k` is `t0 · decay^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnealSchedule {
    pub t0: f64,
    pub decay: f64,
    pub steps: usize,
}

impl AnnealSchedule {
    pub fn default_for(qf: &QuadraticForm) -> Self {
        let n = qf.n();
        let t0 = qf.max_abs_coeff();
        Self {
            t0: if t0 > 0.0 { t0 } else { 1.0 },
            decay: 0.999,
            steps: (20 * n * n).max(1),
        }
    }

    pub fn temperature(&self, step: usize) -> f64 {
        self.t0 * self.decay.powi(step.min(i32::MAX as usize) as i32)
    }
}

fn violation(cs: &ConstraintSet, x: &[bool]) -> f64 {
    let lin: f64 = cs.linear.iter().map(|c| (c.lhs(x) - c.b).max(0.0)).sum();
    let quad: f64 = cs.quadratic.iter().map(|c| (c.lhs(x) - c.b).max(0.0)).sum();
    lin + quad
}

/// Single-bit-flip Metropolis chain on the penalized energy.
#[derive(Debug, Clone)]
pub struct AnnealChain<'a> {
    qf: &'a QuadraticForm,
    cs: &'a ConstraintSet,
    penalty: f64,
    x: Vec<bool>,
    value: f64,
    feasible: bool,
    energy: f64,
}

impl<'a> AnnealChain<'a> {
    pub fn new(qf: &'a QuadraticForm, cs: &'a ConstraintSet, penalty: f64, x0: Vec<bool>) -> Self {
        let value = qf.value(&x0);
        let (feasible, energy) = Self::score(cs, penalty, &x0, value);
        Self {
            qf,
            cs,
            penalty,
            x: x0,
            value,
            feasible,
            energy,
        }
    }

    fn score(cs: &ConstraintSet, penalty: f64, x: &[bool], value: f64) -> (bool, f64) {
        if cs.is_satisfied(x) {
            (true, value)
        } else {
            (false, value + penalty * (1.0 + violation(cs, x)))
        }
    }

    pub fn state(&self) -> &[bool] {
        &self.x
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn is_feasible(&self) -> bool {
        self.feasible
    }

    /// Propose one uniformly chosen flip; returns whether it was accepted.
    /// At zero temperature only non-increasing moves are accepted.
    pub fn step(&mut self, temperature: f64, rng: &mut Rng) -> bool {
        let n = self.x.len();
        if n == 0 {
            return false;
        }
        let i = rng.random_range(0..n);
        let new_value = self.value + self.qf.flip_delta(&self.x, i);
        self.x[i] = !self.x[i];
        let (feasible, energy) = Self::score(self.cs, self.penalty, &self.x, new_value);
        let delta = energy - self.energy;
        let accept = delta <= 0.0
            || (temperature > 0.0 && rng.random::<f64>() < (-delta / temperature).exp());
        if accept {
            self.value = new_value;
            self.feasible = feasible;
            self.energy = energy;
        } else {
            self.x[i] = !self.x[i];
        }
        accept
    }
}

/// Run a chain from a uniformly random start and return the best feasible
/// state it visited, with its value recomputed exactly.
pub fn anneal_run(
    qf: &QuadraticForm,
    cs: &ConstraintSet,
    schedule: &AnnealSchedule,
    penalty: f64,
    rng: &mut Rng,
) -> Result<Solution> {
    if !(schedule.t0 >= 0.0 && schedule.decay > 0.0 && schedule.decay <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "annealing schedule t0={} decay={}",
            schedule.t0, schedule.decay
        )));
    }
    let n = qf.n();
    let x0: Vec<bool> = (0..n).map(|_| rng.random()).collect();
    let mut chain = AnnealChain::new(qf, cs, penalty, x0);
    let mut best: Option<Solution> = None;
    let record = |chain: &AnnealChain, best: &mut Option<Solution>| {
        if chain.is_feasible() && improves(chain.value(), chain.state(), best.as_ref()) {
            *best = Some(Solution {
                x: chain.state().to_vec(),
                value: chain.value(),
            });
        }
    };
    record(&chain, &mut best);
    let mut t = schedule.t0;
    for _ in 0..schedule.steps {
        if chain.step(t, rng) {
            record(&chain, &mut best);
        }
        t *= schedule.decay;
    }
    let mut sol = best.ok_or(Error::BudgetExhausted)?;
    sol.value = qf.value(&sol.x);
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::super::{exhaustive, tests::random_qf};
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn zero_temperature_is_monotone() {
        let mut rng = seeded(2);
        let qf = random_qf(10, &mut rng);
        let cs = ConstraintSet::cardinality(10, 3);
        let x0: Vec<bool> = (0..10).map(|_| rng.random()).collect();
        let mut chain = AnnealChain::new(&qf, &cs, DEFAULT_PENALTY, x0);
        let mut prev = chain.energy();
        for _ in 0..2000 {
            chain.step(0.0, &mut rng);
            assert!(chain.energy() <= prev);
            prev = chain.energy();
        }
    }

    #[test]
    fn separable_matches_exhaustive() {
        let mut hits = 0;
        for seed in 0..100u64 {
            let mut rng = seeded(seed);
            let lin: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
            let qf = QuadraticForm::new(0.0, lin);
            let cs = ConstraintSet::new(10);
            let exact = exhaustive(&qf, &cs, 25).unwrap();
            let schedule = AnnealSchedule {
                steps: 10_000,
                ..AnnealSchedule::default_for(&qf)
            };
            let got = anneal_run(&qf, &cs, &schedule, DEFAULT_PENALTY, &mut rng).unwrap();
            if (got.value - exact.value).abs() <= 1e-12 * (1.0 + exact.value.abs()) {
                hits += 1;
            }
        }
        assert!(hits >= 95, "{hits}/100");
    }

    #[test]
    fn default_schedule() {
        let mut qf = QuadraticForm::new(0.0, vec![0.5, -2.0, 1.0]);
        qf.set_quad(0, 2, 3.0);
        let s = AnnealSchedule::default_for(&qf);
        assert_eq!(s.t0, 3.0);
        assert_eq!(s.decay, 0.999);
        assert_eq!(s.steps, 180);
        assert!((s.temperature(2) - 3.0 * 0.999 * 0.999).abs() < 1e-15);
    }

    #[test]
    fn finds_feasible_region_from_infeasible_start() {
        let qf = QuadraticForm::new(0.0, vec![-1.0; 12]);
        let cs = ConstraintSet::cardinality(12, 2);
        let s = anneal_run(
            &qf,
            &cs,
            &AnnealSchedule::default_for(&qf),
            DEFAULT_PENALTY,
            &mut seeded(9),
        )
        .unwrap();
        assert_eq!(s.value, -2.0);
    }
}
