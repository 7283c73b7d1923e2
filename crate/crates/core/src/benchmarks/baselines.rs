use std::time::Instant;

use crate::acquisition::{anneal_mixed, MixedAnnealSchedule, Objective, SAMPLE_TRIES};
use crate::domain::MixedDomain;
use crate::error::{Error, Result};
use crate::rng::seeded;
use crate::trace::{next_incumbent, TraceRecord};

const SCALING_LABEL: &str = "none";

type Sink<'s> = &'s mut dyn FnMut(&TraceRecord) -> Result<()>;

struct Recorder<'a, 's> {
    domain: &'a MixedDomain,
    sink: Sink<'s>,
    seed: u64,
    incumbent: Option<f64>,
    records: Vec<TraceRecord>,
}

impl<'a, 's> Recorder<'a, 's> {
    fn new(domain: &'a MixedDomain, seed: u64, sink: Sink<'s>) -> Self {
        Self {
            domain,
            sink,
            seed,
            incumbent: None,
            records: Vec::new(),
        }
    }

    fn query<O: Objective + ?Sized>(
        &mut self,
        objective: &mut O,
        x_disc: &[bool],
        x_cont: &[f64],
    ) -> Result<(f64, bool)> {
        let clock = Instant::now();
        let y = objective.evaluate(x_disc, x_cont)?;
        if !y.is_finite() {
            return Err(Error::Objective(format!("non-finite observation {y}")));
        }
        let feasible = self.domain.is_feasible(x_disc, x_cont)?;
        self.incumbent = next_incumbent(self.incumbent, y, feasible);
        let rec = TraceRecord {
            seed: self.seed,
            t: self.records.len() + 1,
            x_disc: x_disc.to_vec(),
            x_cont: x_cont.to_vec(),
            y,
            feasible,
            incumbent: self.incumbent,
            violations: self.domain.violations(x_disc)?,
            wall_ms: clock.elapsed().as_secs_f64() * 1e3,
            scaling: SCALING_LABEL.into(),
        };
        (self.sink)(&rec)?;
        self.records.push(rec);
        Ok((y, feasible))
    }
}

/// `budget` independent uniform draws. With `constraint_aware` the draws come
/// from the feasible set; otherwise only the encoding constraints are
/// respected and infeasible queries reach the objective (typically a
/// [`super::PenaltyWrapper`]).
pub fn random_search<O: Objective + ?Sized>(
    objective: &mut O,
    domain: &MixedDomain,
    budget: usize,
    seed: u64,
    constraint_aware: bool,
) -> Result<Vec<TraceRecord>> {
    random_search_streaming(
        objective,
        domain,
        budget,
        seed,
        constraint_aware,
        |_| Ok(()),
    )
}

/// As [`random_search`], handing each record to `sink` as it is produced.
pub fn random_search_streaming<O: Objective + ?Sized>(
    objective: &mut O,
    domain: &MixedDomain,
    budget: usize,
    seed: u64,
    constraint_aware: bool,
    mut sink: impl FnMut(&TraceRecord) -> Result<()>,
) -> Result<Vec<TraceRecord>> {
    let sampler = if constraint_aware {
        domain.clone()
    } else {
        domain.structural()
    };
    let mut rng = seeded(seed);
    let mut rec = Recorder::new(domain, seed, &mut sink);
    for _ in 0..budget {
        let (xd, xc) = sampler.sample_feasible(&mut rng, SAMPLE_TRIES)?;
        rec.query(objective, &xd, &xc)?;
    }
    Ok(rec.records)
}

/// Simulated annealing directly on the objective: every state the chain
/// evaluates is one query, `budget` in total. The chain is unaware of user
/// constraints; their cost must come from the objective.
pub fn sa_search<O: Objective + ?Sized>(
    objective: &mut O,
    domain: &MixedDomain,
    budget: usize,
    seed: u64,
    schedule: &MixedAnnealSchedule,
) -> Result<Vec<TraceRecord>> {
    sa_search_streaming(objective, domain, budget, seed, schedule, |_| Ok(()))
}

/// As [`sa_search`], handing each record to `sink` as it is produced.
pub fn sa_search_streaming<O: Objective + ?Sized>(
    objective: &mut O,
    domain: &MixedDomain,
    budget: usize,
    seed: u64,
    schedule: &MixedAnnealSchedule,
    mut sink: impl FnMut(&TraceRecord) -> Result<()>,
) -> Result<Vec<TraceRecord>> {
    if budget == 0 {
        return Ok(Vec::new());
    }
    let mut rng = seeded(seed);
    let start = domain
        .structural()
        .sample_feasible(&mut rng, SAMPLE_TRIES)?;
    let schedule = MixedAnnealSchedule {
        steps: budget - 1,
        ..schedule.clone()
    };
    let mut rec = Recorder::new(domain, seed, &mut sink);
    anneal_mixed(start, &schedule, &mut rng, |xd, xc| {
        rec.query(objective, xd, xc)
    })?;
    Ok(rec.records)
}
