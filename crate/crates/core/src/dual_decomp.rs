//! Lagrangian dual decomposition of the sampled acquisition, solved by
//! projected subgradient on the multipliers.
//!
//! Works in the maximization convention: the acquisition `wᵀφ(x)` to be
//! minimized becomes `θ(x) = −wᵀφ(x)`. `θ` splits into a discrete factor over
//! all binary slots, a continuous factor over all continuous inputs, and mixed
//! factors grouped by the (discrete scope, RFF scope) of each mixed feature and
//! then packed up to the scope caps.
//! Multipliers couple every mixed factor's copy of a variable to the
//! corresponding global copy, and the dual value upper-bounds `max θ`.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::acquisition::AcquisitionPoint;
use crate::continuous_opt::{descend, minimize, FnObjective, MinimizeOptions, Negated};
use crate::discrete_opt::{solve, QuadraticForm, SolverOptions};
use crate::domain::{ConstraintSet, MixedDomain};
use crate::error::{check_dim, Error, Result};
use crate::features::FeatureExpansion;
use crate::rng::{seeded, Rng};

pub const MAX_DISCRETE_SCOPE: usize = 4;
pub const MAX_CONTINUOUS_SCOPE: usize = 2;
/// Largest binary dimension for which local pattern feasibility is computed exactly.
const PATTERN_ENUM_LIMIT: usize = 20;
const AGREE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DualOptions {
    pub steps: usize,
    /// Step size at iteration `t` is `eta0 / √t`.
    pub eta0: f64,
    /// Grid points per continuous dimension in slave maximizations.
    pub grid: usize,
    /// Gradient refinement iterations after the grid search in mixed slaves.
    pub refine_iters: usize,
}

impl Default for DualOptions {
    fn default() -> Self {
        Self {
            steps: 500,
            eta0: 1.0,
            grid: 101,
            refine_iters: 20,
        }
    }
}

/// Weighted sum of RFF features plus a linear term, over a subset of the
/// continuous coordinates (other coordinates do not enter any listed feature).
#[derive(Debug, Clone, Default)]
struct RffSum {
    offset: f64,
    terms: Vec<(usize, f64)>,
    linear: Vec<(usize, f64)>,
}

impl RffSum {
    fn eval(&self, fe: &FeatureExpansion, x: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut v = self.offset;
        for &(j, w) in &self.terms {
            let (phi, dphi) = fe.rff_feature(j, x);
            v += w * phi;
            for (g, &o) in grad.iter_mut().zip(fe.freq(j)) {
                *g += w * dphi * o;
            }
        }
        for &(l, c) in &self.linear {
            v += c * x[l];
            grad[l] += c;
        }
        v
    }

    fn value(&self, fe: &FeatureExpansion, x: &[f64]) -> f64 {
        let mut g = vec![0.0; x.len()];
        self.eval(fe, x, &mut g)
    }
}

/// Maximize `sum` over the coordinates `coords` of `[0,1]^{D_c}` (others held at
/// zero). Small scopes use a grid followed by gradient refinement.
fn maximize_rff(
    fe: &FeatureExpansion,
    sum: &RffSum,
    coords: &[usize],
    opts: &DualOptions,
    refine_iters: usize,
    rng: &mut Rng,
) -> Result<(Vec<f64>, f64)> {
    let dc = fe.d_cont();
    let mut full = vec![0.0; dc];
    let embed = |local: &[f64], full: &mut Vec<f64>| {
        for (&c, &v) in coords.iter().zip(local) {
            full[c] = v;
        }
    };
    let local_obj = FnObjective {
        dim: coords.len(),
        f: |local: &[f64], grad: &mut [f64]| {
            let mut x = vec![0.0; dc];
            for (&c, &v) in coords.iter().zip(local) {
                x[c] = v;
            }
            let mut g = vec![0.0; dc];
            let v = sum.eval(fe, &x, &mut g);
            for (gl, &c) in grad.iter_mut().zip(coords) {
                *gl = g[c];
            }
            v
        },
    };
    let neg = Negated(&local_obj);
    if coords.is_empty() {
        let v = sum.value(fe, &full);
        return Ok((full, v));
    }
    if coords.len() > MAX_CONTINUOUS_SCOPE {
        let m = minimize(&neg, &MinimizeOptions::default(), rng)?;
        embed(&m.x, &mut full);
        return Ok((full, -m.value));
    }
    let g = opts.grid.max(2);
    let axis: Vec<f64> = (0..g).map(|i| i as f64 / (g - 1) as f64).collect();
    let mut best_local = vec![0.0; coords.len()];
    let mut best_v = f64::NEG_INFINITY;
    let mut local = vec![0.0; coords.len()];
    let total = g.pow(coords.len() as u32);
    for idx in 0..total {
        let mut r = idx;
        for l in local.iter_mut() {
            *l = axis[r % g];
            r /= g;
        }
        embed(&local, &mut full);
        let v = sum.value(fe, &full);
        if v > best_v {
            best_v = v;
            best_local.clone_from(&local);
        }
    }
    let refined = descend(&neg, &best_local, 1e-12, refine_iters, |_, _| {});
    let (x_local, v) = if -refined.value >= best_v {
        (refined.x, -refined.value)
    } else {
        (best_local, best_v)
    };
    let mut out = vec![0.0; dc];
    for (&c, &xv) in coords.iter().zip(&x_local) {
        out[c] = xv;
    }
    Ok((out, v))
}

#[derive(Debug, Clone)]
pub struct MixedFactor {
    pub disc_scope: Vec<usize>,
    pub cont_scope: Vec<usize>,
    /// `(discrete feature k, RFF feature j, coefficient)` in the maximization convention.
    pub terms: Vec<(usize, usize, f64)>,
    /// Local discrete patterns that extend to a feasible global assignment.
    pub patterns: Vec<Vec<bool>>,
}

impl MixedFactor {
    fn disc_value(&self, fe: &FeatureExpansion, k: usize, local: &[bool]) -> f64 {
        let on = fe.discrete_scope(k).iter().all(|v| {
            let pos = self
                .disc_scope
                .iter()
                .position(|s| s == v)
                .expect("scope member");
            local[pos]
        });
        if on {
            1.0
        } else {
            0.0
        }
    }

    fn local(&self, x_disc: &[bool]) -> Vec<bool> {
        self.disc_scope.iter().map(|&i| x_disc[i]).collect()
    }

    fn value(&self, fe: &FeatureExpansion, x_disc: &[bool], x_cont: &[f64]) -> f64 {
        let local = self.local(x_disc);
        self.terms
            .iter()
            .map(|&(k, j, c)| c * self.disc_value(fe, k, &local) * fe.rff_feature(j, x_cont).0)
            .sum()
    }
}

/// The factorized maximization problem.
#[derive(Debug, Clone)]
pub struct FactorGraph<'a> {
    fe: &'a FeatureExpansion,
    pub discrete: QuadraticForm,
    /// RFF weights of the continuous factor.
    pub continuous: Vec<f64>,
    pub mixed: Vec<MixedFactor>,
    pub constraints: ConstraintSet,
}

impl<'a> FactorGraph<'a> {
    /// Build `θ = −wᵀφ` from an acquisition weight vector.
    pub fn from_acquisition(
        fe: &'a FeatureExpansion,
        w: &[f64],
        constraints: &ConstraintSet,
    ) -> Result<Self> {
        check_dim("weight vector", fe.total(), w.len())?;
        check_dim("constraint set", fe.d_disc(), constraints.dim())?;
        let n = fe.d_disc();
        let (md, mc) = (fe.m_disc(), fe.m_cont());
        let wd = &w[..md];
        let mut discrete = QuadraticForm::new(-wd[0], wd[1..=n].iter().map(|v| -v).collect());
        for (p, &(i, j)) in fe.pairs().iter().enumerate() {
            discrete.set_quad(i, j, -wd[1 + n + p]);
        }
        let off = fe.mixed_offset();
        let mut continuous: Vec<f64> = w[md..md + mc].iter().map(|v| -v).collect();
        let mut groups: BTreeMap<(Vec<usize>, Vec<usize>), Vec<(usize, usize, f64)>> =
            BTreeMap::new();
        for k in 0..md {
            for j in 0..mc {
                let c = w[off + k * mc + j];
                if c == 0.0 || !fe.mixed_active(k, j) {
                    continue;
                }
                if k == 0 {
                    continuous[j] -= c;
                    continue;
                }
                let key = (fe.discrete_scope(k), fe.rff_scope(j).to_vec());
                groups.entry(key).or_default().push((k, j, -c));
            }
        }
        let feasible = if n <= PATTERN_ENUM_LIMIT {
            let all: Vec<Vec<bool>> = (0u64..(1u64 << n))
                .map(|code| (0..n).map(|i| (code >> i) & 1 == 1).collect::<Vec<bool>>())
                .filter(|x| constraints.is_satisfied(x))
                .collect();
            if all.is_empty() {
                return Err(Error::Infeasible);
            }
            Some(all)
        } else {
            None
        };
        // First-fit packing: groups sharing a continuous scope merge while the
        // union of their binary scopes stays within the cap.
        let mut packed: Vec<(Vec<usize>, Vec<usize>, Vec<(usize, usize, f64)>)> = Vec::new();
        for ((disc_scope, cont_scope), terms) in groups {
            if disc_scope.len() > MAX_DISCRETE_SCOPE || cont_scope.len() > MAX_CONTINUOUS_SCOPE {
                return Err(Error::ScopeTooLarge(format!(
                    "mixed factor over binary slots {disc_scope:?} and continuous inputs {cont_scope:?}"
                )));
            }
            let fits = packed.iter_mut().find(|(d, c, _)| {
                *c == cont_scope
                    && d.len() + disc_scope.iter().filter(|i| !d.contains(i)).count()
                        <= MAX_DISCRETE_SCOPE
            });
            match fits {
                Some((d, _, t)) => {
                    for i in disc_scope {
                        if !d.contains(&i) {
                            d.push(i);
                        }
                    }
                    d.sort_unstable();
                    t.extend(terms);
                }
                None => packed.push((disc_scope, cont_scope, terms)),
            }
        }
        let mut mixed = Vec::with_capacity(packed.len());
        for (disc_scope, cont_scope, terms) in packed {
            let patterns = local_patterns(&disc_scope, feasible.as_deref());
            mixed.push(MixedFactor {
                disc_scope,
                cont_scope,
                terms,
                patterns,
            });
        }
        Ok(Self {
            fe,
            discrete,
            continuous,
            mixed,
            constraints: constraints.clone(),
        })
    }

    pub fn features(&self) -> &FeatureExpansion {
        self.fe
    }

    /// `θ(x)`, the sum of all factors.
    pub fn objective(&self, x_disc: &[bool], x_cont: &[f64]) -> f64 {
        let fe = self.fe;
        let cont: f64 = self
            .continuous
            .iter()
            .enumerate()
            .filter(|(_, &w)| w != 0.0)
            .map(|(j, &w)| w * fe.rff_feature(j, x_cont).0)
            .sum();
        self.discrete.value(x_disc)
            + cont
            + self
                .mixed
                .iter()
                .map(|f| f.value(fe, x_disc, x_cont))
                .sum::<f64>()
    }

    fn zero_duals(&self) -> Duals {
        Duals {
            disc: self
                .mixed
                .iter()
                .map(|f| vec![0.0; f.disc_scope.len()])
                .collect(),
            cont: self
                .mixed
                .iter()
                .map(|f| vec![0.0; f.cont_scope.len()])
                .collect(),
        }
    }
}

fn local_patterns(scope: &[usize], feasible: Option<&[Vec<bool>]>) -> Vec<Vec<bool>> {
    let s = scope.len();
    (0u32..(1 << s))
        .map(|code| (0..s).map(|i| (code >> i) & 1 == 1).collect::<Vec<bool>>())
        .filter(|p| match feasible {
            None => true,
            Some(all) => all
                .iter()
                .any(|x| scope.iter().zip(p).all(|(&i, &b)| x[i] == b)),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Duals {
    /// Per mixed factor, one multiplier per in-scope binary slot.
    pub disc: Vec<Vec<f64>>,
    /// Per mixed factor, one multiplier per in-scope continuous input.
    pub cont: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlaveArgmaxes {
    pub disc: Vec<bool>,
    pub cont: Vec<f64>,
    /// Per mixed factor: local binary pattern and full-length continuous vector
    /// (only in-scope entries are meaningful).
    pub mixed: Vec<(Vec<bool>, Vec<f64>)>,
}

impl SlaveArgmaxes {
    pub fn agree(&self, fg: &FactorGraph) -> bool {
        fg.mixed.iter().zip(&self.mixed).all(|(f, (p, xc))| {
            f.disc_scope.iter().zip(p).all(|(&i, &b)| self.disc[i] == b)
                && f.cont_scope
                    .iter()
                    .all(|&l| (self.cont[l] - xc[l]).abs() <= AGREE_TOL)
        })
    }
}

/// `L(λ)` and the maximizers of every slave.
pub fn dual_value(
    fg: &FactorGraph,
    duals: &Duals,
    opts: &DualOptions,
    rng: &mut Rng,
) -> Result<(f64, SlaveArgmaxes)> {
    let fe = fg.fe;
    let n = fe.d_disc();
    // Discrete slave: maximize θᵈ + Σ λᵈ x, i.e. minimize its negation.
    let mut neg = QuadraticForm::new(
        -fg.discrete.c0,
        fg.discrete.lin.iter().map(|v| -v).collect(),
    );
    for i in 0..n {
        for j in (i + 1)..n {
            let q = fg.discrete.quad(i, j);
            if q != 0.0 {
                neg.set_quad(i, j, -q);
            }
        }
    }
    for (f, lam) in fg.mixed.iter().zip(&duals.disc) {
        for (&i, &l) in f.disc_scope.iter().zip(lam) {
            neg.lin[i] -= l;
        }
    }
    let sol = solve(&neg, &fg.constraints, &SolverOptions::default(), rng)?;
    let mut total = -sol.value;

    // Continuous slave.
    let mut cont = RffSum {
        offset: 0.0,
        terms: fg
            .continuous
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, w)| *w != 0.0)
            .collect(),
        linear: Vec::new(),
    };
    let mut lin = vec![0.0; fe.d_cont()];
    for (f, lam) in fg.mixed.iter().zip(&duals.cont) {
        for (&l, &v) in f.cont_scope.iter().zip(lam) {
            lin[l] += v;
        }
    }
    cont.linear = lin
        .iter()
        .copied()
        .enumerate()
        .filter(|(_, v)| *v != 0.0)
        .collect();
    let all: Vec<usize> = (0..fe.d_cont()).collect();
    let (x_cont, v_cont) = maximize_rff(fe, &cont, &all, opts, 500, rng)?;
    total += v_cont;

    // Mixed slaves.
    let mut mixed = Vec::with_capacity(fg.mixed.len());
    for ((f, ld), lc) in fg.mixed.iter().zip(&duals.disc).zip(&duals.cont) {
        let mut best: Option<(Vec<bool>, Vec<f64>, f64)> = None;
        for p in &f.patterns {
            let shift: f64 = ld.iter().zip(p).filter(|(_, &b)| b).map(|(l, _)| l).sum();
            let sum = RffSum {
                offset: -shift,
                terms: f
                    .terms
                    .iter()
                    .filter(|&&(k, _, _)| f.disc_value(fe, k, p) != 0.0)
                    .map(|&(_, j, c)| (j, c))
                    .collect(),
                linear: f
                    .cont_scope
                    .iter()
                    .zip(lc)
                    .map(|(&l, &v)| (l, -v))
                    .collect(),
            };
            let (xc, v) = maximize_rff(fe, &sum, &f.cont_scope, opts, opts.refine_iters, rng)?;
            if best.as_ref().is_none_or(|b| v > b.2) {
                best = Some((p.clone(), xc, v));
            }
        }
        let (p, xc, v) = best.ok_or(Error::Infeasible)?;
        total += v;
        mixed.push((p, xc));
    }
    Ok((
        total,
        SlaveArgmaxes {
            disc: sol.x,
            cont: x_cont,
            mixed,
        },
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualRecord {
    pub t: usize,
    pub dual: f64,
    pub best_dual: f64,
    pub best_primal: f64,
}

impl DualRecord {
    pub fn gap(&self) -> f64 {
        self.best_dual - self.best_primal
    }
}

/// Multipliers plus the running best dual and primal values.
#[derive(Debug, Clone)]
pub struct DualState {
    pub duals: Duals,
    pub argmaxes: SlaveArgmaxes,
    pub dual: f64,
    pub best_dual: f64,
    pub best_primal: (Vec<bool>, Vec<f64>, f64),
    pub t: usize,
    rng: Rng,
}

impl DualState {
    pub fn new(fg: &FactorGraph, opts: &DualOptions, seed: u64) -> Result<Self> {
        let mut rng = seeded(seed);
        let duals = fg.zero_duals();
        let (dual, argmaxes) = dual_value(fg, &duals, opts, &mut rng)?;
        let mut state = Self {
            duals,
            best_primal: (Vec::new(), Vec::new(), f64::NEG_INFINITY),
            dual,
            best_dual: dual,
            argmaxes,
            t: 0,
            rng,
        };
        state.update_primal(fg, opts)?;
        Ok(state)
    }

    /// Stitch the discrete and continuous slave answers into full assignments
    /// and keep the best feasible one.
    fn update_primal(&mut self, fg: &FactorGraph, opts: &DualOptions) -> Result<()> {
        let xd = self.argmaxes.disc.clone();
        if !fg.constraints.is_satisfied(&xd) {
            return Ok(());
        }
        let mut candidates = vec![self.argmaxes.cont.clone()];
        // Best continuous completion of the discrete slave's answer.
        let fe = fg.fe;
        let mut weights = fg.continuous.clone();
        for f in &fg.mixed {
            let local = f.local(&xd);
            for &(k, j, c) in &f.terms {
                weights[j] += c * f.disc_value(fe, k, &local);
            }
        }
        let sum = RffSum {
            offset: 0.0,
            terms: weights
                .into_iter()
                .enumerate()
                .filter(|(_, w)| *w != 0.0)
                .collect(),
            linear: Vec::new(),
        };
        let all: Vec<usize> = (0..fe.d_cont()).collect();
        candidates.push(maximize_rff(fe, &sum, &all, opts, 500, &mut self.rng)?.0);
        for xc in candidates {
            let v = fg.objective(&xd, &xc);
            if v > self.best_primal.2 {
                self.best_primal = (xd.clone(), xc, v);
            }
        }
        Ok(())
    }

    pub fn record(&self) -> DualRecord {
        DualRecord {
            t: self.t,
            dual: self.dual,
            best_dual: self.best_dual,
            best_primal: self.best_primal.2,
        }
    }
}

/// One projected-subgradient update with step `eta`, followed by a fresh dual
/// evaluation. Multipliers are unconstrained, so the projection is the identity.
pub fn subgradient_step(
    state: &mut DualState,
    fg: &FactorGraph,
    eta: f64,
    opts: &DualOptions,
) -> Result<DualRecord> {
    if !(eta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "step size must be positive, got {eta}"
        )));
    }
    let a = &state.argmaxes;
    for (fi, f) in fg.mixed.iter().enumerate() {
        let (p, xc) = &a.mixed[fi];
        for (s, &i) in f.disc_scope.iter().enumerate() {
            let g = (a.disc[i] as u8 as f64) - (p[s] as u8 as f64);
            state.duals.disc[fi][s] -= eta * g;
        }
        for (s, &l) in f.cont_scope.iter().enumerate() {
            state.duals.cont[fi][s] -= eta * (a.cont[l] - xc[l]);
        }
    }
    state.t += 1;
    let (dual, argmaxes) = dual_value(fg, &state.duals, opts, &mut state.rng)?;
    state.dual = dual;
    state.best_dual = state.best_dual.min(dual);
    state.argmaxes = argmaxes;
    state.update_primal(fg, opts)?;
    Ok(state.record())
}

#[derive(Debug, Clone)]
pub struct DualOutcome {
    pub x_disc: Vec<bool>,
    pub x_cont: Vec<f64>,
    /// `θ` at the returned assignment.
    pub value: f64,
    /// Best dual value minus best primal value.
    pub gap: f64,
    pub history: Vec<DualRecord>,
}

/// Run up to `opts.steps` subgradient steps, stopping early when all slaves agree.
pub fn optimize(fg: &FactorGraph, opts: &DualOptions, seed: u64) -> Result<DualOutcome> {
    let mut state = DualState::new(fg, opts, seed)?;
    let mut history = vec![state.record()];
    for t in 1..=opts.steps {
        if state.argmaxes.agree(fg) {
            break;
        }
        history.push(subgradient_step(
            &mut state,
            fg,
            opts.eta0 / (t as f64).sqrt(),
            opts,
        )?);
    }
    let (x_disc, x_cont, value) = state.best_primal.clone();
    if x_disc.is_empty() && fg.fe.d_disc() > 0 {
        return Err(Error::Infeasible);
    }
    Ok(DualOutcome {
        x_disc,
        x_cont,
        value,
        gap: state.best_dual - value,
        history,
    })
}

/// Minimize `wᵀφ(x)` over the domain through the dual of the negated problem.
pub fn minimize_acquisition(
    fe: &FeatureExpansion,
    w: &[f64],
    domain: &MixedDomain,
    opts: &DualOptions,
    rng: &mut Rng,
) -> Result<AcquisitionPoint> {
    use rand::Rng as _;
    let fg = FactorGraph::from_acquisition(fe, w, domain.constraints())?;
    let out = optimize(&fg, opts, rng.random())?;
    Ok(AcquisitionPoint {
        x_disc: out.x_disc,
        x_cont: out.x_cont,
        value: -out.value,
    })
}

/// `(t, dual, best_dual, best_primal, gap)` rows.
pub fn write_history<W: Write>(w: W, history: &[DualRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["t", "dual", "best_dual", "best_primal", "gap"])?;
    for r in history {
        wtr.write_record([
            r.t.to_string(),
            r.dual.to_string(),
            r.best_dual.to_string(),
            r.best_primal.to_string(),
            r.gap().to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureConfig;
    use rand::Rng as _;
    use rand_distr::{Distribution, StandardNormal};

    fn instance(d: usize, mc: usize, seed: u64) -> (FeatureExpansion, Vec<f64>) {
        let fe = FeatureExpansion::new(
            d,
            1,
            &FeatureConfig {
                m_cont: mc,
                sigma: 1.0,
                seed,
                rff_scopes: None,
            },
        )
        .unwrap();
        let mut rng = seeded(seed ^ 0xABCD);
        let w = (0..fe.total())
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        (fe, w)
    }

    fn enumerate_max(fg: &FactorGraph, n: usize) -> f64 {
        let mut best = f64::NEG_INFINITY;
        for code in 0u32..(1 << n) {
            let xd: Vec<bool> = (0..n).map(|i| (code >> i) & 1 == 1).collect();
            if !fg.constraints.is_satisfied(&xd) {
                continue;
            }
            for g in 0..=100 {
                best = best.max(fg.objective(&xd, &[g as f64 / 100.0]));
            }
        }
        best
    }

    #[test]
    fn factors_sum_to_negated_acquisition() {
        let (fe, w) = instance(4, 4, 1);
        let fg = FactorGraph::from_acquisition(&fe, &w, &ConstraintSet::new(4)).unwrap();
        let mut rng = seeded(2);
        for _ in 0..50 {
            let xd: Vec<bool> = (0..4).map(|_| rng.random()).collect();
            let xc = [rng.random::<f64>()];
            let phi = fe.eval_full(&xd, &xc).unwrap();
            let direct: f64 = -w.iter().zip(&phi).map(|(a, b)| a * b).sum::<f64>();
            assert!((fg.objective(&xd, &xc) - direct).abs() < 1e-10);
        }
    }

    #[test]
    fn packed_factors_respect_caps_and_partition_terms() {
        let (fe, w) = instance(6, 4, 5);
        let fg = FactorGraph::from_acquisition(&fe, &w, &ConstraintSet::new(6)).unwrap();
        assert!(fg.mixed.len() < 21);
        let mut seen = Vec::new();
        for f in &fg.mixed {
            assert!(f.disc_scope.len() <= MAX_DISCRETE_SCOPE);
            for &(k, j, _) in &f.terms {
                assert!(fe
                    .discrete_scope(k)
                    .iter()
                    .all(|i| f.disc_scope.contains(i)));
                seen.push((k, j));
            }
        }
        let n = seen.len();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), n);
    }

    #[test]
    fn decoupled_problem_solves_in_one_iteration() {
        let (fe, mut w) = instance(4, 4, 3);
        let off = fe.mixed_offset();
        let mc = fe.m_cont();
        // keep only the constant-discrete mixed terms, which fold into the continuous factor
        w[off + mc..].iter_mut().for_each(|v| *v = 0.0);
        let fg = FactorGraph::from_acquisition(&fe, &w, &ConstraintSet::new(4)).unwrap();
        assert!(fg.mixed.is_empty());
        let out = optimize(&fg, &DualOptions::default(), 0).unwrap();
        assert_eq!(out.history.len(), 1);
        assert!(out.gap.abs() < 1e-9);
        assert!(out.value >= enumerate_max(&fg, 4) - 1e-9);
    }

    #[test]
    fn weak_duality_on_tiny_instances() {
        for seed in 0..5 {
            let (fe, w) = instance(4, 3, seed);
            let fg = FactorGraph::from_acquisition(&fe, &w, &ConstraintSet::new(4)).unwrap();
            let truth = enumerate_max(&fg, 4);
            let opts = DualOptions {
                steps: 30,
                ..Default::default()
            };
            let mut state = DualState::new(&fg, &opts, seed).unwrap();
            assert!(state.dual >= truth - 1e-9);
            for t in 1..=30 {
                let r = subgradient_step(&mut state, &fg, 1.0 / (t as f64).sqrt(), &opts).unwrap();
                assert!(r.dual >= truth - 1e-9, "L={} truth={truth}", r.dual);
                assert!(r.best_dual >= r.best_primal - 1e-9);
            }
        }
    }

    #[test]
    fn random_multipliers_bound_the_grid() {
        let (fe, w) = instance(4, 3, 11);
        let fg = FactorGraph::from_acquisition(&fe, &w, &ConstraintSet::cardinality(4, 2)).unwrap();
        let truth = enumerate_max(&fg, 4);
        let mut rng = seeded(12);
        for _ in 0..20 {
            let mut duals = fg.zero_duals();
            duals
                .disc
                .iter_mut()
                .flatten()
                .for_each(|v| *v = rng.random_range(-3.0..3.0));
            duals
                .cont
                .iter_mut()
                .flatten()
                .for_each(|v| *v = rng.random_range(-3.0..3.0));
            let (l, _) = dual_value(&fg, &duals, &DualOptions::default(), &mut rng).unwrap();
            assert!(l >= truth - 1e-9);
        }
    }

    #[test]
    fn agreement_certifies_optimality() {
        let (fe, w) = instance(3, 2, 5);
        let fg = FactorGraph::from_acquisition(&fe, &w, &ConstraintSet::new(3)).unwrap();
        let mut rng = seeded(0);
        let (l, a) = dual_value(&fg, &fg.zero_duals(), &DualOptions::default(), &mut rng).unwrap();
        if a.agree(&fg) {
            assert!((l - fg.objective(&a.disc, &a.cont)).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_subgradient_leaves_multipliers() {
        let (fe, mut w) = instance(3, 2, 5);
        let off = fe.mixed_offset();
        w[off + fe.m_cont()..].iter_mut().for_each(|v| *v = 0.0);
        let fg = FactorGraph::from_acquisition(&fe, &w, &ConstraintSet::new(3)).unwrap();
        let opts = DualOptions::default();
        let mut state = DualState::new(&fg, &opts, 0).unwrap();
        let before = state.duals.clone();
        subgradient_step(&mut state, &fg, 0.5, &opts).unwrap();
        assert_eq!(state.duals, before);
    }

    #[test]
    fn global_scopes_rejected_in_high_dimension() {
        let fe = FeatureExpansion::new(3, 3, &FeatureConfig::default()).unwrap();
        let w = vec![1.0; fe.total()];
        assert!(matches!(
            FactorGraph::from_acquisition(&fe, &w, &ConstraintSet::new(3)),
            Err(Error::ScopeTooLarge(_))
        ));
    }

    #[test]
    fn minimization_is_negated_maximization() {
        let (fe, w) = instance(3, 2, 7);
        let domain = MixedDomain::unit(3, 1).unwrap();
        let opts = DualOptions {
            steps: 20,
            ..Default::default()
        };
        let mut rng = seeded(4);
        let seed: u64 = seeded(4).random();
        let p = minimize_acquisition(&fe, &w, &domain, &opts, &mut rng).unwrap();
        let fg = FactorGraph::from_acquisition(&fe, &w, domain.constraints()).unwrap();
        let out = optimize(&fg, &opts, seed).unwrap();
        assert_eq!(p.value, -out.value);
        let direct: f64 = w
            .iter()
            .zip(fe.eval_full(&p.x_disc, &p.x_cont).unwrap())
            .map(|(a, b)| a * b)
            .sum();
        assert!((p.value - direct).abs() < 1e-10);
    }

    #[test]
    fn history_csv() {
        let rec = DualRecord {
            t: 1,
            dual: 2.0,
            best_dual: 2.0,
            best_primal: 1.5,
        };
        let mut buf = Vec::new();
        write_history(&mut buf, &[rec]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "t,dual,best_dual,best_primal,gap\n1,2,2,1.5,0.5\n"
        );
    }
}
