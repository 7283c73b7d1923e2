use crate::domain::{ConstraintSet, FEASIBILITY_TOL};
use crate::error::{check_dim, Error, Result};

use super::{improves, tie_eps, QuadraticForm, Solution};

const FREE: i8 = -1;

/// Lower bound on `qf` over all completions of a partial assignment.
///
/// Every monomial is minimized independently: fixed monomials contribute their
/// value, monomials containing a variable fixed to zero vanish, and the rest
/// contribute `min(0, coefficient)`. A full assignment yields the exact value.
pub fn lower_bound(qf: &QuadraticForm, partial: &[Option<bool>]) -> Result<f64> {
    check_dim("partial assignment", qf.n(), partial.len())?;
    let assign: Vec<i8> = partial
        .iter()
        .map(|p| match p {
            None => FREE,
            Some(b) => *b as i8,
        })
        .collect();
    Ok(bound(qf, &assign))
}

fn bound(qf: &QuadraticForm, assign: &[i8]) -> f64 {
    let n = qf.n();
    let mut lb = qf.c0;
    for i in 0..n {
        let ai = assign[i];
        if ai == 0 {
            continue;
        }
        lb += if ai == 1 {
            qf.lin[i]
        } else {
            qf.lin[i].min(0.0)
        };
        let row = qf.row(i);
        for j in (i + 1)..n {
            let aj = assign[j];
            if aj == 0 {
                continue;
            }
            lb += if ai == 1 && aj == 1 {
                row[j]
            } else {
                row[j].min(0.0)
            };
        }
    }
    lb
}

fn constraints_reachable(cs: &ConstraintSet, assign: &[i8]) -> bool {
    let n = assign.len();
    for c in &cs.linear {
        let mut lo = 0.0;
        for (a, &s) in c.a.iter().zip(assign) {
            lo += match s {
                1 => *a,
                FREE => a.min(0.0),
                _ => 0.0,
            };
        }
        if lo > c.b + FEASIBILITY_TOL {
            return false;
        }
    }
    for c in &cs.quadratic {
        let mut lo = 0.0;
        for i in 0..n {
            let ai = assign[i];
            if ai == 0 {
                continue;
            }
            let d = c.diag_coeff(i);
            lo += if ai == 1 { d } else { d.min(0.0) };
            for j in (i + 1)..n {
                let aj = assign[j];
                if aj == 0 {
                    continue;
                }
                let p = c.pair_coeff(i, j);
                lo += if ai == 1 && aj == 1 { p } else { p.min(0.0) };
            }
        }
        if lo > c.b + FEASIBILITY_TOL {
            return false;
        }
    }
    true
}

#[derive(Debug, Clone)]
pub struct BnbOutcome {
    pub solution: Solution,
    pub nodes: u64,
    pub complete: bool,
}

struct Search<'a> {
    qf: &'a QuadraticForm,
    cs: &'a ConstraintSet,
    order: Vec<usize>,
    assign: Vec<i8>,
    best: Option<Solution>,
    nodes: u64,
    limit: u64,
    truncated: bool,
}

impl Search<'_> {
    fn visit(&mut self, depth: usize) {
        if self.truncated {
            return;
        }
        if self.nodes >= self.limit {
            self.truncated = true;
            return;
        }
        self.nodes += 1;
        if !constraints_reachable(self.cs, &self.assign) {
            return;
        }
        let n = self.qf.n();
        if depth == n {
            let x: Vec<bool> = self.assign.iter().map(|&s| s == 1).collect();
            let v = self.qf.value(&x);
            if improves(v, &x, self.best.as_ref()) && self.cs.is_satisfied(&x) {
                self.best = Some(Solution { x, value: v });
            }
            return;
        }
        if let Some(b) = &self.best {
            // Ties are not pruned so the lexicographic tie-break stays exact.
            if bound(self.qf, &self.assign) > b.value + tie_eps(b.value) {
                return;
            }
        }
        let i = self.order[depth];
        let row = self.qf.row(i);
        let mut eff = self.qf.lin[i];
        for (j, &s) in self.assign.iter().enumerate() {
            eff += match s {
                1 => row[j],
                FREE if j != i => row[j].min(0.0),
                _ => 0.0,
            };
        }
        let first = (eff < 0.0) as i8;
        for v in [first, 1 - first] {
            self.assign[i] = v;
            self.visit(depth + 1);
        }
        self.assign[i] = FREE;
    }
}

/// Depth-first branch and bound. `node_limit` defaults to the full tree size.
pub fn branch_and_bound(
    qf: &QuadraticForm,
    cs: &ConstraintSet,
    node_limit: Option<u64>,
) -> Result<BnbOutcome> {
    let n = qf.n();
    let full_tree = if n >= 63 {
        u64::MAX
    } else {
        (1u64 << (n + 1)) - 1
    };
    let limit = node_limit.unwrap_or(full_tree).min(full_tree);
    let mut order: Vec<usize> = (0..n).collect();
    let impact: Vec<f64> = (0..n).map(|i| qf.impact(i)).collect();
    order.sort_by(|&a, &b| impact[b].total_cmp(&impact[a]).then(a.cmp(&b)));
    let mut search = Search {
        qf,
        cs,
        order,
        assign: vec![FREE; n],
        best: None,
        nodes: 0,
        limit,
        truncated: false,
    };
    search.visit(0);
    match search.best {
        Some(solution) => Ok(BnbOutcome {
            solution,
            nodes: search.nodes,
            complete: !search.truncated,
        }),
        None if search.truncated => Err(Error::BudgetExhausted),
        None => Err(Error::Infeasible),
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::{brute_force, random_qf};
    use super::*;
    use crate::domain::Origin;
    use crate::rng::seeded;
    use proptest::prelude::*;
    use rand::Rng as _;

    #[test]
    fn matches_brute_force_with_constraints() {
        let mut rng = seeded(11);
        for _ in 0..100 {
            let n = rng.random_range(1..11);
            let qf = random_qf(n, &mut rng);
            let mut cs = ConstraintSet::new(n);
            cs.push_linear(
                (0..n).map(|_| rng.random_range(-1.0..2.0)).collect(),
                1.5,
                Origin::User,
            )
            .unwrap();
            if rng.random_bool(0.5) {
                let q_mat: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let q: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                cs.push_quadratic(q_mat, q, 0.5).unwrap();
            }
            let got = branch_and_bound(&qf, &cs, None).map(|o| o.solution).ok();
            assert_eq!(got, brute_force(&qf, &cs), "{}", qf.dump(&cs));
        }
    }

    #[test]
    fn node_count_within_tree() {
        let mut rng = seeded(3);
        let qf = random_qf(12, &mut rng);
        let out = branch_and_bound(&qf, &ConstraintSet::new(12), None).unwrap();
        assert!(out.complete);
        assert!(out.nodes < 1 << 13);
    }

    #[test]
    fn node_limit_truncates() {
        let mut rng = seeded(4);
        let qf = random_qf(14, &mut rng);
        let out = branch_and_bound(&qf, &ConstraintSet::new(14), Some(20)).unwrap();
        assert!(!out.complete);
        assert!(out.nodes <= 20);
        let mut cs = ConstraintSet::new(14);
        cs.push_linear(vec![-1.0; 14], -14.0, Origin::User).unwrap();
        assert!(matches!(
            branch_and_bound(&qf, &cs, Some(3)),
            Err(Error::BudgetExhausted)
        ));
    }

    #[test]
    fn full_assignment_bound_is_value() {
        let mut rng = seeded(8);
        let qf = random_qf(7, &mut rng);
        for code in 0u32..128 {
            let x: Vec<bool> = (0..7).map(|i| (code >> i) & 1 == 1).collect();
            let p: Vec<Option<bool>> = x.iter().map(|&b| Some(b)).collect();
            assert!((lower_bound(&qf, &p).unwrap() - qf.value(&x)).abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn bound_is_valid(seed in any::<u64>(), mask in 0u32..(1 << 8), bits in 0u32..(1 << 8)) {
            let n = 8;
            let qf = random_qf(n, &mut seeded(seed));
            let partial: Vec<Option<bool>> = (0..n)
                .map(|i| if (mask >> i) & 1 == 1 { Some((bits >> i) & 1 == 1) } else { None })
                .collect();
            let lb = lower_bound(&qf, &partial).unwrap();
            let mut best = f64::INFINITY;
            for code in 0u32..(1 << n) {
                let x: Vec<bool> = (0..n)
                    .map(|i| partial[i].unwrap_or((code >> i) & 1 == 1))
                    .collect();
                best = best.min(qf.value(&x));
            }
            prop_assert!(lb <= best + 1e-12);
        }
    }
}
