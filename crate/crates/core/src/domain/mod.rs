//! Mixed search space: continuous coordinates scaled to the unit box, discrete
//! variables encoded onto binary slots, and known constraints over those slots.
//!
//! Binary slots are laid out in declaration order. Within an integer variable
//! the bits are little-endian: slot `start + j` carries `2^j`.

mod constraints;
pub mod spec;

pub use constraints::{
    ConstraintSet, LinearConstraint, Origin, QuadraticConstraint, FEASIBILITY_TOL,
};

use std::ops::Range;

use rand::Rng as _;

use crate::error::{check_dim, Error, Result};
use crate::rng::Rng;

/// User-level variable kinds.
#[derive(Debug, Clone, PartialEq)]
pub enum VariableKind {
    Binary,
    /// Inclusive integer range, binary-coded as `lo + Σ_j bit_j 2^j`.
    Integer {
        lo: i64,
        hi: i64,
    },
    /// One-hot over `levels` slots.
    Categorical {
        levels: usize,
    },
    /// Closed interval, scaled to `[0, 1]` internally.
    Continuous {
        lo: f64,
        hi: f64,
    },
}

/// Where a variable lives in the internal representation.
#[derive(Debug, Clone, PartialEq)]
pub enum Placement {
    Discrete(Range<usize>),
    Continuous(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariableEncoding {
    pub name: String,
    pub kind: VariableKind,
    pub placement: Placement,
}

/// A user-level value for one variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Level(usize),
    Real(f64),
}

/// Number of bits needed to code `width` consecutive integers.
pub fn bits_for_width(width: u64) -> usize {
    if width <= 1 {
        0
    } else {
        (64 - (width - 1).leading_zeros()) as usize
    }
}

#[derive(Debug, Clone)]
pub struct MixedDomain {
    d_disc: usize,
    d_cont: usize,
    encodings: Vec<VariableEncoding>,
    cont_bounds: Vec<(f64, f64)>,
    constraints: ConstraintSet,
}

impl MixedDomain {
    pub fn builder() -> DomainBuilder {
        DomainBuilder::default()
    }

    /// `d_disc` raw binary variables `b0..` and `d_cont` unit-interval variables `c0..`.
    pub fn unit(d_disc: usize, d_cont: usize) -> Result<Self> {
        let mut b = Self::builder();
        for i in 0..d_disc {
            b = b.binary(format!("b{i}"));
        }
        for j in 0..d_cont {
            b = b.continuous(format!("c{j}"), 0.0, 1.0);
        }
        b.build()
    }

    /// Same variables with additional user constraints over the binary slots.
    pub fn with_constraints(mut self, extra: ConstraintSet) -> Result<Self> {
        check_dim("constraint set", self.d_disc, extra.dim())?;
        self.constraints.linear.extend(extra.linear);
        self.constraints.quadratic.extend(extra.quadratic);
        Ok(self)
    }

    pub fn d_disc(&self) -> usize {
        self.d_disc
    }

    pub fn d_cont(&self) -> usize {
        self.d_cont
    }

    pub fn encodings(&self) -> &[VariableEncoding] {
        &self.encodings
    }

    pub fn cont_bounds(&self) -> &[(f64, f64)] {
        &self.cont_bounds
    }

    pub fn constraints(&self) -> &ConstraintSet {
        &self.constraints
    }

    /// The domain with user constraints dropped; encoding constraints are kept.
    pub fn structural(&self) -> Self {
        Self {
            constraints: self.constraints.structural(),
            ..self.clone()
        }
    }

    pub fn is_feasible(&self, x_disc: &[bool], x_cont: &[f64]) -> Result<bool> {
        check_dim("discrete point", self.d_disc, x_disc.len())?;
        check_dim("continuous point", self.d_cont, x_cont.len())?;
        let in_box = x_cont.iter().all(|&v| (0.0..=1.0).contains(&v));
        Ok(in_box && self.constraints.is_satisfied(x_disc))
    }

    /// Number of violated user constraints at `x_disc`.
    pub fn violations(&self, x_disc: &[bool]) -> Result<usize> {
        check_dim("discrete point", self.d_disc, x_disc.len())?;
        let lin = self
            .constraints
            .linear
            .iter()
            .filter(|c| c.origin == Origin::User && !c.is_satisfied(x_disc))
            .count();
        let quad = self
            .constraints
            .quadratic
            .iter()
            .filter(|c| !c.is_satisfied(x_disc))
            .count();
        Ok(lin + quad)
    }

    pub fn encode(&self, assignment: &[Value]) -> Result<(Vec<bool>, Vec<f64>)> {
        check_dim("assignment", self.encodings.len(), assignment.len())?;
        let mut x_disc = vec![false; self.d_disc];
        let mut x_cont = vec![0.0; self.d_cont];
        for (enc, value) in self.encodings.iter().zip(assignment) {
            let out_of_range = |detail: String| Error::OutOfRange {
                name: enc.name.clone(),
                detail,
            };
            match (&enc.kind, &enc.placement, *value) {
                (VariableKind::Binary, Placement::Discrete(r), Value::Bool(b)) => {
                    x_disc[r.start] = b;
                }
                (VariableKind::Integer { lo, hi }, Placement::Discrete(r), Value::Int(v)) => {
                    if v < *lo || v > *hi {
                        return Err(out_of_range(format!("{v} not in [{lo}, {hi}]")));
                    }
                    let code = (v - lo) as u64;
                    for (j, slot) in r.clone().enumerate() {
                        x_disc[slot] = (code >> j) & 1 == 1;
                    }
                }
                (VariableKind::Categorical { levels }, Placement::Discrete(r), Value::Level(l)) => {
                    if l >= *levels {
                        return Err(out_of_range(format!("level {l} of {levels}")));
                    }
                    x_disc[r.start + l] = true;
                }
                (VariableKind::Continuous { lo, hi }, Placement::Continuous(j), Value::Real(v)) => {
                    if !(v >= *lo && v <= *hi) {
                        return Err(out_of_range(format!("{v} not in [{lo}, {hi}]")));
                    }
                    x_cont[*j] = if hi > lo {
                        ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
                    } else {
                        0.0
                    };
                }
                (kind, _, v) => {
                    return Err(out_of_range(format!(
                        "value {v:?} does not match kind {kind:?}"
                    )));
                }
            }
        }
        Ok((x_disc, x_cont))
    }

    pub fn decode(&self, x_disc: &[bool], x_cont: &[f64]) -> Result<Vec<Value>> {
        check_dim("discrete point", self.d_disc, x_disc.len())?;
        check_dim("continuous point", self.d_cont, x_cont.len())?;
        self.encodings
            .iter()
            .map(|enc| match (&enc.kind, &enc.placement) {
                (VariableKind::Binary, Placement::Discrete(r)) => Ok(Value::Bool(x_disc[r.start])),
                (VariableKind::Integer { lo, hi }, Placement::Discrete(r)) => {
                    let code = x_disc[r.clone()]
                        .iter()
                        .enumerate()
                        .fold(0u64, |acc, (j, &b)| acc | (u64::from(b) << j));
                    let v = lo + code as i64;
                    if v > *hi {
                        return Err(Error::OutOfRange {
                            name: enc.name.clone(),
                            detail: format!("code {code} decodes to {v} > {hi}"),
                        });
                    }
                    Ok(Value::Int(v))
                }
                (VariableKind::Categorical { .. }, Placement::Discrete(r)) => {
                    let slots = &x_disc[r.clone()];
                    let mut hot = slots.iter().enumerate().filter(|(_, &b)| b);
                    match (hot.next(), hot.next()) {
                        (Some((l, _)), None) => Ok(Value::Level(l)),
                        _ => Err(Error::InvalidOneHot {
                            name: enc.name.clone(),
                        }),
                    }
                }
                (VariableKind::Continuous { lo, hi }, Placement::Continuous(j)) => {
                    let u = x_cont[*j];
                    if !(0.0..=1.0).contains(&u) {
                        return Err(Error::OutOfBox {
                            index: *j,
                            value: u,
                        });
                    }
                    Ok(Value::Real(lo + u * (hi - lo)))
                }
                _ => unreachable!("placement always matches kind"),
            })
            .collect()
    }

    /// Uniform draw from `{0,1}^{D_d} × [0,1]^{D_c}`.
    pub fn sample_unconstrained(&self, rng: &mut Rng) -> (Vec<bool>, Vec<f64>) {
        let x_disc = (0..self.d_disc).map(|_| rng.random::<bool>()).collect();
        let x_cont = (0..self.d_cont).map(|_| rng.random::<f64>()).collect();
        (x_disc, x_cont)
    }

    /// Rejection sampling of a feasible point.
    pub fn sample_feasible(
        &self,
        rng: &mut Rng,
        max_tries: usize,
    ) -> Result<(Vec<bool>, Vec<f64>)> {
        if max_tries == 0 {
            return Err(Error::InvalidParameter(
                "max_tries must be at least 1".into(),
            ));
        }
        for _ in 0..max_tries {
            let x_disc: Vec<bool> = (0..self.d_disc).map(|_| rng.random::<bool>()).collect();
            if self.constraints.is_satisfied(&x_disc) {
                let x_cont = (0..self.d_cont).map(|_| rng.random::<f64>()).collect();
                return Ok((x_disc, x_cont));
            }
        }
        Err(Error::NoFeasibleSample { tries: max_tries })
    }

    /// All feasible binary vectors, in increasing code order (slot 0 is the low bit).
    pub fn enumerate_feasible_discrete(&self) -> Result<Vec<Vec<bool>>> {
        if self.d_disc > 24 {
            return Err(Error::InvalidParameter(format!(
                "refusing to enumerate 2^{} discrete points",
                self.d_disc
            )));
        }
        Ok((0u64..(1u64 << self.d_disc))
            .map(|code| {
                (0..self.d_disc)
                    .map(|i| (code >> i) & 1 == 1)
                    .collect::<Vec<bool>>()
            })
            .filter(|x| self.constraints.is_satisfied(x))
            .collect())
    }
}

#[derive(Debug, Default)]
pub struct DomainBuilder {
    vars: Vec<(String, VariableKind)>,
    linear: Vec<(Vec<f64>, f64)>,
    quadratic: Vec<(Vec<f64>, Vec<f64>, f64)>,
}

impl DomainBuilder {
    pub fn binary(mut self, name: impl Into<String>) -> Self {
        self.vars.push((name.into(), VariableKind::Binary));
        self
    }

    pub fn integer(mut self, name: impl Into<String>, lo: i64, hi: i64) -> Self {
        self.vars
            .push((name.into(), VariableKind::Integer { lo, hi }));
        self
    }

    pub fn categorical(mut self, name: impl Into<String>, levels: usize) -> Self {
        self.vars
            .push((name.into(), VariableKind::Categorical { levels }));
        self
    }

    pub fn continuous(mut self, name: impl Into<String>, lo: f64, hi: f64) -> Self {
        self.vars
            .push((name.into(), VariableKind::Continuous { lo, hi }));
        self
    }

    pub fn variable(mut self, name: impl Into<String>, kind: VariableKind) -> Self {
        self.vars.push((name.into(), kind));
        self
    }

    /// `aᵀx ≤ b` over binary slots.
    pub fn linear_constraint(mut self, a: Vec<f64>, b: f64) -> Self {
        self.linear.push((a, b));
        self
    }

    /// `xᵀQx + qᵀx ≤ b` over binary slots; `q_mat` row-major.
    pub fn quadratic_constraint(mut self, q_mat: Vec<f64>, q: Vec<f64>, b: f64) -> Self {
        self.quadratic.push((q_mat, q, b));
        self
    }

    pub fn build(self) -> Result<MixedDomain> {
        let mut encodings = Vec::with_capacity(self.vars.len());
        let mut cont_bounds = Vec::new();
        let mut d_disc = 0usize;
        let mut structural: Vec<(Range<usize>, Vec<f64>, f64)> = Vec::new();
        for (name, kind) in self.vars {
            if encodings.iter().any(|e: &VariableEncoding| e.name == name) {
                return Err(Error::InvalidDomain(format!("duplicate variable `{name}`")));
            }
            let placement = match &kind {
                VariableKind::Binary => {
                    d_disc += 1;
                    Placement::Discrete(d_disc - 1..d_disc)
                }
                VariableKind::Integer { lo, hi } => {
                    if hi < lo {
                        return Err(Error::InvalidDomain(format!("`{name}`: hi < lo")));
                    }
                    let width = (hi - lo) as u64 + 1;
                    let bits = bits_for_width(width);
                    let r = d_disc..d_disc + bits;
                    d_disc += bits;
                    if bits > 0 && !width.is_power_of_two() {
                        let a: Vec<f64> = (0..bits).map(|j| (1u64 << j) as f64).collect();
                        structural.push((r.clone(), a, (width - 1) as f64));
                    }
                    Placement::Discrete(r)
                }
                VariableKind::Categorical { levels } => {
                    if *levels == 0 {
                        return Err(Error::InvalidDomain(format!("`{name}`: zero levels")));
                    }
                    let r = d_disc..d_disc + levels;
                    d_disc += levels;
                    structural.push((r.clone(), vec![1.0; *levels], 1.0));
                    structural.push((r.clone(), vec![-1.0; *levels], -1.0));
                    Placement::Discrete(r)
                }
                VariableKind::Continuous { lo, hi } => {
                    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                        return Err(Error::InvalidDomain(format!("`{name}`: invalid bounds")));
                    }
                    cont_bounds.push((*lo, *hi));
                    Placement::Continuous(cont_bounds.len() - 1)
                }
            };
            encodings.push(VariableEncoding {
                name,
                kind,
                placement,
            });
        }
        let d_cont = cont_bounds.len();
        if d_disc + d_cont == 0 {
            return Err(Error::InvalidDomain("domain has no dimensions".into()));
        }
        let mut constraints = ConstraintSet::new(d_disc);
        for (r, coeffs, b) in structural {
            let mut a = vec![0.0; d_disc];
            a[r].copy_from_slice(&coeffs);
            constraints.push_linear(a, b, Origin::Structural)?;
        }
        for (a, b) in self.linear {
            constraints.push_linear(a, b, Origin::User)?;
        }
        for (q_mat, q, b) in self.quadratic {
            constraints.push_quadratic(q_mat, q, b)?;
        }
        Ok(MixedDomain {
            d_disc,
            d_cont,
            encodings,
            cont_bounds,
            constraints,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;

    fn card_domain() -> MixedDomain {
        MixedDomain::unit(8, 0)
            .unwrap()
            .with_constraints(ConstraintSet::cardinality(8, 2))
            .unwrap()
    }

    fn e(ix: &[usize], n: usize) -> Vec<bool> {
        (0..n).map(|i| ix.contains(&i)).collect()
    }

    #[test]
    fn cardinality_feasibility() {
        let d = card_domain();
        assert!(d.is_feasible(&e(&[0, 1], 8), &[]).unwrap());
        assert!(!d.is_feasible(&e(&[0, 1, 2], 8), &[]).unwrap());
    }

    #[test]
    fn unconstrained_box_points_feasible() {
        let d = MixedDomain::unit(3, 2).unwrap();
        assert!(d.is_feasible(&[true, false, true], &[0.0, 1.0]).unwrap());
        assert!(!d.is_feasible(&[true, false, true], &[0.0, 1.5]).unwrap());
    }

    #[test]
    fn feasibility_dimension_mismatch() {
        let d = MixedDomain::unit(3, 2).unwrap();
        assert!(matches!(
            d.is_feasible(&[true], &[0.0, 0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn cardinality_feasible_count_is_37() {
        assert_eq!(
            card_domain().enumerate_feasible_discrete().unwrap().len(),
            37
        );
    }

    #[test]
    fn integer_max_value_is_all_ones() {
        let d = MixedDomain::builder().integer("n", 1, 15).build().unwrap();
        assert_eq!(d.d_disc(), 4);
        let (bits, _) = d.encode(&[Value::Int(15)]).unwrap();
        assert_eq!(bits, vec![false, true, true, true]); // code 14 = 0b1110, little-endian
        let d = MixedDomain::builder().integer("n", 0, 15).build().unwrap();
        let (bits, _) = d.encode(&[Value::Int(15)]).unwrap();
        assert_eq!(bits, vec![true; 4]);
        assert!(d.constraints().is_empty());
    }

    #[test]
    fn categorical_one_hot() {
        let d = MixedDomain::builder()
            .categorical("booster", 2)
            .build()
            .unwrap();
        let (bits, _) = d.encode(&[Value::Level(0)]).unwrap();
        assert_eq!(bits, vec![true, false]);
        assert_eq!(d.constraints().linear.len(), 2);
        assert!(!d.is_feasible(&[false, false], &[]).unwrap());
        assert!(!d.is_feasible(&[true, true], &[]).unwrap());
        assert!(matches!(
            d.decode(&[true, true], &[]),
            Err(Error::InvalidOneHot { .. })
        ));
    }

    #[test]
    fn wide_integer_gets_auto_constraint() {
        let d = MixedDomain::builder()
            .integer("nrounds", 3, 5000)
            .build()
            .unwrap();
        // 4998 values need ceil(log2(4998)) = 13 bits (2^12 = 4096 < 4998 <= 8192).
        assert_eq!(d.d_disc(), 13);
        let c = &d.constraints().linear[0];
        assert_eq!(c.origin, Origin::Structural);
        assert_eq!(c.b, 4997.0);
        let (bits, _) = d.encode(&[Value::Int(5000)]).unwrap();
        assert!(d.is_feasible(&bits, &[]).unwrap());
        assert!(!d.is_feasible(&[true; 13], &[]).unwrap());
        assert!(d.decode(&[true; 13], &[]).is_err());
    }

    #[test]
    fn encode_rejects_out_of_range() {
        let d = MixedDomain::builder()
            .integer("n", 1, 15)
            .continuous("lr", 0.1, 0.2)
            .build()
            .unwrap();
        assert!(d.encode(&[Value::Int(16), Value::Real(0.15)]).is_err());
        assert!(d.encode(&[Value::Int(3), Value::Real(0.25)]).is_err());
        assert!(d.encode(&[Value::Real(3.0), Value::Real(0.15)]).is_err());
    }

    #[test]
    fn sample_feasible_respects_cardinality() {
        let d = card_domain();
        let mut rng = seeded(3);
        for _ in 0..500 {
            let (x, _) = d.sample_feasible(&mut rng, 1000).unwrap();
            assert!(x.iter().filter(|&&b| b).count() <= 2);
        }
    }

    #[test]
    fn sample_feasible_uniform_over_corners() {
        let d = MixedDomain::unit(2, 1).unwrap();
        let mut rng = seeded(11);
        let n = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            let (x, c) = d.sample_feasible(&mut rng, 1).unwrap();
            assert!((0.0..=1.0).contains(&c[0]));
            counts[usize::from(x[0]) + 2 * usize::from(x[1])] += 1;
        }
        // Binomial std at p = 1/4 is ~137; allow 5 sigma.
        for c in counts {
            assert!((c as f64 - 25_000.0).abs() < 700.0, "{counts:?}");
        }
    }

    #[test]
    fn sample_feasible_fails_on_empty_set() {
        let d = MixedDomain::unit(1, 0)
            .unwrap()
            .with_constraints({
                let mut cs = ConstraintSet::new(1);
                cs.push_linear(vec![1.0], -1.0, Origin::User).unwrap();
                cs
            })
            .unwrap();
        let mut rng = seeded(0);
        assert!(matches!(
            d.sample_feasible(&mut rng, 50),
            Err(Error::NoFeasibleSample { tries: 50 })
        ));
    }

    fn naive_feasible(d: &MixedDomain, x: &[bool], c: &[f64]) -> bool {
        let xf: Vec<f64> = x.iter().map(|&b| f64::from(u8::from(b))).collect();
        let n = xf.len();
        c.iter().all(|&v| (0.0..=1.0).contains(&v))
            && d.constraints().linear.iter().all(|lc| {
                let s: f64 = lc.a.iter().zip(&xf).map(|(a, x)| a * x).sum();
                s <= lc.b + 1e-9
            })
            && d.constraints().quadratic.iter().all(|qc| {
                let mut s = 0.0;
                for i in 0..n {
                    s += qc.q[i] * xf[i];
                    for j in 0..n {
                        s += xf[i] * qc.q_mat[i * n + j] * xf[j];
                    }
                }
                s <= qc.b + 1e-9
            })
    }

    #[test]
    fn feasibility_matches_naive_evaluation() {
        let mut rng = seeded(7);
        let n = 6;
        let mut q_mat = vec![0.0; n * n];
        for v in q_mat.iter_mut() {
            *v = rng.random_range(-2..=2) as f64;
        }
        let d = MixedDomain::unit(n, 2)
            .unwrap()
            .with_constraints({
                let mut cs = ConstraintSet::new(n);
                cs.push_linear(vec![1.0, -2.0, 3.0, 0.0, 1.0, 1.0], 2.0, Origin::User)
                    .unwrap();
                cs.push_linear(vec![0.5, 0.25, -0.75, 1.5, 0.0, 0.1], 1.1, Origin::User)
                    .unwrap();
                cs.push_quadratic(q_mat, vec![1.0, 0.0, -1.0, 2.0, 0.0, 1.0], 3.0)
                    .unwrap();
                cs
            })
            .unwrap();
        for _ in 0..1000 {
            let x: Vec<bool> = (0..n).map(|_| rng.random()).collect();
            let c: Vec<f64> = (0..2).map(|_| rng.random_range(-0.2..1.2)).collect();
            assert_eq!(d.is_feasible(&x, &c).unwrap(), naive_feasible(&d, &x, &c));
        }
    }

    fn mixed_domain() -> MixedDomain {
        MixedDomain::builder()
            .binary("flag")
            .integer("depth", 1, 15)
            .integer("rounds", 3, 5000)
            .categorical("booster", 3)
            .continuous("eta", 0.001, 0.99)
            .continuous("alpha", -5.0, 1000.0)
            .build()
            .unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn encode_decode_round_trip(
            flag in any::<bool>(),
            depth in 1i64..=15,
            rounds in 3i64..=5000,
            level in 0usize..3,
            eta in 0.001f64..=0.99,
            alpha in -5.0f64..=1000.0,
        ) {
            let d = mixed_domain();
            let v = vec![
                Value::Bool(flag), Value::Int(depth), Value::Int(rounds),
                Value::Level(level), Value::Real(eta), Value::Real(alpha),
            ];
            let (xd, xc) = d.encode(&v).unwrap();
            prop_assert!(d.is_feasible(&xd, &xc).unwrap());
            let back = d.decode(&xd, &xc).unwrap();
            prop_assert_eq!(&back[..4], &v[..4]);
            for (b, o) in back[4..].iter().zip(&v[4..]) {
                match (b, o) {
                    (Value::Real(b), Value::Real(o)) => {
                        prop_assert!((b - o).abs() <= 1e-12 * (1.0 + o.abs()));
                    }
                    _ => prop_assert!(false),
                }
            }
        }
    }
}
