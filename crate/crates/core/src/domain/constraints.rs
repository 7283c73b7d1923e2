use crate::error::{check_dim, Error, Result};

/// Tolerance used when a constraint has non-integral coefficients.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Largest magnitude for which a float coefficient is treated as an exact integer.
const EXACT_LIMIT: f64 = 9_007_199_254_740_992.0; // 2^53

fn is_integral(v: f64) -> bool {
    v.is_finite() && v.fract() == 0.0 && v.abs() <= EXACT_LIMIT
}

/// Whether a constraint was written by the user or generated by a variable encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    User,
    /// Auto-generated to keep binary codes decodable (integer ranges, one-hot sums).
    Structural,
}

/// `aᵀx ≤ b` over the binary slots.
#[derive(Debug, Clone)]
pub struct LinearConstraint {
    pub a: Vec<f64>,
    pub b: f64,
    pub origin: Origin,
    integral: bool,
}

impl LinearConstraint {
    pub fn new(a: Vec<f64>, b: f64, origin: Origin) -> Result<Self> {
        if a.iter().chain(std::iter::once(&b)).any(|v| !v.is_finite()) {
            return Err(Error::InvalidDomain(
                "non-finite linear constraint coefficient".into(),
            ));
        }
        let integral = a.iter().all(|&v| is_integral(v)) && is_integral(b);
        Ok(Self {
            a,
            b,
            origin,
            integral,
        })
    }

    pub fn lhs(&self, x: &[bool]) -> f64 {
        self.a
            .iter()
            .zip(x)
            .filter(|(_, &xi)| xi)
            .map(|(a, _)| a)
            .sum()
    }

    pub fn is_satisfied(&self, x: &[bool]) -> bool {
        if self.integral {
            let lhs: i128 = self
                .a
                .iter()
                .zip(x)
                .filter(|(_, &xi)| xi)
                .map(|(&a, _)| a as i128)
                .sum();
            lhs <= self.b as i128
        } else {
            self.lhs(x) <= self.b + FEASIBILITY_TOL
        }
    }
}

/// `xᵀQx + qᵀx ≤ b` over the binary slots, with `Q` stored symmetric.
#[derive(Debug, Clone)]
pub struct QuadraticConstraint {
    n: usize,
    /// Row-major `n × n`, symmetric.
    pub q_mat: Vec<f64>,
    pub q: Vec<f64>,
    pub b: f64,
    // On binary inputs xᵀQx + qᵀx = Σ diag_i x_i + Σ_{i<j} pair_ij x_i x_j.
    diag: Vec<f64>,
    pair: Vec<f64>,
    integral: bool,
}

impl QuadraticConstraint {
    /// `q_mat` is row-major `n × n`; a non-symmetric input is replaced by `(Q + Qᵀ)/2`.
    pub fn new(n: usize, q_mat: Vec<f64>, q: Vec<f64>, b: f64) -> Result<Self> {
        check_dim("quadratic constraint matrix", n * n, q_mat.len())?;
        check_dim("quadratic constraint vector", n, q.len())?;
        if q_mat
            .iter()
            .chain(&q)
            .chain(std::iter::once(&b))
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidDomain(
                "non-finite quadratic constraint coefficient".into(),
            ));
        }
        let mut sym = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                sym[i * n + j] = 0.5 * (q_mat[i * n + j] + q_mat[j * n + i]);
            }
        }
        let diag: Vec<f64> = (0..n).map(|i| sym[i * n + i] + q[i]).collect();
        let mut pair = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                pair[i * n + j] = 2.0 * sym[i * n + j];
            }
        }
        let integral = diag.iter().all(|&v| is_integral(v))
            && pair.iter().all(|&v| is_integral(v))
            && is_integral(b);
        Ok(Self {
            n,
            q_mat: sym,
            q,
            b,
            diag,
            pair,
            integral,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Coefficient of `x_i` in the binary expansion (`Q_ii + q_i`).
    pub fn diag_coeff(&self, i: usize) -> f64 {
        self.diag[i]
    }

    /// Coefficient of `x_i x_j` (i < j) in the binary expansion (`2 Q_ij`).
    pub fn pair_coeff(&self, i: usize, j: usize) -> f64 {
        self.pair[i * self.n + j]
    }

    pub fn lhs(&self, x: &[bool]) -> f64 {
        let n = self.n;
        let mut s = 0.0;
        for i in (0..n).filter(|&i| x[i]) {
            s += self.diag[i];
            for j in ((i + 1)..n).filter(|&j| x[j]) {
                s += self.pair[i * n + j];
            }
        }
        s
    }

    pub fn is_satisfied(&self, x: &[bool]) -> bool {
        if self.integral {
            let n = self.n;
            let mut s: i128 = 0;
            for i in (0..n).filter(|&i| x[i]) {
                s += self.diag[i] as i128;
                for j in ((i + 1)..n).filter(|&j| x[j]) {
                    s += self.pair[i * n + j] as i128;
                }
            }
            s <= self.b as i128
        } else {
            self.lhs(x) <= self.b + FEASIBILITY_TOL
        }
    }
}

/// Known constraints over the binary part of the domain.
#[derive(Debug, Clone, Default)]
pub struct ConstraintSet {
    n: usize,
    pub linear: Vec<LinearConstraint>,
    pub quadratic: Vec<QuadraticConstraint>,
}

impl ConstraintSet {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            linear: Vec::new(),
            quadratic: Vec::new(),
        }
    }

    /// `Σ x_i ≤ k` over all `n` slots.
    pub fn cardinality(n: usize, k: usize) -> Self {
        let mut cs = Self::new(n);
        cs.push_linear(vec![1.0; n], k as f64, Origin::User)
            .expect("cardinality row has matching dimension");
        cs
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.linear.is_empty() && self.quadratic.is_empty()
    }

    pub fn push_linear(&mut self, a: Vec<f64>, b: f64, origin: Origin) -> Result<()> {
        check_dim("linear constraint", self.n, a.len())?;
        self.linear.push(LinearConstraint::new(a, b, origin)?);
        Ok(())
    }

    pub fn push_quadratic(&mut self, q_mat: Vec<f64>, q: Vec<f64>, b: f64) -> Result<()> {
        self.quadratic
            .push(QuadraticConstraint::new(self.n, q_mat, q, b)?);
        Ok(())
    }

    pub fn is_satisfied(&self, x: &[bool]) -> bool {
        self.linear.iter().all(|c| c.is_satisfied(x))
            && self.quadratic.iter().all(|c| c.is_satisfied(x))
    }

    /// Only the constraints generated by variable encodings.
    pub fn structural(&self) -> Self {
        Self {
            n: self.n,
            linear: self
                .linear
                .iter()
                .filter(|c| c.origin == Origin::Structural)
                .cloned()
                .collect(),
            quadratic: Vec::new(),
        }
    }

    pub fn check(&self, x: &[bool]) -> Result<bool> {
        check_dim("discrete point", self.n, x.len())?;
        Ok(self.is_satisfied(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integral_linear_is_exact() {
        let c = LinearConstraint::new(vec![1.0, 1.0, 1.0], 2.0, Origin::User).unwrap();
        assert!(c.integral);
        assert!(c.is_satisfied(&[true, true, false]));
        assert!(!c.is_satisfied(&[true, true, true]));
    }

    #[test]
    fn fractional_linear_uses_tolerance() {
        let c = LinearConstraint::new(vec![0.1, 0.2], 0.3, Origin::User).unwrap();
        assert!(!c.integral);
        // 0.1 + 0.2 = 0.30000000000000004 > 0.3 without tolerance.
        assert!(c.is_satisfied(&[true, true]));
    }

    #[test]
    fn quadratic_is_symmetrized() {
        // Q = [[0, 2], [0, 0]] -> sym [[0,1],[1,0]]; xᵀQx = 2 x0 x1.
        let c = QuadraticConstraint::new(2, vec![0.0, 2.0, 0.0, 0.0], vec![0.0, 0.0], 1.0).unwrap();
        assert_eq!(c.q_mat, vec![0.0, 1.0, 1.0, 0.0]);
        assert!(c.is_satisfied(&[true, false]));
        assert!(!c.is_satisfied(&[true, true]));
        assert_eq!(c.lhs(&[true, true]), 2.0);
    }

    #[test]
    fn dimension_checked() {
        let mut cs = ConstraintSet::new(3);
        assert!(matches!(
            cs.push_linear(vec![1.0; 2], 1.0, Origin::User),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(cs.check(&[true; 4]).is_err());
    }
}
