//! Regression-mean basis: an intercept plus monomials in the functional
//! index and in the experimental variables.

use nalgebra::{DMatrix, DVector};

use crate::design::Design;
use crate::error::{Error, Result};

/// Mean-function specification.
///
/// Evaluation order is fixed: intercept, then the `t` powers in declaration
/// order, then the `x` monomials in declaration order. There are no
/// interaction terms between `x` and `t`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasisSpec {
    t_powers: Vec<u32>,
    x_terms: Vec<(usize, u32)>,
}

impl BasisSpec {
    pub fn new(t_powers: Vec<u32>, x_terms: Vec<(usize, u32)>) -> Result<Self> {
        let mut seen_t = t_powers.clone();
        seen_t.sort_unstable();
        seen_t.dedup();
        if seen_t.len() != t_powers.len() || t_powers.contains(&0) {
            return Err(Error::Data(
                "duplicate or zero t powers in basis (the intercept is implicit)".into(),
            ));
        }
        let mut seen_x = x_terms.clone();
        seen_x.sort_unstable();
        seen_x.dedup();
        if seen_x.len() != x_terms.len() || x_terms.iter().any(|(_, p)| *p == 0) {
            return Err(Error::Data(
                "duplicate or zero-power x terms in basis".into(),
            ));
        }
        Ok(BasisSpec { t_powers, x_terms })
    }

    /// Intercept-only mean.
    pub fn intercept() -> Self {
        BasisSpec {
            t_powers: vec![],
            x_terms: vec![],
        }
    }

    pub fn t_powers(&self) -> &[u32] {
        &self.t_powers
    }

    pub fn x_terms(&self) -> &[(usize, u32)] {
        &self.x_terms
    }

    /// Number of coefficients, intercept included.
    pub fn dim(&self) -> usize {
        1 + self.t_powers.len() + self.x_terms.len()
    }

    /// υ(x, t): the basis vector at one point.
    pub fn eval(&self, x: &[f64], t: f64) -> DVector<f64> {
        let mut v = DVector::zeros(self.dim());
        v[0] = 1.0;
        for (k, &p) in self.t_powers.iter().enumerate() {
            v[1 + k] = t.powi(p as i32);
        }
        let off = 1 + self.t_powers.len();
        for (k, &(j, p)) in self.x_terms.iter().enumerate() {
            v[off + k] = x[j].powi(p as i32);
        }
        v
    }

    /// The N×L model matrix over a design and grid, rows in run-major order
    /// (run index outer, grid index inner).
    pub fn model_matrix(&self, design: &Design, grid: &[f64]) -> DMatrix<f64> {
        let (n, m) = (design.n_runs(), grid.len());
        let mut v = DMatrix::zeros(n * m, self.dim());
        for i in 0..n {
            for (j, &t) in grid.iter().enumerate() {
                v.set_row(i * m + j, &self.eval(design.row(i), t).transpose());
            }
        }
        v
    }

    /// Largest variable index referenced, if any; used for validation.
    pub fn max_var_index(&self) -> Option<usize> {
        self.x_terms.iter().map(|(j, _)| *j).max()
    }
}

impl std::fmt::Display for BasisSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "1")?;
        for p in &self.t_powers {
            if *p == 1 {
                write!(f, " + t")?;
            } else {
                write!(f, " + t^{p}")?;
            }
        }
        for (j, p) in &self.x_terms {
            if *p == 1 {
                write!(f, " + x{}", j + 1)?;
            } else {
                write!(f, " + x{}^{p}", j + 1)?;
            }
        }
        Ok(())
    }
}
