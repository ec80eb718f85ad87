//! Correlation functions and structured correlation-matrix algebra.
//!
//! The separable product kernel over the experimental variables yields an
//! n×n matrix `R_X`; the functional index contributes an m×m matrix `R_t`.
//! On a regular grid the full N×N correlation matrix is `R_X ⊗ R_t`, so
//! inverses, determinants, and quadratic forms only ever touch the two small
//! factors. When the grid is equally spaced and the exponential kernel is in
//! use, `R_t` has a Markov structure: its inverse is tridiagonal and its
//! determinant has a closed form, both held here symbolically instead of as
//! dense storage.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::design::{Design, VarKind};
use crate::error::{Error, Result};
use crate::util::linalg::chol_logdet;

/// Relative spacing tolerance under which a grid counts as equally spaced.
pub const EQUAL_SPACING_RTOL: f64 = 1e-9;

/// Default diagonal inflation for correlation matrices.
pub const DEFAULT_NUGGET: f64 = 1e-8;

/// Power-exponential exponent: 1 gives the exponential kernel, 2 the
/// Gaussian kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerExponent {
    Exponential,
    Gaussian,
}

impl PowerExponent {
    pub fn value(self) -> f64 {
        match self {
            PowerExponent::Exponential => 1.0,
            PowerExponent::Gaussian => 2.0,
        }
    }

    pub fn from_flag(d: u8) -> Result<Self> {
        match d {
            1 => Ok(PowerExponent::Exponential),
            2 => Ok(PowerExponent::Gaussian),
            other => Err(Error::Config(format!(
                "correlation exponent must be 1 or 2, got {other}"
            ))),
        }
    }
}

/// Correlation parameters: one rate per experimental variable, one rate for
/// the functional index, the shared exponent, and the nugget.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrParams {
    pub alphas: Vec<f64>,
    pub beta: f64,
    pub d: PowerExponent,
    pub nugget: f64,
}

impl CorrParams {
    pub fn new(alphas: Vec<f64>, beta: f64, d: PowerExponent, nugget: f64) -> Result<Self> {
        let p = CorrParams {
            alphas,
            beta,
            d,
            nugget,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.alphas.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(Error::Data("correlation rates must be >= 0".into()));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::Data("functional-index rate must be >= 0".into()));
        }
        if !(self.nugget.is_finite() && self.nugget >= 0.0) {
            return Err(Error::Data("nugget must be >= 0".into()));
        }
        Ok(())
    }

    /// Unit-spacing correlation between adjacent grid points, exp(-beta).
    pub fn rho(&self) -> f64 {
        (-self.beta).exp()
    }
}

/// Correlation between two coordinates of one variable.
///
/// Continuous variables use the power-exponential kernel on the
/// range-rescaled distance; categorical variables use the exchangeable
/// isotropic form: 1 when the levels agree, exp(-alpha) otherwise.
pub fn corr_value(a: f64, b: f64, kind: &VarKind, alpha: f64, d: PowerExponent) -> f64 {
    debug_assert!(alpha >= 0.0);
    match kind {
        VarKind::Continuous { .. } => {
            let u = (a - b).abs() / kind.scale();
            (-alpha * u.powf(d.value())).exp()
        }
        VarKind::Categorical { .. } => {
            if a == b {
                1.0
            } else {
                (-alpha).exp()
            }
        }
    }
}

/// Product correlation between two settings over all variables.
pub fn corr_x_pair(design: &Design, params: &CorrParams, xa: &[f64], xb: &[f64]) -> f64 {
    design
        .kinds()
        .iter()
        .enumerate()
        .map(|(j, kind)| corr_value(xa[j], xb[j], kind, params.alphas[j], params.d))
        .product()
}

/// Cross-correlation vector between a setting `x` and every design row.
pub fn corr_x_cross(design: &Design, params: &CorrParams, x: &[f64]) -> DVector<f64> {
    DVector::from_fn(design.n_runs(), |i, _| {
        corr_x_pair(design, params, x, design.row(i))
    })
}

/// Correlation in the functional index at lag `dt`.
pub fn corr_t_value(dt: f64, beta: f64, d: PowerExponent) -> f64 {
    (-beta * dt.abs().powf(d.value())).exp()
}

/// The n×n design correlation matrix with its Cholesky factor.
#[derive(Debug, Clone)]
pub struct RxFactor {
    matrix: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl RxFactor {
    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn logdet(&self) -> f64 {
        chol_logdet(&self.chol)
    }

    pub fn solve_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(v)
    }

    pub fn solve_matrix(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(m)
    }

    /// Explicit inverse, needed for run-deletion downdates.
    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }
}

/// Builds `R_X` for a design: entry (i,j) is the product of per-variable
/// correlations, with the nugget added on the diagonal.
pub fn build_r_x(design: &Design, params: &CorrParams) -> Result<RxFactor> {
    params.validate()?;
    if params.alphas.len() != design.n_vars() {
        return Err(Error::DimensionMismatch {
            expected: design.n_vars(),
            got: params.alphas.len(),
        });
    }
    let n = design.n_runs();
    let mut r = DMatrix::from_element(n, n, 0.0);
    for i in 0..n {
        r[(i, i)] = 1.0 + params.nugget;
        for j in (i + 1)..n {
            let v = corr_x_pair(design, params, design.row(i), design.row(j));
            r[(i, j)] = v;
            r[(j, i)] = v;
        }
    }
    let chol = Cholesky::new(r.clone()).ok_or_else(|| {
        Error::SingularMatrix(format!(
            "R_X is not positive definite (n = {n}, nugget = {}); duplicated design rows?",
            params.nugget
        ))
    })?;
    Ok(RxFactor { matrix: r, chol })
}

#[derive(Debug, Clone)]
enum TRepr {
    /// Equally spaced exponential kernel without nugget: the inverse is the
    /// tridiagonal Markov stencil and the log-determinant is
    /// (m-1)·log(1-rho²).
    ClosedForm { rho: f64 },
    Dense { chol: Cholesky<f64, Dyn> },
}

/// The m×m functional-index correlation matrix in structured form.
#[derive(Debug, Clone)]
pub struct StructuredCorrT {
    grid: Vec<f64>,
    beta: f64,
    d: PowerExponent,
    nugget: f64,
    repr: TRepr,
}

impl StructuredCorrT {
    pub fn m(&self) -> usize {
        self.grid.len()
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// True when the tridiagonal-inverse representation is active.
    pub fn is_closed_form(&self) -> bool {
        matches!(self.repr, TRepr::ClosedForm { .. })
    }

    /// Adjacent-point correlation of the closed form, when active.
    pub fn rho(&self) -> Option<f64> {
        match self.repr {
            TRepr::ClosedForm { rho } => Some(rho),
            TRepr::Dense { .. } => None,
        }
    }

    pub fn logdet(&self) -> f64 {
        match &self.repr {
            TRepr::ClosedForm { rho } => {
                (self.m() as f64 - 1.0) * (1.0 - rho * rho).ln()
            }
            TRepr::Dense { chol } => chol_logdet(chol),
        }
    }

    /// Applies `R_t⁻¹` to a vector.
    pub fn solve_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.repr {
            TRepr::ClosedForm { rho } => tridiag_inv_apply(*rho, v),
            TRepr::Dense { chol } => chol.solve(v),
        }
    }

    /// Applies `R_t⁻¹` to every column of an m×k matrix.
    pub fn solve_matrix(&self, mat: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.repr {
            TRepr::ClosedForm { rho } => {
                let mut out = DMatrix::zeros(mat.nrows(), mat.ncols());
                for c in 0..mat.ncols() {
                    let col = DVector::from_column_slice(mat.column(c).as_slice());
                    out.set_column(c, &tridiag_inv_apply(*rho, &col));
                }
                out
            }
            TRepr::Dense { chol } => chol.solve(mat),
        }
    }

    /// Diagonal of `R_t⁻¹`.
    pub fn inv_diagonal(&self) -> DVector<f64> {
        match &self.repr {
            TRepr::ClosedForm { rho } => {
                let m = self.m();
                let denom = 1.0 - rho * rho;
                DVector::from_fn(m, |j, _| {
                    if m == 1 {
                        1.0
                    } else if j == 0 || j == m - 1 {
                        1.0 / denom
                    } else {
                        (1.0 + rho * rho) / denom
                    }
                })
            }
            TRepr::Dense { chol } => {
                let inv = chol.inverse();
                inv.diagonal()
            }
        }
    }

    /// Rebuilds the dense matrix (including the nugget).
    pub fn dense(&self) -> DMatrix<f64> {
        let m = self.m();
        DMatrix::from_fn(m, m, |i, j| {
            let v = corr_t_value(self.grid[i] - self.grid[j], self.beta, self.d);
            if i == j {
                v + self.nugget
            } else {
                v
            }
        })
    }

    /// Cross-correlation vector between an index point `t` and the grid.
    pub fn cross_vec(&self, t: f64) -> DVector<f64> {
        DVector::from_fn(self.m(), |j, _| {
            corr_t_value(t - self.grid[j], self.beta, self.d)
        })
    }
}

fn tridiag_inv_apply(rho: f64, v: &DVector<f64>) -> DVector<f64> {
    let m = v.len();
    if m == 1 {
        return v.clone();
    }
    let denom = 1.0 - rho * rho;
    DVector::from_fn(m, |j, _| {
        if j == 0 {
            (v[0] - rho * v[1]) / denom
        } else if j == m - 1 {
            (v[m - 1] - rho * v[m - 2]) / denom
        } else {
            ((1.0 + rho * rho) * v[j] - rho * (v[j - 1] + v[j + 1])) / denom
        }
    })
}

fn equal_spacing(grid: &[f64]) -> Option<f64> {
    if grid.len() < 2 {
        return Some(0.0);
    }
    let m = grid.len();
    let h = (grid[m - 1] - grid[0]) / (m as f64 - 1.0);
    if h <= 0.0 {
        return None;
    }
    let ok = grid
        .windows(2)
        .all(|w| ((w[1] - w[0]) - h).abs() / h < EQUAL_SPACING_RTOL);
    ok.then_some(h)
}

fn validate_grid_inputs(grid: &[f64], beta: f64, nugget: f64) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidGrid("empty grid".into()));
    }
    for w in grid.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::InvalidGrid(format!(
                "grid not strictly increasing at t = {}",
                w[1]
            )));
        }
    }
    if !(beta.is_finite() && beta >= 0.0) || !(nugget.is_finite() && nugget >= 0.0) {
        return Err(Error::Data("beta and nugget must be >= 0".into()));
    }
    Ok(())
}

/// Builds `R_t` on a strictly increasing grid.
///
/// The closed form activates only for the exponential kernel on an equally
/// spaced grid with zero nugget, with `rho = exp(-beta·h)` absorbing the
/// physical spacing `h`; every other case stores a dense Cholesky factor.
pub fn build_r_t(
    grid: &[f64],
    beta: f64,
    d: PowerExponent,
    nugget: f64,
) -> Result<StructuredCorrT> {
    validate_grid_inputs(grid, beta, nugget)?;

    if d == PowerExponent::Exponential && nugget == 0.0 {
        if let Some(h) = equal_spacing(grid) {
            let rho = if grid.len() == 1 { 0.0 } else { (-beta * h).exp() };
            if rho < 1.0 {
                return Ok(StructuredCorrT {
                    grid: grid.to_vec(),
                    beta,
                    d,
                    nugget,
                    repr: TRepr::ClosedForm { rho },
                });
            }
            // rho == 1 (beta == 0) falls through to the dense path, which
            // reports the singularity.
        }
    }

    build_r_t_dense(grid, beta, d, nugget)
}

/// Builds `R_t` in the dense representation unconditionally; used to
/// benchmark the closed form against the plain factorization.
pub fn build_r_t_dense(
    grid: &[f64],
    beta: f64,
    d: PowerExponent,
    nugget: f64,
) -> Result<StructuredCorrT> {
    validate_grid_inputs(grid, beta, nugget)?;
    let m = grid.len();
    let mut r = DMatrix::from_fn(m, m, |i, j| corr_t_value(grid[i] - grid[j], beta, d));
    for i in 0..m {
        r[(i, i)] += nugget;
    }
    let chol = Cholesky::new(r).ok_or_else(|| {
        Error::SingularMatrix(format!(
            "R_t is not positive definite (m = {m}, beta = {beta}, nugget = {nugget})"
        ))
    })?;
    Ok(StructuredCorrT {
        grid: grid.to_vec(),
        beta,
        d,
        nugget,
        repr: TRepr::Dense { chol },
    })
}

/// Applies `(R_X ⊗ R_t)⁻¹ = R_X⁻¹ ⊗ R_t⁻¹` to a run-major stacked vector of
/// length n·m without materializing the big matrix: the vector is reshaped
/// to n×m and hit with the two small solves.
pub fn kron_apply_inverse(
    rx: &RxFactor,
    rt: &StructuredCorrT,
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    let (n, m) = (rx.n(), rt.m());
    if v.len() != n * m {
        return Err(Error::DimensionMismatch {
            expected: n * m,
            got: v.len(),
        });
    }
    let c = DMatrix::from_fn(n, m, |i, j| v[i * m + j]);
    let a = rx.solve_matrix(&c);
    let b = rt.solve_matrix(&a.transpose()).transpose();
    Ok(DVector::from_fn(n * m, |k, _| b[(k / m, k % m)]))
}

/// log |R_X ⊗ R_t| = m·log|R_X| + n·log|R_t|.
pub fn logdet_kron(rx: &RxFactor, rt: &StructuredCorrT) -> f64 {
    rt.m() as f64 * rx.logdet() + rx.n() as f64 * rt.logdet()
}

/// Inverse of `R_X` with run `i` deleted, from the full inverse.
///
/// Partitioning the inverse with row/column `i` moved last as
/// `[[A, a], [a', b]]`, the deleted-run inverse is `A - a a'/b`.
pub fn downdate_rx_inverse(rx_inv: &DMatrix<f64>, i: usize) -> Result<DMatrix<f64>> {
    let n = rx_inv.nrows();
    assert!(i < n, "run index out of range");
    let b = rx_inv[(i, i)];
    if b.abs() < 1e-12 {
        return Err(Error::NumericalBreakdown(format!(
            "pivot {b:.3e} too small in inverse downdate of run {i}"
        )));
    }
    let keep: Vec<usize> = (0..n).filter(|&k| k != i).collect();
    let out = DMatrix::from_fn(n - 1, n - 1, |r, c| {
        let (kr, kc) = (keep[r], keep[c]);
        rx_inv[(kr, kc)] - rx_inv[(kr, i)] * rx_inv[(kc, i)] / b
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(alphas: Vec<f64>, beta: f64, d: PowerExponent, nugget: f64) -> CorrParams {
        CorrParams::new(alphas, beta, d, nugget).unwrap()
    }

    #[test]
    fn corr_value_examples() {
        let cont = VarKind::Continuous { lo: 0.0, hi: 1.0 };
        assert_abs_diff_eq!(
            corr_value(0.4, 0.4, &cont, 3.0, PowerExponent::Gaussian),
            1.0
        );
        assert_abs_diff_eq!(
            corr_value(0.0, 1.0, &cont, 1.0, PowerExponent::Exponential),
            (-1.0f64).exp(),
            epsilon = 1e-12
        );
        let cat = VarKind::Categorical { levels: 3 };
        assert_abs_diff_eq!(
            corr_value(2.0, 1.0, &cat, 0.5, PowerExponent::Exponential),
            (-0.5f64).exp(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn r_x_single_run() {
        let d = Design::unit_continuous(vec![vec![0.5]]).unwrap();
        let p = params(vec![1.0], 1.0, PowerExponent::Exponential, 0.25);
        let rx = build_r_x(&d, &p).unwrap();
        assert_eq!(rx.n(), 1);
        assert_abs_diff_eq!(rx.matrix()[(0, 0)], 1.25, epsilon = 1e-15);
    }

    #[test]
    fn r_x_duplicate_rows_singular_without_nugget() {
        let d = Design::unit_continuous(vec![vec![0.3, 0.7], vec![0.3, 0.7]]).unwrap();
        let p = params(vec![1.0, 1.0], 1.0, PowerExponent::Exponential, 0.0);
        assert!(matches!(build_r_x(&d, &p), Err(Error::SingularMatrix(_))));
    }

    #[test]
    fn r_x_matches_per_variable_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rows: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..2).map(|_| rng.random::<f64>()).collect())
            .collect();
        let d = Design::unit_continuous(rows.clone()).unwrap();
        let p = params(vec![0.8, 1.7], 1.0, PowerExponent::Gaussian, 0.0);
        let rx = build_r_x(&d, &p).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                // Independent recomputation: explicit Gaussian kernels.
                let want: f64 = (0..2)
                    .map(|k| (-p.alphas[k] * (rows[i][k] - rows[j][k]).powi(2)).exp())
                    .product();
                assert_abs_diff_eq!(rx.matrix()[(i, j)], want, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn r_t_scalar_case() {
        let rt = build_r_t(&[2.5], 1.0, PowerExponent::Exponential, 0.0).unwrap();
        assert!(rt.is_closed_form());
        assert_abs_diff_eq!(rt.logdet(), 0.0);
        let v = DVector::from_row_slice(&[3.0]);
        assert_abs_diff_eq!(rt.solve_vec(&v)[0], 3.0);
    }

    #[test]
    fn r_t_two_point_determinant() {
        // rho = 0.5 gives det(R_t) = 1 - 0.25 = 0.75.
        let beta = 2.0f64.ln();
        let rt = build_r_t(&[0.0, 1.0], beta, PowerExponent::Exponential, 0.0).unwrap();
        assert_abs_diff_eq!(rt.logdet(), 0.75f64.ln(), epsilon = 1e-14);
        let dense: DMatrix<f64> = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        assert_abs_diff_eq!(rt.logdet(), dense.determinant().ln(), epsilon = 1e-14);
    }

    #[test]
    fn tridiag_inverse_times_dense_is_identity() {
        let beta = 2.0f64.ln();
        let grid: Vec<f64> = (0..5).map(|i| i as f64).collect();
        let rt = build_r_t(&grid, beta, PowerExponent::Exponential, 0.0).unwrap();
        assert!(rt.is_closed_form());
        let dense = rt.dense();
        for c in 0..5 {
            let col = DVector::from_column_slice(dense.column(c).as_slice());
            let e = rt.solve_vec(&col);
            for r in 0..5 {
                let want = if r == c { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(e[r], want, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn closed_form_matches_dense_for_sample_sizes() {
        for &m in &[2usize, 3, 8, 16, 33] {
            for &rho in &[0.1f64, 0.5, 0.9] {
                let beta = -rho.ln();
                let grid: Vec<f64> = (0..m).map(|i| i as f64).collect();
                let rt = build_r_t(&grid, beta, PowerExponent::Exponential, 0.0).unwrap();
                let dense = rt.dense();
                let chol = Cholesky::new(dense.clone()).unwrap();
                assert_abs_diff_eq!(rt.logdet(), chol_logdet(&chol), epsilon = 1e-8);
                let v = DVector::from_fn(m, |i, _| (i as f64 * 0.77).sin());
                let got = rt.solve_vec(&v);
                let want = chol.solve(&v);
                for i in 0..m {
                    assert_abs_diff_eq!(got[i], want[i], epsilon = 1e-8);
                }
                let diag = rt.inv_diagonal();
                let inv = chol.inverse();
                for i in 0..m {
                    assert_abs_diff_eq!(diag[i], inv[(i, i)], epsilon = 1e-8);
                }
            }
        }
    }

    #[test]
    fn uneven_grid_uses_dense_path() {
        let rt = build_r_t(&[0.0, 1.0, 2.5], 0.4, PowerExponent::Exponential, 0.0).unwrap();
        assert!(!rt.is_closed_form());
        let rt2 = build_r_t(&[0.0, 1.0, 2.0], 0.4, PowerExponent::Gaussian, 0.0).unwrap();
        assert!(!rt2.is_closed_form());
        let rt3 = build_r_t(&[0.0, 1.0, 2.0], 0.4, PowerExponent::Exponential, 1e-6).unwrap();
        assert!(!rt3.is_closed_form());
    }

    #[test]
    fn invalid_grid_rejected() {
        assert!(matches!(
            build_r_t(&[0.0, 0.0], 1.0, PowerExponent::Exponential, 0.0),
            Err(Error::InvalidGrid(_))
        ));
    }

    fn random_spd_pair(
        n: usize,
        m: usize,
        seed: u64,
    ) -> (Design, CorrParams, RxFactor, StructuredCorrT) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..2).map(|_| rng.random::<f64>()).collect())
            .collect();
        let design = Design::unit_continuous(rows).unwrap();
        let p = params(
            vec![
                0.3 + rng.random::<f64>(),
                0.3 + rng.random::<f64>(),
            ],
            0.2 + rng.random::<f64>(),
            PowerExponent::Exponential,
            0.0,
        );
        let grid: Vec<f64> = (0..m).map(|i| i as f64 * 0.5).collect();
        let rx = build_r_x(&design, &p).unwrap();
        let rt = build_r_t(&grid, p.beta, p.d, 0.0).unwrap();
        (design, p, rx, rt)
    }

    fn dense_kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        let (n, m) = (a.nrows(), b.nrows());
        DMatrix::from_fn(n * m, n * m, |r, c| a[(r / m, c / m)] * b[(r % m, c % m)])
    }

    #[test]
    fn kron_apply_identity() {
        let d = Design::unit_continuous(vec![vec![0.0], vec![0.5], vec![1.0]]).unwrap();
        // Huge rates make both factors essentially the identity.
        let p = params(vec![1e8], 1e8, PowerExponent::Exponential, 0.0);
        let rx = build_r_x(&d, &p).unwrap();
        let rt = build_r_t(&[0.0, 1.0], p.beta, p.d, 0.0).unwrap();
        let v = DVector::from_fn(6, |i, _| i as f64 + 1.0);
        let out = kron_apply_inverse(&rx, &rt, &v).unwrap();
        for i in 0..6 {
            assert_abs_diff_eq!(out[i], v[i], epsilon = 1e-9);
        }
    }

    #[test]
    fn kron_apply_matches_dense_inverse() {
        let (_, _, rx, rt) = random_spd_pair(3, 4, 5);
        let big = dense_kron(rx.matrix(), &rt.dense());
        let v = DVector::from_fn(12, |i, _| ((i * 7 % 5) as f64) - 2.0);
        let want = Cholesky::new(big).unwrap().solve(&v);
        let got = kron_apply_inverse(&rx, &rt, &v).unwrap();
        for i in 0..12 {
            assert_abs_diff_eq!(got[i], want[i], epsilon = 1e-9);
        }
    }

    #[test]
    fn kron_apply_round_trip() {
        let (_, _, rx, rt) = random_spd_pair(3, 4, 9);
        let big = dense_kron(rx.matrix(), &rt.dense());
        let mut e1 = DVector::zeros(12);
        e1[0] = 1.0;
        let forward = &big * &e1;
        let back = kron_apply_inverse(&rx, &rt, &forward).unwrap();
        for i in 0..12 {
            assert_abs_diff_eq!(back[i], e1[i], epsilon = 1e-9);
        }
    }

    #[test]
    fn kron_apply_rejects_bad_length() {
        let (_, _, rx, rt) = random_spd_pair(2, 3, 1);
        let v = DVector::zeros(5);
        assert!(matches!(
            kron_apply_inverse(&rx, &rt, &v),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn logdet_kron_identities() {
        let d = Design::unit_continuous(vec![vec![0.0], vec![1.0]]).unwrap();
        let p = params(vec![1e9], 1e9, PowerExponent::Exponential, 0.0);
        let rx = build_r_x(&d, &p).unwrap();
        let rt = build_r_t(&[0.0, 1.0, 2.0], p.beta, p.d, 0.0).unwrap();
        assert_abs_diff_eq!(logdet_kron(&rx, &rt), 0.0, epsilon = 1e-7);
    }

    #[test]
    fn logdet_kron_matches_dense() {
        let (_, _, rx, rt) = random_spd_pair(2, 3, 21);
        let big = dense_kron(rx.matrix(), &rt.dense());
        let want = Cholesky::new(big).unwrap();
        assert_abs_diff_eq!(
            logdet_kron(&rx, &rt),
            chol_logdet(&want),
            epsilon = 1e-9
        );
    }

    #[test]
    fn logdet_kron_closed_form_cross_check() {
        let (_, _, rx, _) = random_spd_pair(3, 4, 33);
        let rho: f64 = 0.5;
        let grid: Vec<f64> = (0..4).map(|i| i as f64).collect();
        let rt = build_r_t(&grid, -rho.ln(), PowerExponent::Exponential, 0.0).unwrap();
        let n = 3.0;
        let m = 4.0;
        let want = n * 3.0 * (1.0 - rho * rho).ln() + m * rx.logdet();
        assert_abs_diff_eq!(logdet_kron(&rx, &rt), want, epsilon = 1e-10);
    }

    #[test]
    fn downdate_identity() {
        let eye = DMatrix::<f64>::identity(4, 4);
        for i in 0..4 {
            let out = downdate_rx_inverse(&eye, i).unwrap();
            assert_eq!(out, DMatrix::identity(3, 3));
        }
    }

    #[test]
    fn downdate_matches_minor_inverse() {
        let (_, _, rx, _) = random_spd_pair(4, 2, 77);
        let inv = rx.inverse();
        for i in 0..4 {
            let got = downdate_rx_inverse(&inv, i).unwrap();
            let keep: Vec<usize> = (0..4).filter(|&k| k != i).collect();
            let minor = rx.matrix().select_rows(&keep).select_columns(&keep);
            let want = Cholesky::new(minor).unwrap().inverse();
            for r in 0..3 {
                for c in 0..3 {
                    assert_abs_diff_eq!(got[(r, c)], want[(r, c)], epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn downdate_every_run_of_larger_matrix() {
        let (_, _, rx, _) = random_spd_pair(6, 2, 101);
        let inv = rx.inverse();
        for i in 0..6 {
            let got = downdate_rx_inverse(&inv, i).unwrap();
            let keep: Vec<usize> = (0..6).filter(|&k| k != i).collect();
            let minor = rx.matrix().select_rows(&keep).select_columns(&keep);
            let prod = &got * &minor;
            for r in 0..5 {
                for c in 0..5 {
                    let want = if r == c { 1.0 } else { 0.0 };
                    assert_abs_diff_eq!(prod[(r, c)], want, epsilon = 1e-8);
                }
            }
        }
    }

    proptest! {
        // Separability: the product kernel factors exactly.
        #[test]
        fn product_kernel_is_separable(
            xa in proptest::collection::vec(0.0f64..1.0, 3),
            xb in proptest::collection::vec(0.0f64..1.0, 3),
            alphas in proptest::collection::vec(0.0f64..4.0, 3),
        ) {
            let d = Design::unit_continuous(vec![xa.clone(), xb.clone()]).unwrap();
            let p = CorrParams::new(alphas.clone(), 1.0, PowerExponent::Exponential, 0.0).unwrap();
            let joint = corr_x_pair(&d, &p, &xa, &xb);
            let product: f64 = (0..3)
                .map(|j| corr_value(xa[j], xb[j], d.kind(j), alphas[j], p.d))
                .product();
            prop_assert!((joint - product).abs() < 1e-15);
        }

        // R_X is symmetric with unit-plus-nugget diagonal and factors when
        // rows are distinct and a nugget is present.
        #[test]
        fn r_x_symmetric_unit_diagonal(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 2 + (seed % 4) as usize;
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
                .collect();
            let design = Design::unit_continuous(rows).unwrap();
            let p = CorrParams::new(
                vec![rng.random::<f64>() * 3.0, rng.random::<f64>() * 3.0],
                1.0,
                PowerExponent::Gaussian,
                1e-8,
            ).unwrap();
            let rx = build_r_x(&design, &p).unwrap();
            let mat = rx.matrix();
            for i in 0..n {
                prop_assert!((mat[(i, i)] - (1.0 + 1e-8)).abs() < 1e-15);
                for j in 0..n {
                    prop_assert!((mat[(i, j)] - mat[(j, i)]).abs() < 1e-15);
                    prop_assert!(mat[(i, j)] > 0.0 && mat[(i, j)] <= 1.0 + 1e-8);
                }
            }
        }
    }
}
