//! Naive dense reference implementations used for validation.
//!
//! Everything here works on the full N×N correlation matrix with no
//! Kronecker shortcuts, so results can be compared against the structured
//! paths. The scalar correlation formulas are deliberately re-implemented
//! rather than imported: the only thing these routines share with the fast
//! code is the generic simplex optimizer.
//!
//! Nugget convention: the structured path factors the full matrix as
//! `(R_X + g·I) ⊗ (R_t + g·I)`, so the dense entry for rows a = (i, t_a),
//! b = (k, t_b) is `(r_x(i,k) + g·1[i=k]) · (r_t(t_a - t_b) + g·1[t_a = t_b])`.
//!
//! Size caps keep accidental O(N³) blowups out of test pipelines.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::basis::BasisSpec;
use crate::corr::CorrParams;
use crate::dataset::FunctionalDataset;
use crate::design::{Design, VarKind};
use crate::error::{Error, Result};
use crate::kriging::FitOpts;
use crate::util::linalg::chol_logdet;
use crate::util::optim::nelder_mead_box;
use crate::util::stats::z_two_sided;

/// Largest stacked size accepted by the dense fit and predictor.
pub const DENSE_FIT_CAP: usize = 512;

/// Largest n·m accepted by the joint-Gaussian conditioning.
pub const DENSE_CONDITIONAL_CAP: usize = 256;

fn x_corr(design: &Design, params: &CorrParams, i: usize, k: usize) -> f64 {
    let (a, b) = (design.row(i), design.row(k));
    let mut r = 1.0;
    for (j, kind) in design.kinds().iter().enumerate() {
        r *= match kind {
            VarKind::Continuous { .. } => {
                let u = (a[j] - b[j]).abs() / kind.scale();
                (-params.alphas[j] * u.powf(params.d.value())).exp()
            }
            VarKind::Categorical { .. } => {
                if a[j] == b[j] {
                    1.0
                } else {
                    (-params.alphas[j]).exp()
                }
            }
        };
    }
    r
}

fn x_corr_point(design: &Design, params: &CorrParams, x: &[f64], k: usize) -> f64 {
    let b = design.row(k);
    let mut r = 1.0;
    for (j, kind) in design.kinds().iter().enumerate() {
        r *= match kind {
            VarKind::Continuous { .. } => {
                let u = (x[j] - b[j]).abs() / kind.scale();
                (-params.alphas[j] * u.powf(params.d.value())).exp()
            }
            VarKind::Categorical { .. } => {
                if x[j] == b[j] {
                    1.0
                } else {
                    (-params.alphas[j]).exp()
                }
            }
        };
    }
    r
}

fn t_corr(dt: f64, params: &CorrParams) -> f64 {
    (-params.beta * dt.abs().powf(params.d.value())).exp()
}

/// The full N×N kriging system at fixed parameters.
#[derive(Debug, Clone)]
pub struct DenseSystem {
    /// (run index, abscissa) of each stacked observation.
    pub points: Vec<(usize, f64)>,
    pub design: Design,
    pub basis: BasisSpec,
    pub params: CorrParams,
    pub mu: DVector<f64>,
    pub sigma2: f64,
    v: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    weighted_resid: DVector<f64>,
    normal_chol: Cholesky<f64, Dyn>,
    logdet: f64,
}

impl DenseSystem {
    /// Assembles and factors the full system; errors above [`DENSE_FIT_CAP`].
    pub fn build(
        dataset: &FunctionalDataset,
        basis: &BasisSpec,
        params: &CorrParams,
    ) -> Result<DenseSystem> {
        DenseSystem::build_with_cap(dataset, basis, params, DENSE_FIT_CAP)
    }

    /// Same as [`DenseSystem::build`] with an explicit size cap; the
    /// benchmark raises it to time larger dense systems.
    pub fn build_with_cap(
        dataset: &FunctionalDataset,
        basis: &BasisSpec,
        params: &CorrParams,
        cap: usize,
    ) -> Result<DenseSystem> {
        let points: Vec<(usize, f64)> = dataset
            .runs
            .iter()
            .enumerate()
            .flat_map(|(i, run)| run.t.iter().map(move |&t| (i, t)))
            .collect();
        let n_tot = points.len();
        if n_tot > cap {
            return Err(Error::SizeCapExceeded {
                size: n_tot,
                cap,
            });
        }
        let design = &dataset.design;
        let g = params.nugget;
        let r = DMatrix::from_fn(n_tot, n_tot, |a, b| {
            let (ia, ta) = points[a];
            let (ib, tb) = points[b];
            let rx = x_corr(design, params, ia, ib) + if ia == ib { g } else { 0.0 };
            let rt = t_corr(ta - tb, params) + if ta == tb { g } else { 0.0 };
            rx * rt
        });
        let chol = Cholesky::new(r).ok_or_else(|| {
            Error::SingularMatrix(format!("dense R ({n_tot}×{n_tot}) failed Cholesky"))
        })?;
        let logdet = chol_logdet(&chol);
        let mut v = DMatrix::zeros(n_tot, basis.dim());
        for (row, &(i, t)) in points.iter().enumerate() {
            v.set_row(row, &basis.eval(design.row(i), t).transpose());
        }
        let y: DVector<f64> = DVector::from_iterator(
            n_tot,
            dataset.runs.iter().flat_map(|r| r.y.iter().copied()),
        );
        let rinv_v = chol.solve(&v);
        let normal = v.transpose() * &rinv_v;
        let normal_chol = Cholesky::new(normal).ok_or(Error::RankDeficientBasis)?;
        let mu = normal_chol.solve(&(rinv_v.transpose() * &y));
        let resid = &y - &v * &mu;
        let weighted_resid = chol.solve(&resid);
        let sigma2 = (resid.dot(&weighted_resid) / n_tot as f64).max(0.0);
        Ok(DenseSystem {
            points,
            design: design.clone(),
            basis: basis.clone(),
            params: params.clone(),
            mu,
            sigma2,
            v,
            chol,
            weighted_resid,
            normal_chol,
            logdet,
        })
    }

    /// The dense negative log-likelihood N·log σ̂² + log|R|.
    pub fn objective(&self) -> f64 {
        self.points.len() as f64 * self.sigma2.max(1e-300).ln() + self.logdet
    }

    fn cross(&self, x: &[f64], t: f64) -> DVector<f64> {
        DVector::from_fn(self.points.len(), |a, _| {
            let (ia, ta) = self.points[a];
            x_corr_point(&self.design, &self.params, x, ia) * t_corr(t - ta, &self.params)
        })
    }

    /// Literal evaluation of the universal kriging predictor.
    pub fn predict(&self, x: &[f64], t: f64) -> f64 {
        let r = self.cross(x, t);
        self.basis.eval(x, t).dot(&self.mu) + r.dot(&self.weighted_resid)
    }

    /// Literal evaluation of the plug-in confidence interval.
    pub fn predict_ci(&self, x: &[f64], t: f64, kappa: f64) -> (f64, f64) {
        let r = self.cross(x, t);
        let rinv_r = self.chol.solve(&r);
        let h = self.basis.eval(x, t) - self.v.transpose() * &rinv_r;
        let bracket =
            (1.0 - r.dot(&rinv_r) + h.dot(&self.normal_chol.solve(&h))).max(0.0);
        let half = z_two_sided(kappa) * self.sigma2.sqrt() * bracket.sqrt();
        let value = self.predict(x, t);
        (value - half, value + half)
    }
}

/// Dense objective at given parameters, for optimizer-free comparisons.
pub fn dense_objective(
    dataset: &FunctionalDataset,
    basis: &BasisSpec,
    params: &CorrParams,
) -> Result<f64> {
    Ok(DenseSystem::build(dataset, basis, params)?.objective())
}

/// Direct minimization of the dense negative log-likelihood.
pub fn dense_fit(
    dataset: &FunctionalDataset,
    basis: &BasisSpec,
    init: &CorrParams,
    opts: &FitOpts,
) -> Result<DenseSystem> {
    init.validate()?;
    let p = dataset.design.n_vars();
    let dim = p + 1;
    let clamp = |v: f64| v.max(opts.log_rate_lo).min(opts.log_rate_hi);
    let base: Vec<f64> = init
        .alphas
        .iter()
        .chain(std::iter::once(&init.beta))
        .map(|r| clamp(r.max(f64::MIN_POSITIVE).ln()))
        .collect();
    // Fail fast on oversized problems before entering the optimizer.
    DenseSystem::build(dataset, basis, init)?;

    let objective = |logs: &[f64]| -> f64 {
        let params = CorrParams {
            alphas: logs[..p].iter().map(|l| l.exp()).collect(),
            beta: logs[p].exp(),
            d: init.d,
            nugget: init.nugget,
        };
        dense_objective(dataset, basis, &params).unwrap_or(f64::INFINITY)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts = vec![base.clone()];
    for _ in 0..opts.n_restarts {
        starts.push(
            base.iter()
                .map(|b| clamp(b + rng.random_range(-1.0..1.0)))
                .collect(),
        );
    }
    let (lo, hi) = (
        vec![opts.log_rate_lo; dim],
        vec![opts.log_rate_hi; dim],
    );
    let mut best: Option<(Vec<f64>, f64)> = None;
    for start in &starts {
        if let Some(out) = nelder_mead_box(objective, start, &lo, &hi, &opts.nm) {
            if best.as_ref().is_none_or(|(_, b)| out.value < *b) {
                best = Some((out.x, out.value));
            }
        }
    }
    let (logs, _) =
        best.ok_or_else(|| Error::OptimFailed("all dense starts failed".into()))?;
    let params = CorrParams {
        alphas: logs[..p].iter().map(|l| l.exp()).collect(),
        beta: logs[p].exp(),
        d: init.d,
        nugget: init.nugget,
    };
    DenseSystem::build(dataset, basis, &params)
}

/// Exact conditional moments of the missing coordinates given all observed
/// data under the joint Gaussian N(Vμ, σ²·(R_X+gI)⊗(R_t+gI)).
///
/// `observed[i]` lists run i's observed union-grid indices and `y_obs[i]`
/// the corresponding values. Returns the missing coordinates as
/// (run, grid index) pairs in run-major order with their conditional mean
/// and covariance.
pub fn dense_conditional_moments(
    design: &Design,
    grid: &[f64],
    observed: &[Vec<usize>],
    y_obs: &[Vec<f64>],
    basis: &BasisSpec,
    mu: &DVector<f64>,
    sigma2: f64,
    params: &CorrParams,
) -> Result<(Vec<(usize, usize)>, DVector<f64>, DMatrix<f64>)> {
    let (n, m) = (design.n_runs(), grid.len());
    if n * m > DENSE_CONDITIONAL_CAP {
        return Err(Error::SizeCapExceeded {
            size: n * m,
            cap: DENSE_CONDITIONAL_CAP,
        });
    }
    let g = params.nugget;
    let cov = DMatrix::from_fn(n * m, n * m, |a, b| {
        let (ia, ja) = (a / m, a % m);
        let (ib, jb) = (b / m, b % m);
        let rx = x_corr(design, params, ia, ib) + if ia == ib { g } else { 0.0 };
        let rt = t_corr(grid[ja] - grid[jb], params) + if ja == jb { g } else { 0.0 };
        sigma2 * rx * rt
    });
    let mean = DVector::from_fn(n * m, |a, _| {
        basis.eval(design.row(a / m), grid[a % m]).dot(mu)
    });

    let mut obs_idx = Vec::new();
    let mut obs_val = Vec::new();
    let mut miss = Vec::new();
    for i in 0..n {
        let set: std::collections::BTreeSet<usize> = observed[i].iter().copied().collect();
        for (pos, &j) in observed[i].iter().enumerate() {
            obs_idx.push(i * m + j);
            obs_val.push(y_obs[i][pos]);
        }
        for j in 0..m {
            if !set.contains(&j) {
                miss.push((i, j));
            }
        }
    }
    if miss.is_empty() {
        return Ok((miss, DVector::zeros(0), DMatrix::zeros(0, 0)));
    }
    let miss_idx: Vec<usize> = miss.iter().map(|&(i, j)| i * m + j).collect();
    let mean_m = DVector::from_fn(miss.len(), |k, _| mean[miss_idx[k]]);
    let cov_mm = DMatrix::from_fn(miss.len(), miss.len(), |r, c| {
        cov[(miss_idx[r], miss_idx[c])]
    });
    if obs_idx.is_empty() {
        return Ok((miss, mean_m, cov_mm));
    }
    let cov_mo = DMatrix::from_fn(miss.len(), obs_idx.len(), |r, c| {
        cov[(miss_idx[r], obs_idx[c])]
    });
    let cov_oo =
        DMatrix::from_fn(obs_idx.len(), obs_idx.len(), |r, c| cov[(obs_idx[r], obs_idx[c])]);
    let chol = Cholesky::new(cov_oo).ok_or_else(|| {
        Error::SingularMatrix("observed covariance block failed Cholesky".into())
    })?;
    let dev = DVector::from_fn(obs_idx.len(), |k, _| obs_val[k] - mean[obs_idx[k]]);
    let cond_mean = &mean_m + &cov_mo * chol.solve(&dev);
    let cond_cov = &cov_mm - &cov_mo * chol.solve(&cov_mo.transpose());
    Ok((miss, cond_mean, cond_cov))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corr::PowerExponent;
    use crate::dataset::Profile;
    use crate::kriging;
    use approx::assert_abs_diff_eq;

    fn small_regular(seed: u64, n: usize, m: usize) -> (FunctionalDataset, BasisSpec) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let design = Design::unit_continuous(
            (0..n)
                .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
                .collect(),
        )
        .unwrap();
        let grid: Vec<f64> = (0..m).map(|i| i as f64 * 0.5).collect();
        let runs = (0..n)
            .map(|i| {
                Profile::new(
                    grid.clone(),
                    grid.iter()
                        .map(|t| (t * 0.7 + i as f64).sin() + rng.random::<f64>() * 0.3)
                        .collect(),
                )
                .unwrap()
            })
            .collect();
        let ds = FunctionalDataset::new(design, runs).unwrap();
        (ds, BasisSpec::new(vec![1], vec![]).unwrap())
    }

    #[test]
    fn predictor_matches_kronecker_path() {
        let (ds, basis) = small_regular(40, 4, 5);
        let params =
            CorrParams::new(vec![0.9, 1.4], 0.6, PowerExponent::Exponential, 0.0).unwrap();
        let dense = DenseSystem::build(&ds, &basis, &params).unwrap();
        let fast = kriging::fit_with_params(
            &ds.design,
            ds.union_grid(),
            &ds.response_matrix().unwrap(),
            &basis,
            &params,
        )
        .unwrap();
        assert_abs_diff_eq!(dense.sigma2, fast.sigma2, epsilon = 1e-10);
        for k in 0..dense.mu.len() {
            assert_abs_diff_eq!(dense.mu[k], fast.mu[k], epsilon = 1e-9);
        }
        for &(x, t) in &[([0.31, 0.84], 0.73), ([0.05, 0.4], 1.9), ([0.93, 0.2], 0.0)] {
            assert_abs_diff_eq!(dense.predict(&x, t), fast.predict(&x, t), epsilon = 1e-8);
            let (dlo, dhi) = dense.predict_ci(&x, t, 0.05);
            let p = fast.predict_ci(&x, t, 0.05);
            assert_abs_diff_eq!(dlo, p.lo, epsilon = 1e-8);
            assert_abs_diff_eq!(dhi, p.hi, epsilon = 1e-8);
        }
    }

    #[test]
    fn objective_matches_kronecker_path() {
        let (ds, basis) = small_regular(41, 3, 4);
        for beta in [0.3, 1.1] {
            let params =
                CorrParams::new(vec![1.0, 0.5], beta, PowerExponent::Exponential, 0.0)
                    .unwrap();
            let dense = dense_objective(&ds, &basis, &params).unwrap();
            let fast = kriging::neg_profile_loglik(
                &params,
                &ds.design,
                ds.union_grid(),
                &ds.response_matrix().unwrap(),
                &basis,
            )
            .unwrap();
            assert_abs_diff_eq!(dense, fast, epsilon = 1e-6);
        }
    }

    #[test]
    fn dense_fit_agrees_with_structured_fit() {
        let (ds, basis) = small_regular(42, 5, 6);
        let init =
            CorrParams::new(vec![1.0, 1.0], 1.0, PowerExponent::Exponential, 0.0).unwrap();
        let opts = FitOpts {
            n_restarts: 2,
            ..Default::default()
        };
        let dense = dense_fit(&ds, &basis, &init, &opts).unwrap();
        let fast = kriging::fit_regular(&ds, &basis, &init, &opts).unwrap();
        for k in 0..2 {
            let rel = (dense.params.alphas[k] - fast.params.alphas[k]).abs()
                / fast.params.alphas[k].max(1e-6);
            assert!(rel < 1e-3, "alpha[{k}]: {:?} vs {:?}", dense.params, fast.params);
        }
        let rel = (dense.params.beta - fast.params.beta).abs() / fast.params.beta;
        assert!(rel < 1e-3, "beta: {} vs {}", dense.params.beta, fast.params.beta);
    }

    #[test]
    fn single_observation_degenerates() {
        let design = Design::unit_continuous(vec![vec![0.5]]).unwrap();
        let ds = FunctionalDataset::new(
            design,
            vec![Profile::new(vec![0.0], vec![3.25]).unwrap()],
        )
        .unwrap();
        let basis = BasisSpec::intercept();
        let init = CorrParams::new(vec![1.0], 1.0, PowerExponent::Exponential, 0.0).unwrap();
        let sys = dense_fit(&ds, &basis, &init, &FitOpts::with_restarts(0)).unwrap();
        assert_abs_diff_eq!(sys.mu[0], 3.25, epsilon = 1e-12);
        assert_abs_diff_eq!(sys.sigma2, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn fit_never_worse_than_init() {
        let (ds, basis) = small_regular(43, 4, 4);
        let init =
            CorrParams::new(vec![2.0, 0.3], 0.8, PowerExponent::Exponential, 0.0).unwrap();
        let at_init = dense_objective(&ds, &basis, &init).unwrap();
        let sys = dense_fit(&ds, &basis, &init, &FitOpts::with_restarts(1)).unwrap();
        assert!(sys.objective() <= at_init + 1e-9);
    }

    #[test]
    fn size_cap_enforced() {
        let design = Design::unit_continuous(vec![vec![0.5]]).unwrap();
        let m = DENSE_CONDITIONAL_CAP + 1;
        let grid: Vec<f64> = (0..m).map(|i| i as f64).collect();
        let params = CorrParams::new(vec![1.0], 1.0, PowerExponent::Exponential, 0.0).unwrap();
        let basis = BasisSpec::intercept();
        let mu = DVector::from_row_slice(&[0.0]);
        let out = dense_conditional_moments(
            &design,
            &grid,
            &[vec![0]],
            &[vec![1.0]],
            &basis,
            &mu,
            1.0,
            &params,
        );
        assert!(matches!(out, Err(Error::SizeCapExceeded { .. })));
    }

    #[test]
    fn conditional_moments_edge_cases() {
        let design = Design::unit_continuous(vec![vec![0.2], vec![0.8]]).unwrap();
        let grid = [0.0, 1.0];
        let params = CorrParams::new(vec![1.0], 0.5, PowerExponent::Exponential, 0.0).unwrap();
        let basis = BasisSpec::intercept();
        let mu = DVector::from_row_slice(&[1.5]);

        // Nothing missing: empty outputs.
        let (miss, mean, cov) = dense_conditional_moments(
            &design,
            &grid,
            &[vec![0, 1], vec![0, 1]],
            &[vec![1.0, 2.0], vec![3.0, 4.0]],
            &basis,
            &mu,
            2.0,
            &params,
        )
        .unwrap();
        assert!(miss.is_empty() && mean.len() == 0 && cov.nrows() == 0);

        // Everything missing: prior moments.
        let (miss, mean, cov) = dense_conditional_moments(
            &design,
            &grid,
            &[vec![], vec![]],
            &[vec![], vec![]],
            &basis,
            &mu,
            2.0,
            &params,
        )
        .unwrap();
        assert_eq!(miss.len(), 4);
        for k in 0..4 {
            assert_abs_diff_eq!(mean[k], 1.5, epsilon = 1e-12);
            assert_abs_diff_eq!(cov[(k, k)], 2.0, epsilon = 1e-12);
        }
    }
}
