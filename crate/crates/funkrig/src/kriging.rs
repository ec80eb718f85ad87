//! Universal kriging on regular-grid functional data via the Kronecker
//! factorization, with plug-in confidence intervals and leave-one-out
//! prediction.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::basis::BasisSpec;
use crate::corr::{
    build_r_t, build_r_x, corr_x_cross, kron_apply_inverse, logdet_kron, CorrParams,
    RxFactor, StructuredCorrT,
};
use crate::dataset::FunctionalDataset;
use crate::design::Design;
use crate::error::{Error, Result};
use crate::util::optim::{nelder_mead_box, NelderMeadOpts};
use crate::util::stats::z_two_sided;

/// Floor applied to the profiled variance inside logarithms so degenerate
/// (exactly interpolcome) data keep the objective finite.
const SIGMA2_LOG_FLOOR: f64 = 1e-300;

/// Options for maximum-likelihood fitting of the correlation rates.
#[derive(Debug, Clone)]
pub struct FitOpts {
    /// Extra optimizer starts beyond the supplied initial value.
    pub n_restarts: usize,
    /// Seed for the restart perturbations (uniform ±1 in log-rate space).
    pub seed: u64,
    /// Box bounds on every log-rate.
    pub log_rate_lo: f64,
    pub log_rate_hi: f64,
    pub nm: NelderMeadOpts,
}

impl Default for FitOpts {
    fn default() -> Self {
        FitOpts {
            n_restarts: 5,
            seed: 0x5EED,
            log_rate_lo: -8.0,
            log_rate_hi: 8.0,
            nm: NelderMeadOpts::default(),
        }
    }
}

impl FitOpts {
    pub fn with_restarts(n: usize) -> Self {
        FitOpts {
            n_restarts: n,
            ..Default::default()
        }
    }
}

/// A fitted kriging model with the cached factorizations needed for O(n·m)
/// prediction.
#[derive(Debug, Clone)]
pub struct KrigingModel {
    pub basis: BasisSpec,
    pub mu: DVector<f64>,
    pub sigma2: f64,
    pub params: CorrParams,
    pub design: Design,
    pub grid: Vec<f64>,
    /// n×m response matrix (completed data when fitted through the EM path).
    pub y: DMatrix<f64>,
    rx: RxFactor,
    rt: StructuredCorrT,
    v: DMatrix<f64>,
    /// Cholesky of the GLS normal matrix V'(R⁻¹)V.
    normal_chol: Cholesky<f64, Dyn>,
    /// (R_X⁻¹ ⊗ R_t⁻¹)(y − Vμ̂), reshaped n×m.
    weighted_resid: DMatrix<f64>,
}

/// A prediction with its two-sided confidence interval.
#[derive(Debug, Clone, Copy)]
pub struct Prediction {
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
    /// Set when the query setting lies outside the declared design space.
    pub extrapolation: bool,
}

/// Leave-one-out prediction of a single run's profile.
#[derive(Debug, Clone)]
pub struct LooProfile {
    pub grid: Vec<f64>,
    pub pred: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// Stacks an n×m matrix row-major into a length-n·m vector (run-major
/// order, matching `R_X ⊗ R_t`).
pub fn stack_rows(y: &DMatrix<f64>) -> DVector<f64> {
    let (n, m) = (y.nrows(), y.ncols());
    DVector::from_fn(n * m, |k, _| y[(k / m, k % m)])
}

/// Generalized-least-squares coefficients μ̂ = [V'R⁻¹V]⁻¹ V'R⁻¹y with every
/// application of R⁻¹ factored through the Kronecker solves.
pub fn gls_mu(
    y: &DVector<f64>,
    v: &DMatrix<f64>,
    rx: &RxFactor,
    rt: &StructuredCorrT,
) -> Result<DVector<f64>> {
    let (normal_chol, rhs) = gls_normal(y, v, rx, rt)?;
    Ok(normal_chol.solve(&rhs))
}

/// Normal-equation pieces shared by `gls_mu` and the model caches.
fn gls_normal(
    y: &DVector<f64>,
    v: &DMatrix<f64>,
    rx: &RxFactor,
    rt: &StructuredCorrT,
) -> Result<(Cholesky<f64, Dyn>, DVector<f64>)> {
    let l = v.ncols();
    let mut w = DMatrix::zeros(v.nrows(), l);
    for c in 0..l {
        let col = DVector::from_column_slice(v.column(c).as_slice());
        w.set_column(c, &kron_apply_inverse(rx, rt, &col)?);
    }
    let normal = v.transpose() * &w;
    let chol = Cholesky::new(normal).ok_or(Error::RankDeficientBasis)?;
    let rhs = w.transpose() * y;
    Ok((chol, rhs))
}

/// σ̂² = (y − Vμ)'(R_X⁻¹ ⊗ R_t⁻¹)(y − Vμ)/N.
pub fn sigma2_hat(
    y: &DVector<f64>,
    v: &DMatrix<f64>,
    mu: &DVector<f64>,
    rx: &RxFactor,
    rt: &StructuredCorrT,
) -> Result<f64> {
    let resid = y - v * mu;
    let weighted = kron_apply_inverse(rx, rt, &resid)?;
    Ok((resid.dot(&weighted) / y.len() as f64).max(0.0))
}

/// The profiled negative log-likelihood N·log σ̂² + m·log|R_X| + n·log|R_t|
/// with μ̂ and σ̂² concentrated out.
pub fn neg_profile_loglik(
    params: &CorrParams,
    design: &Design,
    grid: &[f64],
    y: &DMatrix<f64>,
    basis: &BasisSpec,
) -> Result<f64> {
    profile_loglik_impl(params, design, grid, y, basis, false)
}

/// [`neg_profile_loglik`] with the dense `R_t` representation forced even
/// when the closed form applies; exists for benchmarking the two paths.
pub fn neg_profile_loglik_dense_rt(
    params: &CorrParams,
    design: &Design,
    grid: &[f64],
    y: &DMatrix<f64>,
    basis: &BasisSpec,
) -> Result<f64> {
    profile_loglik_impl(params, design, grid, y, basis, true)
}

fn profile_loglik_impl(
    params: &CorrParams,
    design: &Design,
    grid: &[f64],
    y: &DMatrix<f64>,
    basis: &BasisSpec,
    force_dense_rt: bool,
) -> Result<f64> {
    let rx = build_r_x(design, params)?;
    let rt = if force_dense_rt {
        crate::corr::build_r_t_dense(grid, params.beta, params.d, params.nugget)?
    } else {
        build_r_t(grid, params.beta, params.d, params.nugget)?
    };
    let v = basis.model_matrix(design, grid);
    let y_vec = stack_rows(y);
    let mu = gls_mu(&y_vec, &v, &rx, &rt)?;
    let s2 = sigma2_hat(&y_vec, &v, &mu, &rx, &rt)?;
    let n_tot = y_vec.len() as f64;
    Ok(n_tot * s2.max(SIGMA2_LOG_FLOOR).ln() + logdet_kron(&rx, &rt))
}

fn params_from_logs(logs: &[f64], template: &CorrParams) -> CorrParams {
    let p = template.alphas.len();
    CorrParams {
        alphas: logs[..p].iter().map(|l| l.exp()).collect(),
        beta: logs[p].exp(),
        d: template.d,
        nugget: template.nugget,
    }
}

/// Fits a kriging model on a regular grid by multi-start Nelder–Mead over
/// the log correlation rates, starting from `init` plus `opts.n_restarts`
/// perturbed starts.
pub fn fit_regular(
    dataset: &FunctionalDataset,
    basis: &BasisSpec,
    init: &CorrParams,
    opts: &FitOpts,
) -> Result<KrigingModel> {
    let y = dataset.response_matrix()?;
    fit_regular_matrix(
        &dataset.design,
        dataset.union_grid(),
        &y,
        basis,
        init,
        opts,
    )
}

/// Matrix-form core of [`fit_regular`]; `y` is n×m on the shared grid.
pub fn fit_regular_matrix(
    design: &Design,
    grid: &[f64],
    y: &DMatrix<f64>,
    basis: &BasisSpec,
    init: &CorrParams,
    opts: &FitOpts,
) -> Result<KrigingModel> {
    init.validate()?;
    let p = design.n_vars();
    if init.alphas.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: init.alphas.len(),
        });
    }
    let dim = p + 1;
    let (lo, hi) = (
        vec![opts.log_rate_lo; dim],
        vec![opts.log_rate_hi; dim],
    );
    let clamp_log =
        |v: f64| v.max(opts.log_rate_lo).min(opts.log_rate_hi);
    let base: Vec<f64> = init
        .alphas
        .iter()
        .chain(std::iter::once(&init.beta))
        .map(|r| clamp_log(r.max(f64::MIN_POSITIVE).ln()))
        .collect();

    let objective = |logs: &[f64]| -> f64 {
        let params = params_from_logs(logs, init);
        neg_profile_loglik(&params, design, grid, y, basis).unwrap_or(f64::INFINITY)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts = vec![base.clone()];
    for _ in 0..opts.n_restarts {
        starts.push(
            base.iter()
                .map(|b| clamp_log(b + rng.random_range(-1.0..1.0)))
                .collect(),
        );
    }

    let mut best: Option<(Vec<f64>, f64)> = None;
    for start in &starts {
        if let Some(out) = nelder_mead_box(objective, start, &lo, &hi, &opts.nm) {
            if best.as_ref().is_none_or(|(_, b)| out.value < *b) {
                best = Some((out.x, out.value));
            }
        }
    }
    let (best_logs, _) = best.ok_or_else(|| {
        Error::OptimFailed(format!(
            "all {} starts failed factorization; best-so-far unavailable",
            starts.len()
        ))
    })?;
    let params = params_from_logs(&best_logs, init);
    fit_with_params(design, grid, y, basis, &params)
}

/// Computes μ̂, σ̂², and the prediction caches at fixed correlation
/// parameters.
pub fn fit_with_params(
    design: &Design,
    grid: &[f64],
    y: &DMatrix<f64>,
    basis: &BasisSpec,
    params: &CorrParams,
) -> Result<KrigingModel> {
    if let Some(j) = basis.max_var_index() {
        if j >= design.n_vars() {
            return Err(Error::Data(format!(
                "basis references variable index {j} but the design has {} variables",
                design.n_vars()
            )));
        }
    }
    let rx = build_r_x(design, params)?;
    let rt = build_r_t(grid, params.beta, params.d, params.nugget)?;
    let v = basis.model_matrix(design, grid);
    let y_vec = stack_rows(y);
    let (normal_chol, rhs) = gls_normal(&y_vec, &v, &rx, &rt)?;
    let mu = normal_chol.solve(&rhs);
    let resid = &y_vec - &v * &mu;
    let weighted = kron_apply_inverse(&rx, &rt, &resid)?;
    let sigma2 = (resid.dot(&weighted) / y_vec.len() as f64).max(0.0);
    let (n, m) = (design.n_runs(), grid.len());
    let weighted_resid = DMatrix::from_fn(n, m, |i, j| weighted[i * m + j]);
    Ok(KrigingModel {
        basis: basis.clone(),
        mu,
        sigma2,
        params: params.clone(),
        design: design.clone(),
        grid: grid.to_vec(),
        y: y.clone(),
        rx,
        rt,
        v,
        normal_chol,
        weighted_resid,
    })
}

impl KrigingModel {
    pub fn n_runs(&self) -> usize {
        self.design.n_runs()
    }

    pub fn grid_len(&self) -> usize {
        self.grid.len()
    }

    /// The profiled objective value at the fitted parameters.
    pub fn objective(&self) -> f64 {
        let n_tot = (self.n_runs() * self.grid_len()) as f64;
        n_tot * self.sigma2.max(SIGMA2_LOG_FLOOR).ln() + logdet_kron(&self.rx, &self.rt)
    }

    /// Point prediction ŷ(x, t) = υ(x,t)'μ̂ + r(x,t)'R⁻¹(y − Vμ̂).
    ///
    /// The cross-correlation r(x,t) factors as r_X(x) ⊗ r_t(t), so with the
    /// cached weighted residual the cost is O(n·m).
    pub fn predict(&self, x: &[f64], t: f64) -> f64 {
        let trend = self.basis.eval(x, t).dot(&self.mu);
        let rx_cross = corr_x_cross(&self.design, &self.params, x);
        let rt_cross = self.rt.cross_vec(t);
        trend + (rx_cross.transpose() * &self.weighted_resid * rt_cross)[(0, 0)]
    }

    /// Prediction with the two-sided 100(1−κ)% confidence interval.
    pub fn predict_ci(&self, x: &[f64], t: f64, kappa: f64) -> Prediction {
        let value = self.predict(x, t);
        let half = self.ci_half_width(x, t, kappa);
        Prediction {
            value,
            lo: value - half,
            hi: value + half,
            extrapolation: !self.design.contains(x),
        }
    }

    /// Z_{κ/2}·σ̂·√(1 − r'R⁻¹r + h'(V'R⁻¹V)⁻¹h) with h = υ − V'R⁻¹r; the
    /// bracket is clamped at zero against round-off.
    pub fn ci_half_width(&self, x: &[f64], t: f64, kappa: f64) -> f64 {
        let rx_cross = corr_x_cross(&self.design, &self.params, x);
        let rt_cross = self.rt.cross_vec(t);
        let u = self.rx.solve_vec(&rx_cross);
        let w = self.rt.solve_vec(&rt_cross);
        let r_rinv_r = rx_cross.dot(&u) * rt_cross.dot(&w);

        // h = υ(x,t) − V'(u ⊗ w), accumulated row by row.
        let (n, m, l) = (self.n_runs(), self.grid_len(), self.basis.dim());
        let mut h = self.basis.eval(x, t);
        for i in 0..n {
            for j in 0..m {
                let weight = u[i] * w[j];
                if weight != 0.0 {
                    let row = i * m + j;
                    for c in 0..l {
                        h[c] -= self.v[(row, c)] * weight;
                    }
                }
            }
        }
        let trend_term = h.dot(&self.normal_chol.solve(&h));
        let bracket = (1.0 - r_rinv_r + trend_term).max(0.0);
        z_two_sided(kappa) * self.sigma2.sqrt() * bracket.sqrt()
    }
}

/// Leave-one-observation-out RMSE at the model's fixed parameters, via the
/// closed-form identity e_loo(a) = [R⁻¹(y − Vμ̂)]_a / [R⁻¹]_aa with the
/// diagonal of R⁻¹ factored as diag(R_X⁻¹) ⊗ diag(R_t⁻¹).
///
/// The mean is treated as fixed, which makes this a cheap exact criterion
/// for basis selection rather than a full refit cross-validation.
pub fn fixed_params_loo_rmse(model: &KrigingModel) -> f64 {
    let rx_inv_diag = model.rx.inverse().diagonal();
    let rt_inv_diag = model.rt.inv_diagonal();
    let (n, m) = (model.n_runs(), model.grid_len());
    let mut ss = 0.0;
    for i in 0..n {
        for j in 0..m {
            let e = model.weighted_resid[(i, j)] / (rx_inv_diag[i] * rt_inv_diag[j]);
            ss += e * e;
        }
    }
    (ss / (n * m) as f64).sqrt()
}

/// Options for leave-one-out profile prediction.
#[derive(Debug, Clone)]
pub struct LooOpts {
    /// Refit the correlation rates without the held-out run; when false the
    /// full-data rates are kept and only μ̂, σ̂² are re-estimated.
    pub refit: bool,
    pub kappa: f64,
    pub fit: FitOpts,
}

impl Default for LooOpts {
    fn default() -> Self {
        LooOpts {
            refit: false,
            kappa: 0.05,
            fit: FitOpts::default(),
        }
    }
}

/// Predicts run `i`'s profile from a model fitted without that run, at the
/// model's own correlation parameters.
pub fn loo_predict(model: &KrigingModel, i: usize, kappa: f64) -> Result<LooProfile> {
    let design = model.design.without_run(i);
    let y = model.y.clone().remove_row(i);
    let reduced = fit_with_params(&design, &model.grid, &y, &model.basis, &model.params)?;
    let x = model.design.row(i);
    let mut out = LooProfile {
        grid: model.grid.clone(),
        pred: Vec::with_capacity(model.grid_len()),
        lo: Vec::with_capacity(model.grid_len()),
        hi: Vec::with_capacity(model.grid_len()),
    };
    for &t in &model.grid {
        let p = reduced.predict_ci(x, t, kappa);
        out.pred.push(p.value);
        out.lo.push(p.lo);
        out.hi.push(p.hi);
    }
    Ok(out)
}

/// Leave-one-out prediction of run `i` on a regular dataset, refitting or
/// re-predicting according to `opts.refit`.
pub fn loo_profile(
    dataset: &FunctionalDataset,
    basis: &BasisSpec,
    init: &CorrParams,
    opts: &LooOpts,
    i: usize,
) -> Result<LooProfile> {
    if dataset.n_runs() < 3 {
        return Err(Error::Data(
            "leave-one-out needs at least three runs".into(),
        ));
    }
    if opts.refit {
        let reduced = dataset.without_run(i)?;
        let model = fit_regular(&reduced, basis, init, &opts.fit)?;
        let x = dataset.design.row(i);
        let grid = dataset.union_grid().to_vec();
        let mut out = LooProfile {
            grid: grid.clone(),
            pred: vec![],
            lo: vec![],
            hi: vec![],
        };
        for &t in &grid {
            let p = model.predict_ci(x, t, opts.kappa);
            out.pred.push(p.value);
            out.lo.push(p.lo);
            out.hi.push(p.hi);
        }
        Ok(out)
    } else {
        let model = fit_regular(dataset, basis, init, &opts.fit)?;
        loo_predict(&model, i, opts.kappa)
    }
}
