//! First-stage marginal modeling: the average profile in `t`, the run means
//! in `x`, greedy forward basis selection, initial correlation rates, the
//! additive initialization of missing data, and the decay transform.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::basis::BasisSpec;
use crate::corr::{CorrParams, PowerExponent, DEFAULT_NUGGET};
use crate::dataset::FunctionalDataset;
use crate::design::Design;
use crate::error::{Error, Result};
use crate::kriging::{self, FitOpts, KrigingModel};
use crate::util::optim::golden_section;

/// Options shared by the marginal fits and the forward selection.
#[derive(Debug, Clone)]
pub struct StageOpts {
    pub d: PowerExponent,
    pub nugget: f64,
    /// A candidate term is accepted only when it shrinks the selection
    /// criterion by at least this relative amount.
    pub min_rel_improvement: f64,
    pub fit: FitOpts,
}

impl Default for StageOpts {
    fn default() -> Self {
        StageOpts {
            d: PowerExponent::Exponential,
            nugget: DEFAULT_NUGGET,
            min_rel_improvement: 0.01,
            fit: FitOpts::default(),
        }
    }
}

/// Centered average profile over the union grid.
///
/// Each response is centered by its run mean before averaging, so the curve
/// carries only the `t`-direction trend. Returns the union grid, the
/// averages, and the per-point run counts.
pub fn average_profile(dataset: &FunctionalDataset) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
    let grid = dataset.union_grid().to_vec();
    let mut sums = vec![0.0; grid.len()];
    let counts = dataset.counts();
    for (i, run) in dataset.runs.iter().enumerate() {
        let run_mean = run.mean();
        for (pos, &j) in dataset.observed_indices(i).iter().enumerate() {
            sums[j] += run.y[pos] - run_mean;
        }
    }
    let e_bar = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| s / c as f64)
        .collect();
    (grid, e_bar, counts)
}

/// Plain (uncentered) average response at each union-grid point.
pub fn mean_profile(dataset: &FunctionalDataset) -> (Vec<f64>, Vec<f64>) {
    let grid = dataset.union_grid().to_vec();
    let mut sums = vec![0.0; grid.len()];
    let counts = dataset.counts();
    for (i, run) in dataset.runs.iter().enumerate() {
        for (pos, &j) in dataset.observed_indices(i).iter().enumerate() {
            sums[j] += run.y[pos];
        }
    }
    (
        grid,
        sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect(),
    )
}

/// Marginal model of the centered average profile: a one-run kriging fit
/// over the union grid whose rate is the initial β.
#[derive(Debug, Clone)]
pub struct MarginalTModel {
    pub model: KrigingModel,
    pub powers: Vec<u32>,
}

impl MarginalTModel {
    pub fn beta0(&self) -> f64 {
        self.model.params.beta
    }

    pub fn predict(&self, t: f64) -> f64 {
        self.model.predict(&[], t)
    }
}

/// Marginal model of the run means over the design: a single-grid-point
/// kriging fit whose rates are the initial α vector.
#[derive(Debug, Clone)]
pub struct MarginalXModel {
    pub model: KrigingModel,
    pub terms: Vec<(usize, u32)>,
}

impl MarginalXModel {
    pub fn alpha0(&self) -> Vec<f64> {
        self.model.params.alphas.clone()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let t0 = self.model.grid[0];
        self.model.predict(x, t0)
    }
}

/// Greedy forward selection: keep adding the candidate that most improves
/// the fixed-parameter LOO RMSE until the relative improvement drops below
/// the configured threshold.
fn forward_select<T: Clone + PartialEq, F>(
    candidates: &[T],
    min_rel_improvement: f64,
    mut fit_with: F,
) -> Result<(Vec<T>, KrigingModel)>
where
    F: FnMut(&[T]) -> Result<KrigingModel>,
{
    let mut selected: Vec<T> = Vec::new();
    let mut best_model = fit_with(&selected)?;
    let mut best_crit = kriging::fixed_params_loo_rmse(&best_model);
    loop {
        let mut round_best: Option<(T, f64, KrigingModel)> = None;
        for cand in candidates {
            if selected.contains(cand) {
                continue;
            }
            let mut trial = selected.clone();
            trial.push(cand.clone());
            let model = match fit_with(&trial) {
                Ok(m) => m,
                Err(_) => continue, // collinear or singular candidate
            };
            let crit = kriging::fixed_params_loo_rmse(&model);
            if round_best.as_ref().is_none_or(|(_, c, _)| crit < *c) {
                round_best = Some((cand.clone(), crit, model));
            }
        }
        match round_best {
            Some((cand, crit, model)) if crit < best_crit * (1.0 - min_rel_improvement) => {
                selected.push(cand);
                best_crit = crit;
                best_model = model;
            }
            _ => break,
        }
    }
    Ok((selected, best_model))
}

/// Fits the average-profile model with monomials of `t` chosen by forward
/// selection; the fitted rate is the initial β.
pub fn fit_marginal_t(
    e_bar: &[f64],
    grid: &[f64],
    candidate_powers: &[u32],
    opts: &StageOpts,
) -> Result<MarginalTModel> {
    if grid.len() < 3 {
        return Err(Error::Data(
            "marginal t model needs at least three grid points".into(),
        ));
    }
    let design = Design::new(vec![vec![]], vec![], vec![])?;
    let y = DMatrix::from_fn(1, grid.len(), |_, j| e_bar[j]);
    let h_mean = (grid[grid.len() - 1] - grid[0]) / (grid.len() as f64 - 1.0);
    let init = CorrParams::new(vec![], 1.0 / h_mean, opts.d, opts.nugget)?;
    let (powers, model) = forward_select(candidate_powers, opts.min_rel_improvement, |ps| {
        let basis = BasisSpec::new(ps.to_vec(), vec![])?;
        kriging::fit_regular_matrix(&design, grid, &y, &basis, &init, &opts.fit)
    })?;
    Ok(MarginalTModel { model, powers })
}

/// Fits the run-mean model with `x` monomials chosen by forward selection;
/// the fitted rates are the initial α vector.
pub fn fit_marginal_x(
    y_means: &[f64],
    design: &Design,
    candidate_terms: &[(usize, u32)],
    opts: &StageOpts,
) -> Result<MarginalXModel> {
    if design.n_runs() < 3 {
        return Err(Error::Data(
            "marginal x model needs at least three runs".into(),
        ));
    }
    let grid = [0.0];
    let y = DMatrix::from_fn(design.n_runs(), 1, |i, _| y_means[i]);
    let init = CorrParams::new(vec![1.0; design.n_vars()], 1.0, opts.d, opts.nugget)?;
    let (terms, model) = forward_select(candidate_terms, opts.min_rel_improvement, |ts| {
        let basis = BasisSpec::new(vec![], ts.to_vec())?;
        kriging::fit_regular_matrix(design, &grid, &y, &basis, &init, &opts.fit)
    })?;
    Ok(MarginalXModel { model, terms })
}

/// Additive initialization of the missing data: for run `i` at a missing
/// grid point `t`, the prediction of the average-profile model at `t` plus
/// the prediction of the run-mean model at `x_i`. Returns, per run, the
/// missing grid indices with their initial values.
pub fn init_missing(
    dataset: &FunctionalDataset,
    mt: &MarginalTModel,
    mx: &MarginalXModel,
) -> Vec<Vec<(usize, f64)>> {
    let grid = dataset.union_grid();
    (0..dataset.n_runs())
        .map(|i| {
            let x_part = mx.predict(dataset.design.row(i));
            dataset
                .missing_indices(i)
                .into_iter()
                .map(|j| (j, mt.predict(grid[j]) + x_part))
                .collect()
        })
        .collect()
}

/// Multiplicative decay transform: `S(t) = exp(-λt)(μ0 + μ1 t + μ2 t²)`
/// fitted to the mean profile; the data are multiplied by `exp(λt)` before
/// modeling and predictions by `exp(-λt)` after.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayTransform {
    pub lambda: f64,
    pub poly: [f64; 3],
}

impl DecayTransform {
    /// Identity transform.
    pub fn none() -> Self {
        DecayTransform {
            lambda: 0.0,
            poly: [0.0; 3],
        }
    }

    /// The fitted mean curve S(t).
    pub fn curve(&self, t: f64) -> f64 {
        (-self.lambda * t).exp() * (self.poly[0] + self.poly[1] * t + self.poly[2] * t * t)
    }

    /// Factor applied to raw data before modeling.
    pub fn forward_factor(&self, t: f64) -> f64 {
        (self.lambda * t).exp()
    }

    /// Factor applied to model-scale values to return to the raw scale.
    pub fn inverse_factor(&self, t: f64) -> f64 {
        (-self.lambda * t).exp()
    }
}

/// Direction of [`apply_decay`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayDirection {
    /// Multiply responses by exp(λt) (raw data → modeling scale).
    Transform,
    /// Multiply responses by exp(-λt) (modeling scale → raw data).
    Restore,
}

/// Least-squares fit of the decay rate with the polynomial profiled out.
///
/// For each λ the polynomial coefficients are an ordinary least-squares
/// solve; λ itself is found by golden-section search on [0, 1/h̄], with the
/// boundary λ = 0 kept whenever it is at least as good.
pub fn fit_decay_transform(profile: &[f64], grid: &[f64]) -> Result<DecayTransform> {
    let m = grid.len();
    if m < 4 || profile.len() != m {
        return Err(Error::Data(
            "decay fit needs a mean profile on at least four grid points".into(),
        ));
    }
    let h_mean = (grid[m - 1] - grid[0]) / (m as f64 - 1.0);
    let lambda_max = 1.0 / h_mean;

    let poly_rss = |lambda: f64| -> ([f64; 3], f64) {
        let x = DMatrix::from_fn(m, 3, |j, c| {
            let w = (-lambda * grid[j]).exp();
            w * grid[j].powi(c as i32)
        });
        let y = DVector::from_column_slice(profile);
        let normal = x.transpose() * &x;
        let coefs = match Cholesky::new(normal) {
            Some(chol) => chol.solve(&(x.transpose() * &y)),
            None => return ([0.0; 3], f64::INFINITY),
        };
        let rss = (&y - &x * &coefs).norm_squared();
        ([coefs[0], coefs[1], coefs[2]], rss)
    };

    let (lambda_gs, rss_gs) = golden_section(|l| poly_rss(l).1, 0.0, lambda_max, 1e-6);
    let (_, rss_zero) = poly_rss(0.0);
    let lambda = if rss_zero <= rss_gs * (1.0 + 1e-12) {
        0.0
    } else {
        lambda_gs
    };
    let (poly, _) = poly_rss(lambda);
    Ok(DecayTransform { lambda, poly })
}

/// Applies the decay factor to every response value.
pub fn apply_decay(
    dataset: &FunctionalDataset,
    lambda: f64,
    direction: DecayDirection,
) -> FunctionalDataset {
    let sign = match direction {
        DecayDirection::Transform => 1.0,
        DecayDirection::Restore => -1.0,
    };
    let runs = dataset
        .runs
        .iter()
        .map(|run| {
            let y = run
                .t
                .iter()
                .zip(&run.y)
                .map(|(t, y)| y * (sign * lambda * t).exp())
                .collect();
            crate::dataset::Profile::new(run.t.clone(), y).expect("grid unchanged")
        })
        .collect();
    FunctionalDataset::new(dataset.design.clone(), runs).expect("design unchanged")
}
