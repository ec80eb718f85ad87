//! The end-to-end fit pipeline: optional decay transform, first-stage
//! marginal models, then the regular-grid fit or the EM completion,
//! depending on how the data were collected. Predictions made through the
//! pipeline are mapped back to the raw scale.

use nalgebra::DMatrix;

use crate::basis::BasisSpec;
use crate::config::DecaySetting;
use crate::corr::{CorrParams, PowerExponent};
use crate::dataset::FunctionalDataset;
use crate::em::{run_em, EmDiagnostics, EmOpts};
use crate::error::{Error, Result};
use crate::kriging::{fit_with_params, FitOpts, KrigingModel, Prediction};
use crate::stage1::{
    apply_decay, average_profile, fit_decay_transform, fit_marginal_t, fit_marginal_x,
    init_missing, mean_profile, DecayDirection, StageOpts,
};

/// Pipeline controls, typically derived from a [`crate::config::ProjectConfig`].
#[derive(Debug, Clone)]
pub struct PipelineOpts {
    pub d: PowerExponent,
    pub nugget: f64,
    pub decay: DecaySetting,
    /// Candidate monomial powers of t for the mean.
    pub t_powers: Vec<u32>,
    /// Offer a linear term per variable to the forward selection.
    pub x_linear: bool,
    pub em: EmOpts,
    /// Optimizer options for the stage-one marginal fits.
    pub stage_fit: FitOpts,
}

impl Default for PipelineOpts {
    fn default() -> Self {
        PipelineOpts {
            d: PowerExponent::Exponential,
            nugget: crate::corr::DEFAULT_NUGGET,
            decay: DecaySetting::Off,
            t_powers: vec![1, 2],
            x_linear: true,
            em: EmOpts::default(),
            stage_fit: FitOpts::default(),
        }
    }
}

/// What stage one decided.
#[derive(Debug, Clone)]
pub struct StageSummary {
    pub beta0: f64,
    pub alpha0: Vec<f64>,
    pub t_powers: Vec<u32>,
    pub x_terms: Vec<(usize, u32)>,
}

/// A fully fitted pipeline. The model lives on the (possibly transformed)
/// modeling scale; prediction helpers restore the raw scale.
#[derive(Debug, Clone)]
pub struct FittedPipeline {
    pub model: KrigingModel,
    /// Decay rate applied to the data (0 = identity).
    pub decay_lambda: f64,
    /// Completed data on the union grid, modeling scale.
    pub completed: DMatrix<f64>,
    /// EM diagnostics; `None` when the data were already regular.
    pub em: Option<EmDiagnostics>,
    pub stage: StageSummary,
    pub regular: bool,
}

impl FittedPipeline {
    /// Prediction with confidence interval on the raw data scale.
    pub fn predict_original(&self, x: &[f64], t: f64, kappa: f64) -> Prediction {
        let mut p = self.model.predict_ci(x, t, kappa);
        let factor = (-self.decay_lambda * t).exp();
        p.value *= factor;
        p.lo *= factor;
        p.hi *= factor;
        p
    }
}

/// Runs transform → stage one → (regular fit | EM completion).
pub fn fit_pipeline(dataset: &FunctionalDataset, opts: &PipelineOpts) -> Result<FittedPipeline> {
    if dataset.n_runs() < 3 {
        return Err(Error::Data(
            "the two-stage pipeline needs at least three runs".into(),
        ));
    }
    let lambda = match opts.decay {
        DecaySetting::Off => 0.0,
        DecaySetting::Fixed(l) => {
            if !(l.is_finite() && l >= 0.0) {
                return Err(Error::Config("decay rate must be >= 0".into()));
            }
            l
        }
        DecaySetting::Auto => {
            let (grid, profile) = mean_profile(dataset);
            fit_decay_transform(&profile, &grid)?.lambda
        }
    };
    let working = if lambda != 0.0 {
        apply_decay(dataset, lambda, DecayDirection::Transform)
    } else {
        dataset.clone()
    };

    let stage_opts = StageOpts {
        d: opts.d,
        nugget: opts.nugget,
        fit: opts.stage_fit.clone(),
        ..Default::default()
    };
    let (grid, e_bar, _) = average_profile(&working);
    let mt = fit_marginal_t(&e_bar, &grid, &opts.t_powers, &stage_opts)?;
    let run_means: Vec<f64> = working.runs.iter().map(|r| r.mean()).collect();
    let x_candidates: Vec<(usize, u32)> = if opts.x_linear {
        (0..working.design.n_vars()).map(|j| (j, 1)).collect()
    } else {
        vec![]
    };
    let mx = fit_marginal_x(&run_means, &working.design, &x_candidates, &stage_opts)?;

    let stage = StageSummary {
        beta0: mt.beta0(),
        alpha0: mx.alpha0(),
        t_powers: mt.powers.clone(),
        x_terms: mx.terms.clone(),
    };
    let basis = BasisSpec::new(stage.t_powers.clone(), stage.x_terms.clone())?;
    let init = CorrParams::new(stage.alpha0.clone(), stage.beta0, opts.d, opts.nugget)?;

    let regular = working.is_regular();
    let init_z = init_missing(&working, &mt, &mx);
    let em_result = run_em(&working, &basis, &init, &init_z, &opts.em)?;
    Ok(FittedPipeline {
        model: em_result.model,
        decay_lambda: lambda,
        completed: em_result.completed,
        em: if regular {
            None
        } else {
            Some(em_result.diagnostics)
        },
        stage,
        regular,
    })
}

/// MSCV of the EM-completed fit versus a fit restricted to the common grid.
#[derive(Debug, Clone, Copy)]
pub struct MscvComparison {
    pub em_completed: f64,
    pub common_grid: f64,
}

/// Leave-one-out predictions of probe runs at their own abscissae on the
/// raw scale, from a regular model on the modeling scale.
fn loo_predictions_at(
    model: &KrigingModel,
    run_abscissae: &[f64],
    x: &[f64],
    i: usize,
    lambda: f64,
) -> Result<Vec<f64>> {
    let design = model.design.without_run(i);
    let y = model.y.clone().remove_row(i);
    let reduced = fit_with_params(&design, &model.grid, &y, &model.basis, &model.params)?;
    Ok(run_abscissae
        .iter()
        .map(|&t| reduced.predict(x, t) * (-lambda * t).exp())
        .collect())
}

/// Compares leave-one-out prediction error of the pipeline's EM-completed
/// model against a model fitted only on the abscissae common to every run
/// (which must extrapolate past the common grid).
pub fn mscv_comparison(
    dataset: &FunctionalDataset,
    pipe: &FittedPipeline,
    probes: &[usize],
    opts: &PipelineOpts,
) -> Result<MscvComparison> {
    let em_completed = crate::analysis::mscv(dataset, probes, |i| {
        loo_predictions_at(
            &pipe.model,
            &dataset.runs[i].t,
            dataset.design.row(i),
            i,
            pipe.decay_lambda,
        )
    })?;

    let common = dataset.common_grid()?;
    let common_working = if pipe.decay_lambda != 0.0 {
        apply_decay(&common, pipe.decay_lambda, DecayDirection::Transform)
    } else {
        common
    };
    let init = CorrParams::new(
        pipe.stage.alpha0.clone(),
        pipe.stage.beta0,
        opts.d,
        opts.nugget,
    )?;
    let common_model = crate::kriging::fit_regular(
        &common_working,
        &pipe.model.basis,
        &init,
        &opts.em.fit,
    )?;
    let common_grid = crate::analysis::mscv(dataset, probes, |i| {
        loo_predictions_at(
            &common_model,
            &dataset.runs[i].t,
            dataset.design.row(i),
            i,
            pipe.decay_lambda,
        )
    })?;
    Ok(MscvComparison {
        em_completed,
        common_grid,
    })
}
