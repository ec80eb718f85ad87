//! Post-fit analytics: worst-case optimization over the design space,
//! main-effect sensitivity curves, and cross-validation summaries.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::dataset::FunctionalDataset;
use crate::design::VarKind;
use crate::error::{Error, Result};
use crate::kriging::KrigingModel;
use crate::util::optim::{nelder_mead_box, NelderMeadOpts};
use crate::util::quasi::ScrambledHalton;

/// Result of the inner maximization over the index grid (and optionally the
/// levels of one designated categorical variable).
#[derive(Debug, Clone, Copy)]
pub struct InnerMax {
    pub t_star: f64,
    /// Level of the swept variable at the maximum, when one was designated.
    pub level: Option<f64>,
    pub value: f64,
}

/// Exhaustively maximizes the prediction over `t_grid`, sweeping the levels
/// of `sweep_var` when given. Ties break to the lowest grid index.
pub fn max_over_t(
    model: &KrigingModel,
    x: &[f64],
    t_grid: &[f64],
    sweep_var: Option<usize>,
) -> InnerMax {
    assert!(!t_grid.is_empty(), "empty index grid");
    let levels: Vec<Option<f64>> = match sweep_var {
        None => vec![None],
        Some(j) => match model.design.kind(j) {
            VarKind::Categorical { levels } => {
                (1..=*levels).map(|l| Some(l as f64)).collect()
            }
            VarKind::Continuous { .. } => {
                panic!("swept variable {j} must be categorical")
            }
        },
    };
    let mut best = InnerMax {
        t_star: t_grid[0],
        level: levels[0],
        value: f64::NEG_INFINITY,
    };
    let mut x_buf = x.to_vec();
    for level in levels {
        if let (Some(j), Some(l)) = (sweep_var, level) {
            x_buf[j] = l;
        }
        for &t in t_grid {
            let v = model.predict(&x_buf, t);
            if v > best.value {
                best = InnerMax {
                    t_star: t,
                    level,
                    value: v,
                };
            }
        }
    }
    best
}

/// Options for [`minimax_optimize`].
#[derive(Debug, Clone)]
pub struct MinimaxOpts {
    /// Bounds per continuous variable; defaults to the declared ranges.
    pub bounds: Option<Vec<(f64, f64)>>,
    /// Quasi-random starts added to the design rows, per categorical
    /// combination.
    pub restarts: usize,
    pub seed: u64,
    /// Evaluation budget across all starts (0 = unlimited).
    pub max_evals: usize,
    /// Categorical variable maximized over inside the objective rather than
    /// minimized over.
    pub sweep_var: Option<usize>,
    /// Index-grid refinement factor for the inner maximization.
    pub refine: usize,
    pub nm: NelderMeadOpts,
}

impl Default for MinimaxOpts {
    fn default() -> Self {
        MinimaxOpts {
            bounds: None,
            restarts: 20,
            seed: 0x0117,
            max_evals: 0,
            sweep_var: None,
            refine: 1,
            nm: NelderMeadOpts::default(),
        }
    }
}

/// Minimizer of the worst-case predicted response.
#[derive(Debug, Clone, Serialize)]
pub struct OptimResult {
    pub x_star: Vec<f64>,
    pub worst_t: f64,
    /// Level of the swept variable attaining the inner maximum, if any.
    pub worst_level: Option<f64>,
    pub worst_value: f64,
    /// Best objective value found by each start.
    pub trace: Vec<f64>,
    pub evals: usize,
    pub budget_exhausted: bool,
}

pub(crate) fn refined_grid(grid: &[f64], factor: usize) -> Vec<f64> {
    if factor <= 1 || grid.len() < 2 {
        return grid.to_vec();
    }
    let mut out = Vec::with_capacity((grid.len() - 1) * factor + 1);
    for w in grid.windows(2) {
        for k in 0..factor {
            out.push(w[0] + (w[1] - w[0]) * k as f64 / factor as f64);
        }
    }
    out.push(*grid.last().unwrap());
    out
}

fn categorical_combos(model: &KrigingModel, sweep_var: Option<usize>) -> Vec<Vec<(usize, f64)>> {
    let mut combos: Vec<Vec<(usize, f64)>> = vec![vec![]];
    for (j, kind) in model.design.kinds().iter().enumerate() {
        if Some(j) == sweep_var {
            continue;
        }
        if let VarKind::Categorical { levels } = kind {
            combos = combos
                .into_iter()
                .flat_map(|combo| {
                    (1..=*levels).map(move |l| {
                        let mut c = combo.clone();
                        c.push((j, l as f64));
                        c
                    })
                })
                .collect();
        }
    }
    combos
}

/// Finds the setting minimizing the worst-case prediction, i.e. the max
/// over the index grid (and the swept variable's levels).
///
/// Every categorical combination is enumerated; the continuous variables
/// are searched by Nelder–Mead from the design rows plus scrambled-Halton
/// starts, so the result never exceeds the best design-row objective.
/// Deterministic under a fixed seed.
pub fn minimax_optimize(model: &KrigingModel, opts: &MinimaxOpts) -> OptimResult {
    let p = model.design.n_vars();
    let cont_vars: Vec<usize> = (0..p)
        .filter(|&j| !model.design.kind(j).is_categorical() && Some(j) != opts.sweep_var)
        .collect();
    let (lo, hi): (Vec<f64>, Vec<f64>) = cont_vars
        .iter()
        .enumerate()
        .map(|(pos, &j)| match (&opts.bounds, model.design.kind(j)) {
            (Some(b), _) => b[pos],
            (None, VarKind::Continuous { lo, hi }) => (*lo, *hi),
            (None, VarKind::Categorical { .. }) => unreachable!(),
        })
        .unzip();
    let t_grid = refined_grid(&model.grid, opts.refine);

    let mut evals = 0usize;
    let mut budget_exhausted = false;
    let mut trace = Vec::new();
    let mut best: Option<(Vec<f64>, InnerMax)> = None;

    let combos = categorical_combos(model, opts.sweep_var);
    for combo in &combos {
        // Template setting for this categorical combination; the swept
        // variable slot is overwritten inside the inner maximization.
        let mut template = vec![0.0; p];
        for &(j, l) in combo {
            template[j] = l;
        }
        if let Some(j) = opts.sweep_var {
            template[j] = 1.0;
        }

        let assemble = |xc: &[f64]| {
            let mut x = template.clone();
            for (pos, &j) in cont_vars.iter().enumerate() {
                x[j] = xc[pos];
            }
            x
        };

        // Starts: design rows matching this combination, then Halton points.
        let mut starts: Vec<Vec<f64>> = model
            .design
            .rows()
            .iter()
            .filter(|row| combo.iter().all(|&(j, l)| row[j] == l))
            .map(|row| cont_vars.iter().map(|&j| row[j]).collect())
            .collect();
        if !cont_vars.is_empty() {
            let mut halton = ScrambledHalton::new(cont_vars.len(), opts.seed);
            for u in halton.take_points(opts.restarts) {
                starts.push(
                    u.iter()
                        .enumerate()
                        .map(|(pos, v)| lo[pos] + v * (hi[pos] - lo[pos]))
                        .collect(),
                );
            }
        } else {
            starts.push(vec![]);
        }

        for start in &starts {
            if opts.max_evals > 0 && evals >= opts.max_evals {
                budget_exhausted = true;
                break;
            }
            let budget = if opts.max_evals > 0 {
                opts.max_evals.saturating_sub(evals).max(1)
            } else {
                0
            };
            let mut local_best: Option<(Vec<f64>, InnerMax)> = None;
            let mut local_evals = 0usize;
            {
                let mut objective = |xc: &[f64]| -> f64 {
                    local_evals += 1;
                    let x = assemble(xc);
                    let inner = max_over_t(model, &x, &t_grid, opts.sweep_var);
                    if local_best
                        .as_ref()
                        .is_none_or(|(_, b)| inner.value < b.value)
                    {
                        local_best = Some((x, inner));
                    }
                    inner.value
                };
                if cont_vars.is_empty() {
                    objective(&[]);
                } else {
                    let nm = NelderMeadOpts {
                        max_iter: if budget > 0 {
                            budget.min(250 * cont_vars.len())
                        } else {
                            0
                        },
                        ..opts.nm.clone()
                    };
                    nelder_mead_box(&mut objective, start, &lo, &hi, &nm);
                }
            }
            evals += local_evals;
            if let Some((x, inner)) = local_best {
                trace.push(inner.value);
                if best.as_ref().is_none_or(|(_, b)| inner.value < b.value) {
                    best = Some((x, inner));
                }
            }
        }
        if opts.max_evals > 0 && evals >= opts.max_evals {
            budget_exhausted = true;
        }
    }

    let (x_star, inner) = best.expect("at least one start evaluated");
    OptimResult {
        x_star,
        worst_t: inner.t_star,
        worst_level: inner.level,
        worst_value: inner.value,
        trace,
        evals,
        budget_exhausted,
    }
}

/// Average predicted response as one variable moves over its levels with
/// the others integrated out by quasi-random sampling.
#[derive(Debug, Clone)]
pub struct EffectCurve {
    pub variable: usize,
    pub levels: Vec<f64>,
    pub grid: Vec<f64>,
    /// levels × grid matrix of averaged predictions.
    pub values: DMatrix<f64>,
}

impl EffectCurve {
    /// Average of the effect over its levels, per grid point; by
    /// construction this reproduces the overall average prediction over the
    /// shared node set.
    pub fn average_over_levels(&self) -> Vec<f64> {
        (0..self.grid.len())
            .map(|j| self.values.column(j).sum() / self.levels.len() as f64)
            .collect()
    }
}

/// Default number of quasi-random nodes for the integrated-out variables.
pub const DEFAULT_MC_NODES: usize = 256;

/// Computes the main-effect curve of `variable` on the model's grid.
///
/// The other variables take `mc_nodes` scrambled-Halton settings within
/// their ranges (categorical ones are snapped to levels); the same node set
/// is shared by every level so level averages are directly comparable.
pub fn main_effects(
    model: &KrigingModel,
    variable: usize,
    levels: &[f64],
    mc_nodes: usize,
    seed: u64,
) -> EffectCurve {
    let p = model.design.n_vars();
    assert!(variable < p, "variable index out of range");
    assert!(!levels.is_empty());
    let others: Vec<usize> = (0..p).filter(|&j| j != variable).collect();
    let nodes: Vec<Vec<f64>> = if others.is_empty() {
        vec![vec![]]
    } else {
        let mut halton = ScrambledHalton::new(others.len(), seed);
        halton
            .take_points(mc_nodes.max(1))
            .into_iter()
            .map(|u| {
                u.iter()
                    .zip(&others)
                    .map(|(v, &j)| match model.design.kind(j) {
                        VarKind::Continuous { lo, hi } => lo + v * (hi - lo),
                        VarKind::Categorical { levels } => {
                            ((v * *levels as f64).floor() as usize).min(levels - 1) as f64
                                + 1.0
                        }
                    })
                    .collect()
            })
            .collect()
    };

    let grid = model.grid.clone();
    let mut values = DMatrix::zeros(levels.len(), grid.len());
    let mut x = vec![0.0; p];
    for (li, &level) in levels.iter().enumerate() {
        for (j, &t) in grid.iter().enumerate() {
            let mut acc = 0.0;
            for node in &nodes {
                x[variable] = level;
                for (pos, &other) in others.iter().enumerate() {
                    x[other] = node[pos];
                }
                acc += model.predict(&x, t);
            }
            values[(li, j)] = acc / nodes.len() as f64;
        }
    }
    EffectCurve {
        variable,
        levels: levels.to_vec(),
        grid,
        values,
    }
}

/// Evenly spaced levels over a variable's range (or its categorical levels).
pub fn default_levels(model: &KrigingModel, variable: usize, count: usize) -> Vec<f64> {
    match model.design.kind(variable) {
        VarKind::Categorical { levels } => (1..=*levels).map(|l| l as f64).collect(),
        VarKind::Continuous { lo, hi } => {
            let k = count.max(2);
            (0..k)
                .map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64)
                .collect()
        }
    }
}

/// Mean squared cross-validation error over probe runs.
///
/// For each probe, `predict_for` supplies predictions at that run's own
/// observed abscissae with the run left out of training; the squared errors
/// are averaged over the run's points and then over the probes.
pub fn mscv<F>(dataset: &FunctionalDataset, probes: &[usize], mut predict_for: F) -> Result<f64>
where
    F: FnMut(usize) -> Result<Vec<f64>>,
{
    if probes.is_empty() {
        return Err(Error::Data("no probe runs given".into()));
    }
    let mut total = 0.0;
    for &i in probes {
        if i >= dataset.n_runs() {
            return Err(Error::Data(format!("probe run {} out of range", i + 1)));
        }
        let run = &dataset.runs[i];
        let preds = predict_for(i)?;
        if preds.len() != run.len() {
            return Err(Error::DimensionMismatch {
                expected: run.len(),
                got: preds.len(),
            });
        }
        let mse: f64 = run
            .y
            .iter()
            .zip(&preds)
            .map(|(y, p)| (y - p) * (y - p))
            .sum::<f64>()
            / run.len() as f64;
        total += mse;
    }
    Ok(total / probes.len() as f64)
}
