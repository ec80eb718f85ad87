//! Command-line surface: data generation, the fit pipeline, prediction,
//! validation, optimization, sensitivity, and the likelihood benchmark.
//! Every command is deterministic under a fixed seed. Exit codes: 0 ok,
//! 2 input error, 3 numeric failure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::analysis::{self, MinimaxOpts};
use crate::basis::BasisSpec;
use crate::config::ProjectConfig;
use crate::corr::CorrParams;
use crate::dataset::FunctionalDataset;
use crate::em::EmOpts;
use crate::error::{Error, Result};
use crate::generate::{generate, DesignChoice, GenSpec};
use crate::io;
use crate::kriging::{self, fit_with_params, FitOpts};
use crate::model_file::{load_model, save_model, SavedModel};
use crate::oracle;
use crate::pipeline::{fit_pipeline, mscv_comparison, FittedPipeline, PipelineOpts};

/// Size cap for the dense path of the benchmark.
pub const BENCH_DENSE_CAP: usize = 4096;

#[derive(Parser, Debug)]
#[command(
    name = "funkrig",
    version,
    about = "Kriging for functional responses from computer experiments"
)]
pub struct Cli {
    /// Project config file (key = value lines); defaults apply when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Chatty progress and warnings on stderr.
    #[arg(long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic dataset: design.csv, profiles.csv, truth.csv.
    Generate,
    /// Fit the two-stage pipeline; writes model.txt and report.txt.
    Fit,
    /// Predict at query points (variables + t columns) with intervals.
    Predict {
        model: PathBuf,
        queries: PathBuf,
        /// Two-sided tail level for the confidence intervals.
        #[arg(long)]
        kappa: Option<f64>,
        /// Output CSV (default <out_dir>/predictions.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Leave-one-out profiles and the MSCV comparison against a
    /// common-grid-only fit.
    Validate {
        /// Comma-separated 1-based probe run ids (default: 6 spread runs).
        #[arg(long)]
        probes: Option<String>,
    },
    /// Minimize the worst-case predicted response over the design space.
    Optimize {
        model: PathBuf,
        #[arg(long)]
        restarts: Option<usize>,
        /// Categorical variable (by name) maximized over inside the
        /// objective instead of minimized over.
        #[arg(long)]
        sweep: Option<String>,
        /// Index-grid refinement factor for the inner maximization.
        #[arg(long)]
        refine: Option<usize>,
        /// Output JSON (default <out_dir>/optimum.json).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Main-effect curves, one CSV per variable.
    Sensitivity {
        model: PathBuf,
        /// Comma-separated variable names (default: all).
        #[arg(long)]
        variables: Option<String>,
        /// Level count for continuous variables.
        #[arg(long, default_value_t = 11)]
        levels: usize,
        /// Quasi-random nodes for the integrated-out variables.
        #[arg(long)]
        nodes: Option<usize>,
    },
    /// Time one likelihood evaluation on the dense, Kronecker, and
    /// closed-form paths across problem sizes.
    Benchmark {
        /// Problem sizes as NxM pairs.
        #[arg(long, default_value = "30x32,30x64")]
        sizes: String,
        /// Timing repetitions per path; 0 validates agreement only.
        #[arg(long, default_value_t = 3)]
        reps: usize,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => ProjectConfig::load(path)?,
        None => ProjectConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &cli.out_dir {
        cfg.out_dir = dir.display().to_string();
    }
    std::fs::create_dir_all(&cfg.out_dir)?;

    match &cli.command {
        Command::Generate => cmd_generate(&cfg, cli.verbose),
        Command::Fit => cmd_fit(&cfg, cli.verbose),
        Command::Predict {
            model,
            queries,
            kappa,
            out,
        } => cmd_predict(
            &cfg,
            model,
            queries,
            kappa.unwrap_or(cfg.kappa),
            out.as_deref(),
            cli.verbose,
        ),
        Command::Validate { probes } => cmd_validate(&cfg, probes.as_deref(), cli.verbose),
        Command::Optimize {
            model,
            restarts,
            sweep,
            refine,
            out,
        } => cmd_optimize(
            &cfg,
            model,
            *restarts,
            sweep.as_deref(),
            *refine,
            out.as_deref(),
        ),
        Command::Sensitivity {
            model,
            variables,
            levels,
            nodes,
        } => cmd_sensitivity(&cfg, model, variables.as_deref(), *levels, *nodes),
        Command::Benchmark { sizes, reps } => cmd_benchmark(&cfg, sizes, *reps, cli.verbose),
    }
}

fn out_path(cfg: &ProjectConfig, name: &str) -> PathBuf {
    Path::new(&cfg.out_dir).join(name)
}

fn gen_spec_from(cfg: &ProjectConfig) -> Result<GenSpec> {
    let g = &cfg.gen;
    let design = match g.design.as_str() {
        "random" => DesignChoice::Random { n: g.n, p: g.p },
        "turning" => DesignChoice::Turning,
        other => {
            return Err(Error::Config(format!(
                "gen.design must be 'random' or 'turning', got '{other}'"
            )))
        }
    };
    let p = match &design {
        DesignChoice::Random { p, .. } => *p,
        DesignChoice::Turning => 9,
    };
    let alphas = if g.alphas.len() == 1 {
        vec![g.alphas[0]; p]
    } else {
        g.alphas.clone()
    };
    Ok(GenSpec {
        design,
        m: g.m,
        t_step: g.t_step,
        mu0: g.mu0,
        t_slope: g.t_slope,
        x_slopes: g.x_slopes.clone(),
        sigma2: g.sigma2,
        params: CorrParams::new(alphas, g.beta, cfg.exponent()?, 0.0)?,
        keep_lo: g.keep_lo,
        keep_hi: g.keep_hi,
    })
}

fn cmd_generate(cfg: &ProjectConfig, verbose: bool) -> Result<()> {
    let spec = gen_spec_from(cfg)?;
    let out = generate(&spec, cfg.seed)?;
    let design_path = out_path(cfg, "design.csv");
    let profiles_path = out_path(cfg, "profiles.csv");
    let truth_path = out_path(cfg, "truth.csv");
    io::write_design_csv(&design_path, &out.dataset.design)?;
    io::write_profiles_csv(&profiles_path, &out.dataset.runs)?;
    io::write_profiles_csv(&truth_path, &out.truth.runs)?;
    let observed: usize = out.dataset.runs.iter().map(|r| r.len()).sum();
    println!(
        "generated {} runs on a {}-point grid ({} observations kept of {}); wrote {}, {}, {}",
        out.dataset.n_runs(),
        spec.m,
        observed,
        out.dataset.n_runs() * spec.m,
        design_path.display(),
        profiles_path.display(),
        truth_path.display()
    );
    if verbose {
        eprintln!("seed = {}, regular = {}", cfg.seed, out.dataset.is_regular());
    }
    Ok(())
}

fn load_dataset(cfg: &ProjectConfig) -> Result<FunctionalDataset> {
    let design = io::read_design_csv(Path::new(&cfg.design_path), &cfg.vars)?;
    let runs = io::read_profiles_csv(Path::new(&cfg.profiles_path))?;
    FunctionalDataset::new(design, runs)
}

fn pipeline_opts(cfg: &ProjectConfig) -> Result<PipelineOpts> {
    Ok(PipelineOpts {
        d: cfg.exponent()?,
        nugget: cfg.nugget,
        decay: cfg.decay,
        t_powers: cfg.t_powers.clone(),
        x_linear: cfg.x_linear,
        em: EmOpts {
            q: cfg.em_q,
            delta: cfg.em_delta,
            max_iter: cfg.em_max_iter,
            mode: cfg.em_mode,
            seed: cfg.seed,
            fit: FitOpts {
                n_restarts: cfg.n_restarts.min(2),
                seed: cfg.seed,
                ..Default::default()
            },
        },
        stage_fit: FitOpts {
            n_restarts: cfg.n_restarts,
            seed: cfg.seed,
            ..Default::default()
        },
    })
}

fn write_report(
    cfg: &ProjectConfig,
    dataset: &FunctionalDataset,
    pipe: &FittedPipeline,
) -> Result<PathBuf> {
    let mut s = String::new();
    let n_obs: usize = dataset.runs.iter().map(|r| r.len()).sum();
    let _ = writeln!(s, "funkrig fit report");
    let _ = writeln!(s, "==================");
    let _ = writeln!(
        s,
        "design: {} (n = {} runs, p = {} variables)",
        cfg.design_path,
        dataset.n_runs(),
        dataset.design.n_vars()
    );
    let _ = writeln!(
        s,
        "profiles: {} ({} observations)",
        cfg.profiles_path, n_obs
    );
    let kind = if pipe.regular { "regular" } else { "irregular" };
    let _ = writeln!(
        s,
        "grid: {kind} (m = {} union grid points)",
        dataset.union_grid().len()
    );
    if pipe.decay_lambda != 0.0 {
        let _ = writeln!(s, "decay transform: lambda = {}", pipe.decay_lambda);
    } else {
        let _ = writeln!(s, "decay transform: none");
    }
    let _ = writeln!(s, "stage 1:");
    let _ = writeln!(
        s,
        "  t terms: {:?}  beta0 = {:.6}",
        pipe.stage.t_powers, pipe.stage.beta0
    );
    let _ = writeln!(
        s,
        "  x terms: {:?}  alpha0 = {:?}",
        pipe.stage.x_terms,
        pipe.stage
            .alpha0
            .iter()
            .map(|a| (a * 1e6).round() / 1e6)
            .collect::<Vec<_>>()
    );
    let _ = writeln!(s, "basis: {}", pipe.model.basis);
    let _ = writeln!(
        s,
        "correlation: d = {}, nugget = {}",
        cfg.d, pipe.model.params.nugget
    );
    let _ = writeln!(s, "estimates:");
    let _ = writeln!(
        s,
        "  mu = {:?}",
        pipe.model.mu.iter().copied().collect::<Vec<_>>()
    );
    let _ = writeln!(s, "  sigma2 = {}", pipe.model.sigma2);
    let _ = writeln!(s, "  alphas = {:?}", pipe.model.params.alphas);
    let _ = writeln!(s, "  beta = {}", pipe.model.params.beta);
    if let Some(diag) = &pipe.em {
        let _ = writeln!(s, "EM:");
        let mode = match cfg.em_mode {
            crate::em::EStepMode::Expectation => "expectation",
            crate::em::EStepMode::Sampling => "sampling",
        };
        let _ = writeln!(
            s,
            "  mode = {mode}, q = {}, delta = {}, max_iter = {}",
            cfg.em_q, cfg.em_delta, cfg.em_max_iter
        );
        let _ = writeln!(s, "  iter  param-delta     q-value");
        for (k, (pd, qv)) in diag
            .param_deltas
            .iter()
            .zip(&diag.q_values)
            .enumerate()
        {
            let _ = writeln!(s, "  {:<5} {:<15.6e} {:.6e}", k + 1, pd, qv);
        }
        let status = if diag.converged {
            "converged"
        } else {
            "max_iter reached without convergence"
        };
        let _ = writeln!(
            s,
            "  terminated after {} iterations ({status})",
            diag.iterations
        );
        if let Some((arg, max)) = diag
            .prop2
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        {
            let _ = writeln!(
                s,
                "  contraction diagnostic: max = {max:.4} at run {} ({})",
                arg + 1,
                if *max < 1.0 {
                    "< 1: sweeps contract"
                } else {
                    ">= 1: contraction not certified"
                }
            );
        }
    }
    let path = out_path(cfg, "report.txt");
    std::fs::write(&path, s)?;
    Ok(path)
}

fn cmd_fit(cfg: &ProjectConfig, verbose: bool) -> Result<()> {
    let dataset = load_dataset(cfg)?;
    let opts = pipeline_opts(cfg)?;
    let pipe = fit_pipeline(&dataset, &opts)?;
    let model_path = out_path(cfg, "model.txt");
    save_model(&model_path, &pipe.model, pipe.decay_lambda)?;
    let report_path = write_report(cfg, &dataset, &pipe)?;
    if let Some(diag) = &pipe.em {
        if !diag.converged {
            eprintln!(
                "warning: EM hit max_iter = {} without meeting delta = {}",
                cfg.em_max_iter, cfg.em_delta
            );
        }
        println!(
            "fitted irregular data via EM ({} iterations); model: {}, report: {}",
            diag.iterations,
            model_path.display(),
            report_path.display()
        );
    } else {
        println!(
            "fitted regular data; model: {}, report: {}",
            model_path.display(),
            report_path.display()
        );
    }
    if verbose {
        eprintln!(
            "sigma2 = {}, beta = {}, alphas = {:?}",
            pipe.model.sigma2, pipe.model.params.beta, pipe.model.params.alphas
        );
    }
    Ok(())
}

fn cmd_predict(
    cfg: &ProjectConfig,
    model_path: &Path,
    queries: &Path,
    kappa: f64,
    out: Option<&Path>,
    verbose: bool,
) -> Result<()> {
    if !(0.0 < kappa && kappa < 1.0) {
        return Err(Error::Config("kappa must be in (0,1)".into()));
    }
    let saved = load_model(model_path)?;
    let rows = io::read_query_csv(queries, saved.model.design.names())?;
    let mut preds = Vec::with_capacity(rows.len());
    let mut extrapolations = 0usize;
    for (idx, (x, t)) in rows.iter().enumerate() {
        let p = saved.predict_original(x, *t, kappa);
        if p.extrapolation {
            extrapolations += 1;
            if verbose {
                eprintln!(
                    "warning: query row {} is outside the design space",
                    idx + 1
                );
            }
        }
        preds.push((p.value, p.lo, p.hi));
    }
    let out = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| out_path(cfg, "predictions.csv"));
    io::write_predictions_csv(&out, &preds)?;
    println!(
        "wrote {} predictions to {}{}",
        preds.len(),
        out.display(),
        if extrapolations > 0 {
            format!(" ({extrapolations} extrapolating)")
        } else {
            String::new()
        }
    );
    Ok(())
}

fn parse_probes(spec: Option<&str>, n: usize) -> Result<Vec<usize>> {
    match spec {
        Some(list) => list
            .split(',')
            .map(|p| {
                let id: usize = p
                    .trim()
                    .parse()
                    .map_err(|_| Error::Data(format!("bad probe run id '{p}'")))?;
                if id == 0 || id > n {
                    return Err(Error::Data(format!(
                        "probe run id {id} out of 1..={n}"
                    )));
                }
                Ok(id - 1)
            })
            .collect(),
        None => {
            let k = n.min(6);
            let mut out: Vec<usize> = (0..k)
                .map(|i| (i * (n - 1)) / (k.max(2) - 1))
                .collect();
            out.dedup();
            Ok(out)
        }
    }
}

fn cmd_validate(cfg: &ProjectConfig, probes: Option<&str>, verbose: bool) -> Result<()> {
    let dataset = load_dataset(cfg)?;
    let opts = pipeline_opts(cfg)?;
    let pipe = fit_pipeline(&dataset, &opts)?;
    let probes = parse_probes(probes, dataset.n_runs())?;

    // Leave-one-out profiles with intervals, on the raw scale.
    let mut rows = Vec::new();
    for &i in &probes {
        let design = pipe.model.design.without_run(i);
        let y = pipe.model.y.clone().remove_row(i);
        let reduced = fit_with_params(
            &design,
            &pipe.model.grid,
            &y,
            &pipe.model.basis,
            &pipe.model.params,
        )?;
        let x = dataset.design.row(i);
        for (pos, &t) in dataset.runs[i].t.iter().enumerate() {
            let mut p = reduced.predict_ci(x, t, cfg.kappa);
            let factor = (-pipe.decay_lambda * t).exp();
            p.value *= factor;
            p.lo *= factor;
            p.hi *= factor;
            rows.push((i + 1, t, dataset.runs[i].y[pos], p.value, p.lo, p.hi));
        }
    }
    let loo_path = out_path(cfg, "loo_profiles.csv");
    io::write_loo_csv(&loo_path, &rows)?;

    let cmp = mscv_comparison(&dataset, &pipe, &probes, &opts)?;
    let mut report = String::new();
    let _ = writeln!(report, "funkrig validation report");
    let _ = writeln!(report, "=========================");
    let _ = writeln!(
        report,
        "probes: {:?} (1-based)",
        probes.iter().map(|i| i + 1).collect::<Vec<_>>()
    );
    let _ = writeln!(
        report,
        "MSCV (EM-completed fit):     {:.6}",
        cmp.em_completed
    );
    let _ = writeln!(
        report,
        "MSCV (common-grid-only fit): {:.6}",
        cmp.common_grid
    );
    let verdict = if cmp.em_completed < cmp.common_grid {
        "completion onto the union grid improves leave-one-out prediction"
    } else {
        "completion did not improve leave-one-out prediction on these probes"
    };
    let _ = writeln!(report, "{verdict}");
    let mscv_path = out_path(cfg, "mscv_report.txt");
    std::fs::write(&mscv_path, &report)?;
    println!(
        "MSCV: em-completed = {:.6}, common-grid = {:.6}; wrote {} and {}",
        cmp.em_completed,
        cmp.common_grid,
        loo_path.display(),
        mscv_path.display()
    );
    if verbose {
        eprint!("{report}");
    }
    Ok(())
}

fn var_index(saved: &SavedModel, name: &str) -> Result<usize> {
    saved
        .model
        .design
        .names()
        .iter()
        .position(|n| n == name)
        .ok_or_else(|| Error::Data(format!("unknown variable '{name}'")))
}

fn cmd_optimize(
    cfg: &ProjectConfig,
    model_path: &Path,
    restarts: Option<usize>,
    sweep: Option<&str>,
    refine: Option<usize>,
    out: Option<&Path>,
) -> Result<()> {
    let saved = load_model(model_path)?;
    let sweep_var = sweep.map(|name| var_index(&saved, name)).transpose()?;
    if let Some(j) = sweep_var {
        if !saved.model.design.kind(j).is_categorical() {
            return Err(Error::Data(format!(
                "swept variable '{}' must be categorical",
                sweep.unwrap()
            )));
        }
    }
    let opts = MinimaxOpts {
        restarts: restarts.unwrap_or(20),
        seed: cfg.seed,
        sweep_var,
        refine: refine.unwrap_or(1),
        ..Default::default()
    };
    // The model predicts on the transformed scale; with a positive decay
    // rate the worst case must be searched on the raw scale, which the
    // exp(-λt) factor makes t-dependent. Evaluate through a raw-scale view.
    let result = if saved.decay_lambda == 0.0 {
        analysis::minimax_optimize(&saved.model, &opts)
    } else {
        minimax_raw_scale(&saved, &opts)
    };
    let out = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| out_path(cfg, "optimum.json"));
    let json = serde_json::to_string_pretty(&result)
        .map_err(|e| Error::Data(format!("serializing optimum: {e}")))?;
    std::fs::write(&out, json)?;
    println!(
        "optimum: worst value {:.6} at t = {} (x* = {:?}); wrote {}",
        result.worst_value,
        result.worst_t,
        result
            .x_star
            .iter()
            .map(|v| (v * 1e4).round() / 1e4)
            .collect::<Vec<_>>(),
        out.display()
    );
    Ok(())
}

/// Worst-case search on the raw scale for decay-transformed models: the
/// inner max scans the grid with the back-transform applied pointwise.
fn minimax_raw_scale(saved: &SavedModel, opts: &MinimaxOpts) -> analysis::OptimResult {
    use crate::util::optim::nelder_mead_box;
    use crate::util::quasi::ScrambledHalton;

    let model = &saved.model;
    let lambda = saved.decay_lambda;
    let p = model.design.n_vars();
    let cont_vars: Vec<usize> = (0..p)
        .filter(|&j| !model.design.kind(j).is_categorical() && Some(j) != opts.sweep_var)
        .collect();
    let (lo, hi): (Vec<f64>, Vec<f64>) = cont_vars
        .iter()
        .map(|&j| match model.design.kind(j) {
            crate::design::VarKind::Continuous { lo, hi } => (*lo, *hi),
            _ => unreachable!(),
        })
        .unzip();
    let t_grid = model.grid.clone();

    let inner = |x: &[f64]| -> (f64, f64) {
        let mut best = (t_grid[0], f64::NEG_INFINITY);
        for &t in &t_grid {
            let v = model.predict(x, t) * (-lambda * t).exp();
            if v > best.1 {
                best = (t, v);
            }
        }
        best
    };

    let mut trace = Vec::new();
    let mut best: Option<(Vec<f64>, f64, f64)> = None;
    let mut evals = 0usize;
    let mut starts: Vec<Vec<f64>> = model
        .design
        .rows()
        .iter()
        .map(|row| cont_vars.iter().map(|&j| row[j]).collect())
        .collect();
    let mut halton = ScrambledHalton::new(cont_vars.len().max(1), opts.seed);
    for u in halton.take_points(opts.restarts) {
        starts.push(
            u.iter()
                .zip(lo.iter().zip(&hi))
                .map(|(v, (l, h))| l + v * (h - l))
                .collect(),
        );
    }
    for start in &starts {
        let mut local: Option<(Vec<f64>, f64, f64)> = None;
        let mut objective = |xc: &[f64]| -> f64 {
            evals += 1;
            let x: Vec<f64> = {
                let mut full = vec![0.0; p];
                for (pos, &j) in cont_vars.iter().enumerate() {
                    full[j] = xc[pos];
                }
                full
            };
            let (t, v) = inner(&x);
            if local.as_ref().is_none_or(|(_, _, b)| v < *b) {
                local = Some((x, t, v));
            }
            v
        };
        if cont_vars.is_empty() {
            objective(&[]);
        } else {
            nelder_mead_box(&mut objective, start, &lo, &hi, &opts.nm);
        }
        if let Some((x, t, v)) = local {
            trace.push(v);
            if best.as_ref().is_none_or(|(_, _, b)| v < *b) {
                best = Some((x, t, v));
            }
        }
    }
    let (x_star, worst_t, worst_value) = best.expect("at least one start");
    analysis::OptimResult {
        x_star,
        worst_t,
        worst_level: None,
        worst_value,
        trace,
        evals,
        budget_exhausted: false,
    }
}

fn cmd_sensitivity(
    cfg: &ProjectConfig,
    model_path: &Path,
    variables: Option<&str>,
    levels: usize,
    nodes: Option<usize>,
) -> Result<()> {
    let saved = load_model(model_path)?;
    let vars: Vec<usize> = match variables {
        Some(list) => list
            .split(',')
            .map(|name| var_index(&saved, name.trim()))
            .collect::<Result<_>>()?,
        None => (0..saved.model.design.n_vars()).collect(),
    };
    let nodes = nodes.unwrap_or(analysis::DEFAULT_MC_NODES);
    let mut written = Vec::new();
    for &j in &vars {
        let level_grid = analysis::default_levels(&saved.model, j, levels);
        let curve = analysis::main_effects(&saved.model, j, &level_grid, nodes, cfg.seed);
        let mut rows = Vec::new();
        for (li, &level) in curve.levels.iter().enumerate() {
            for (gi, &t) in curve.grid.iter().enumerate() {
                // Back to the raw scale.
                let effect = curve.values[(li, gi)] * (-saved.decay_lambda * t).exp();
                rows.push((level, t, effect));
            }
        }
        let name = &saved.model.design.names()[j];
        let path = out_path(cfg, &format!("effect_{name}.csv"));
        io::write_effect_csv(&path, &rows)?;
        written.push(path.display().to_string());
    }
    println!("wrote {} effect curves: {}", written.len(), written.join(", "));
    Ok(())
}

fn parse_sizes(spec: &str) -> Result<Vec<(usize, usize)>> {
    spec.split(',')
        .map(|pair| {
            pair.trim()
                .split_once(['x', 'X'])
                .and_then(|(n, m)| Some((n.parse().ok()?, m.parse().ok()?)))
                .ok_or_else(|| {
                    Error::Config(format!("bad size '{pair}', expected NxM"))
                })
        })
        .collect()
}

fn median(mut times: Vec<f64>) -> f64 {
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times[times.len() / 2]
}

fn cmd_benchmark(cfg: &ProjectConfig, sizes: &str, reps: usize, verbose: bool) -> Result<()> {
    let sizes = parse_sizes(sizes)?;
    let basis = BasisSpec::new(vec![1], vec![])?;
    let mut rows = Vec::new();
    for &(n, m) in &sizes {
        let spec = GenSpec {
            design: DesignChoice::Random { n, p: 2 },
            m,
            t_step: 1.0,
            mu0: 5.0,
            t_slope: 0.1,
            x_slopes: vec![],
            sigma2: 2.0,
            params: CorrParams::new(
                vec![1.0, 1.0],
                0.2,
                crate::corr::PowerExponent::Exponential,
                0.0,
            )?,
            keep_lo: 1.0,
            keep_hi: 1.0,
        };
        let data = generate(&spec, cfg.seed)?;
        let ds = &data.dataset;
        let y = ds.response_matrix()?;
        let grid = ds.union_grid().to_vec();
        let params = spec.params.clone();

        // All three paths must agree on the objective value.
        let dense_value = oracle::DenseSystem::build_with_cap(
            ds,
            &basis,
            &params,
            BENCH_DENSE_CAP,
        )?
        .objective();
        let kron_value =
            kriging::neg_profile_loglik_dense_rt(&params, &ds.design, &grid, &y, &basis)?;
        let closed_value =
            kriging::neg_profile_loglik(&params, &ds.design, &grid, &y, &basis)?;
        let tol = 1e-6 * (1.0 + dense_value.abs());
        if (dense_value - kron_value).abs() > tol || (dense_value - closed_value).abs() > tol
        {
            return Err(Error::NumericalBreakdown(format!(
                "likelihood paths disagree at n={n}, m={m}: dense {dense_value}, kron {kron_value}, closed {closed_value}"
            )));
        }
        if verbose {
            eprintln!("n={n} m={m}: all paths agree at {dense_value:.6}");
        }
        if reps == 0 {
            continue;
        }

        let time_path = |f: &dyn Fn() -> f64| -> f64 {
            let mut times = Vec::with_capacity(reps);
            for _ in 0..reps {
                let start = Instant::now();
                let v = f();
                let dt = start.elapsed().as_secs_f64();
                std::hint::black_box(v);
                times.push(dt);
            }
            median(times)
        };
        let dense_time = time_path(&|| {
            oracle::DenseSystem::build_with_cap(ds, &basis, &params, BENCH_DENSE_CAP)
                .map(|s| s.objective())
                .unwrap_or(f64::NAN)
        });
        rows.push((n, m, "dense".to_string(), dense_time, dense_value));
        let kron_time = time_path(&|| {
            kriging::neg_profile_loglik_dense_rt(&params, &ds.design, &grid, &y, &basis)
                .unwrap_or(f64::NAN)
        });
        rows.push((n, m, "kronecker".to_string(), kron_time, kron_value));
        let closed_time = time_path(&|| {
            kriging::neg_profile_loglik(&params, &ds.design, &grid, &y, &basis)
                .unwrap_or(f64::NAN)
        });
        rows.push((n, m, "closed-form".to_string(), closed_time, closed_value));
        println!(
            "n={n} m={m}: dense {dense_time:.4e}s, kronecker {kron_time:.4e}s, closed-form {closed_time:.4e}s"
        );
    }
    if reps == 0 {
        println!("validation-only run: all paths agree; no timing rows written");
        return Ok(());
    }
    let path = out_path(cfg, "timings.csv");
    io::write_timing_csv(&path, &rows)?;
    println!("wrote {}", path.display());
    Ok(())
}
