//! Synthetic data generation: Gaussian-process realizations of the exact
//! model on a regular grid, a Latin-hypercube design sampler, and the tail
//! truncation that turns regular data into irregular profiles.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::corr::{build_r_t, build_r_x, CorrParams};
use crate::dataset::{FunctionalDataset, Profile};
use crate::design::{turning_design, Design};
use crate::error::{Error, Result};

/// Which design the generator uses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DesignChoice {
    /// Latin hypercube on [0,1]^p with `n` runs.
    Random { n: usize, p: usize },
    /// The bundled 30-run hard-turning design.
    Turning,
}

/// Ground-truth specification for the generator.
#[derive(Debug, Clone)]
pub struct GenSpec {
    pub design: DesignChoice,
    /// Number of grid points; the grid is 0, t_step, ..., (m-1)·t_step.
    pub m: usize,
    pub t_step: f64,
    pub mu0: f64,
    /// Linear trend coefficient in t (0 disables the term).
    pub t_slope: f64,
    /// Per-variable linear trend coefficients (empty disables).
    pub x_slopes: Vec<f64>,
    pub sigma2: f64,
    pub params: CorrParams,
    /// Tail truncation: each run keeps a uniform fraction of its profile in
    /// [keep_lo, keep_hi]. The first run always keeps everything so the
    /// union grid equals the generating grid.
    pub keep_lo: f64,
    pub keep_hi: f64,
}

impl GenSpec {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.t_step <= 0.0 {
            return Err(Error::Config("grid needs m >= 1 and t_step > 0".into()));
        }
        if !(0.0 < self.keep_lo && self.keep_lo <= self.keep_hi && self.keep_hi <= 1.0) {
            return Err(Error::Config(
                "truncation range must satisfy 0 < keep_lo <= keep_hi <= 1".into(),
            ));
        }
        if self.sigma2 <= 0.0 {
            return Err(Error::Config("sigma2 must be positive".into()));
        }
        self.params.validate()
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..self.m).map(|j| j as f64 * self.t_step).collect()
    }

    fn mean_at(&self, x: &[f64], t: f64) -> f64 {
        let mut v = self.mu0 + self.t_slope * t;
        for (j, &c) in self.x_slopes.iter().enumerate() {
            v += c * x[j];
        }
        v
    }
}

/// Latin hypercube sample on [0,1]^p: one stratum per run per variable,
/// jittered uniformly, with independently shuffled columns.
pub fn lhs_design(n: usize, p: usize, rng: &mut ChaCha8Rng) -> Result<Design> {
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(p);
    for _ in 0..p {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        columns.push(
            strata
                .iter()
                .map(|&s| (s as f64 + rng.random::<f64>()) / n as f64)
                .collect(),
        );
    }
    let rows = (0..n)
        .map(|i| (0..p).map(|j| columns[j][i]).collect())
        .collect();
    Design::unit_continuous(rows)
}

/// Samples one realization of the exact model on the regular grid:
/// mean plus σ·L_X·E·L_t' with E iid standard normal, so the stacked field
/// has covariance σ²·R_X ⊗ R_t.
pub fn sample_field(
    design: &Design,
    grid: &[f64],
    spec: &GenSpec,
    rng: &mut ChaCha8Rng,
) -> Result<DMatrix<f64>> {
    let rx = build_r_x(design, &spec.params)?;
    let rt = build_r_t(grid, spec.params.beta, spec.params.d, spec.params.nugget)?;
    let lx = rx
        .matrix()
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SingularMatrix("R_X in generator".into()))?
        .l();
    let lt = rt
        .dense()
        .cholesky()
        .ok_or_else(|| Error::SingularMatrix("R_t in generator".into()))?
        .l();
    let (n, m) = (design.n_runs(), grid.len());
    let eps: DMatrix<f64> = DMatrix::from_fn(n, m, |_, _| StandardNormal.sample(rng));
    let field = &lx * eps * lt.transpose() * spec.sigma2.sqrt();
    Ok(DMatrix::from_fn(n, m, |i, j| {
        field[(i, j)] + spec.mean_at(design.row(i), grid[j])
    }))
}

/// Output of [`generate`]: the truncated dataset presented to the pipeline
/// and the full regular truth withheld for validation.
#[derive(Debug, Clone)]
pub struct Generated {
    pub dataset: FunctionalDataset,
    pub truth: FunctionalDataset,
}

/// Draws a design (if random), samples the field, and truncates each run's
/// tail. Deterministic under the seed.
pub fn generate(spec: &GenSpec, seed: u64) -> Result<Generated> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let design = match &spec.design {
        DesignChoice::Random { n, p } => lhs_design(*n, *p, &mut rng)?,
        DesignChoice::Turning => turning_design(),
    };
    if spec.x_slopes.len() > design.n_vars() {
        return Err(Error::Config(format!(
            "{} x slopes for {} design variables",
            spec.x_slopes.len(),
            design.n_vars()
        )));
    }
    if spec.params.alphas.len() != design.n_vars() {
        return Err(Error::Config(format!(
            "{} correlation rates for {} design variables",
            spec.params.alphas.len(),
            design.n_vars()
        )));
    }
    let grid = spec.grid();
    let truth_matrix = sample_field(&design, &grid, spec, &mut rng)?;
    let truth = FunctionalDataset::from_matrix(design.clone(), grid.clone(), &truth_matrix)?;

    let m = grid.len();
    let runs = (0..design.n_runs())
        .map(|i| {
            let keep = if i == 0 {
                m
            } else {
                let frac = rng.random_range(spec.keep_lo..=spec.keep_hi);
                ((frac * m as f64).ceil() as usize).clamp(1, m)
            };
            Profile::new(
                grid[..keep].to_vec(),
                (0..keep).map(|j| truth_matrix[(i, j)]).collect(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let dataset = FunctionalDataset::new(design, runs)?;
    Ok(Generated { dataset, truth })
}
