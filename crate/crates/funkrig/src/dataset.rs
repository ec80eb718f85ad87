//! Functional datasets: per-run profiles over run-specific abscissae, the
//! union grid, and the regular/irregular classification.

use nalgebra::DMatrix;

use crate::design::Design;
use crate::error::{Error, Result};

/// One run's functional response: values `y` observed at strictly increasing
/// abscissae `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub t: Vec<f64>,
    pub y: Vec<f64>,
}

impl Profile {
    /// An empty profile (a run with no observations) is allowed; the EM
    /// machinery treats it as fully missing.
    pub fn new(t: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if t.len() != y.len() {
            return Err(Error::Data(format!(
                "profile has {} abscissae but {} values",
                t.len(),
                y.len()
            )));
        }
        for w in t.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidGrid(format!(
                    "abscissae not strictly increasing at t = {}",
                    w[1]
                )));
            }
        }
        Ok(Profile { t, y })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Mean response; 0 for an empty profile.
    pub fn mean(&self) -> f64 {
        if self.y.is_empty() {
            return 0.0;
        }
        self.y.iter().sum::<f64>() / self.y.len() as f64
    }
}

/// A design together with one profile per run.
///
/// The union grid (sorted union of every run's abscissae) and each run's
/// observation mask into it are computed at construction. The dataset is
/// regular when every run observes the whole union grid.
#[derive(Debug, Clone)]
pub struct FunctionalDataset {
    pub design: Design,
    pub runs: Vec<Profile>,
    grid: Vec<f64>,
    /// Per run, the union-grid index of each of its abscissae (sorted).
    observed: Vec<Vec<usize>>,
}

impl FunctionalDataset {
    pub fn new(design: Design, runs: Vec<Profile>) -> Result<Self> {
        if design.n_runs() != runs.len() {
            return Err(Error::Data(format!(
                "design has {} runs but {} profiles given",
                design.n_runs(),
                runs.len()
            )));
        }
        let mut grid: Vec<f64> = runs.iter().flat_map(|r| r.t.iter().copied()).collect();
        grid.sort_by(|a, b| a.partial_cmp(b).expect("non-finite abscissa"));
        grid.dedup();
        let observed = runs
            .iter()
            .map(|r| {
                r.t.iter()
                    .map(|t| {
                        grid.binary_search_by(|g| g.partial_cmp(t).unwrap())
                            .expect("abscissa present in union grid")
                    })
                    .collect()
            })
            .collect();
        Ok(FunctionalDataset {
            design,
            runs,
            grid,
            observed,
        })
    }

    /// Regular dataset from a response matrix (rows = runs) on a shared grid.
    pub fn from_matrix(design: Design, grid: Vec<f64>, y: &DMatrix<f64>) -> Result<Self> {
        if y.nrows() != design.n_runs() || y.ncols() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: design.n_runs() * grid.len(),
                got: y.nrows() * y.ncols(),
            });
        }
        let runs = (0..y.nrows())
            .map(|i| Profile::new(grid.clone(), y.row(i).iter().copied().collect()))
            .collect::<Result<Vec<_>>>()?;
        FunctionalDataset::new(design, runs)
    }

    pub fn n_runs(&self) -> usize {
        self.runs.len()
    }

    /// Sorted union of all runs' abscissae.
    pub fn union_grid(&self) -> &[f64] {
        &self.grid
    }

    /// Union-grid indices observed by run `i`.
    pub fn observed_indices(&self, i: usize) -> &[usize] {
        &self.observed[i]
    }

    /// Union-grid indices missing from run `i`.
    pub fn missing_indices(&self, i: usize) -> Vec<usize> {
        let mut mask = vec![true; self.grid.len()];
        for &j in &self.observed[i] {
            mask[j] = false;
        }
        mask.iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(j, _)| j)
            .collect()
    }

    pub fn is_regular(&self) -> bool {
        self.runs.iter().all(|r| r.len() == self.grid.len())
    }

    /// Response matrix on the union grid; fails when the data are irregular.
    pub fn response_matrix(&self) -> Result<DMatrix<f64>> {
        if !self.is_regular() {
            return Err(Error::NotRegularGrid(
                "response matrix requires every run on the union grid".into(),
            ));
        }
        let n = self.n_runs();
        let m = self.grid.len();
        Ok(DMatrix::from_fn(n, m, |i, j| self.runs[i].y[j]))
    }

    /// Number of runs observed at each union-grid point.
    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.grid.len()];
        for obs in &self.observed {
            for &j in obs {
                counts[j] += 1;
            }
        }
        counts
    }

    /// Dataset with run `i` removed (the union grid is recomputed).
    pub fn without_run(&self, i: usize) -> Result<FunctionalDataset> {
        let runs = self
            .runs
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != i)
            .map(|(_, r)| r.clone())
            .collect();
        FunctionalDataset::new(self.design.without_run(i), runs)
    }

    /// Dataset restricted to abscissae observed by every run.
    pub fn common_grid(&self) -> Result<FunctionalDataset> {
        let counts = self.counts();
        let keep: Vec<usize> = (0..self.grid.len())
            .filter(|&j| counts[j] == self.n_runs())
            .collect();
        if keep.is_empty() {
            return Err(Error::Data("runs share no common abscissae".into()));
        }
        let runs = self
            .runs
            .iter()
            .zip(&self.observed)
            .map(|(run, obs)| {
                let pairs: Vec<(f64, f64)> = obs
                    .iter()
                    .zip(run.t.iter().zip(&run.y))
                    .filter(|(j, _)| keep.contains(j))
                    .map(|(_, (t, y))| (*t, *y))
                    .collect();
                Profile::new(
                    pairs.iter().map(|p| p.0).collect(),
                    pairs.iter().map(|p| p.1).collect(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        FunctionalDataset::new(self.design.clone(), runs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> FunctionalDataset {
        let design = Design::unit_continuous(vec![vec![0.1], vec![0.5], vec![0.9]]).unwrap();
        let runs = vec![
            Profile::new(vec![1., 2., 3.], vec![1., 2., 3.]).unwrap(),
            Profile::new(vec![1., 2.], vec![4., 5.]).unwrap(),
            Profile::new(vec![2., 3.], vec![6., 7.]).unwrap(),
        ];
        FunctionalDataset::new(design, runs).unwrap()
    }

    #[test]
    fn union_grid_and_counts() {
        let ds = toy();
        assert_eq!(ds.union_grid(), &[1., 2., 3.]);
        assert_eq!(ds.counts(), vec![2, 3, 2]);
        assert!(!ds.is_regular());
        assert_eq!(ds.missing_indices(1), vec![2]);
        assert_eq!(ds.missing_indices(0), Vec::<usize>::new());
    }

    #[test]
    fn common_grid_restricts() {
        let ds = toy().common_grid().unwrap();
        assert_eq!(ds.union_grid(), &[2.0]);
        assert!(ds.is_regular());
        assert_eq!(ds.runs[2].y, vec![6.0]);
    }

    #[test]
    fn rejects_nonincreasing_abscissae() {
        assert!(matches!(
            Profile::new(vec![1., 1.], vec![0., 0.]),
            Err(Error::InvalidGrid(_))
        ));
    }
}
