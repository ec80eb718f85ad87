//! Experimental designs: variable kinds, settings matrices, and the bundled
//! 30-run hard-turning design.

use crate::error::{Error, Result};

/// Kind of an experimental variable.
///
/// Continuous variables carry their declared range, which is used to rescale
/// distances to [0,1] so correlation rates are range-free. Categorical
/// variables are coded as integer levels `1..=levels`.
#[derive(Debug, Clone, PartialEq)]
pub enum VarKind {
    Continuous { lo: f64, hi: f64 },
    Categorical { levels: usize },
}

impl VarKind {
    pub fn is_categorical(&self) -> bool {
        matches!(self, VarKind::Categorical { .. })
    }

    /// Width used to normalize distances; 1 for categorical or degenerate
    /// ranges.
    pub fn scale(&self) -> f64 {
        match self {
            VarKind::Continuous { lo, hi } if hi > lo => hi - lo,
            _ => 1.0,
        }
    }

    fn check(&self, name: &str, row: usize, v: f64) -> Result<()> {
        match self {
            VarKind::Continuous { lo, hi } => {
                let tol = 1e-9 * self.scale();
                if v < lo - tol || v > hi + tol {
                    return Err(Error::Data(format!(
                        "run {}: variable {name} = {v} outside declared range [{lo}, {hi}]",
                        row + 1
                    )));
                }
            }
            VarKind::Categorical { levels } => {
                if v.fract() != 0.0 || v < 1.0 || v > *levels as f64 {
                    return Err(Error::Data(format!(
                        "run {}: variable {name} = {v} is not a level code in 1..={levels}",
                        row + 1
                    )));
                }
            }
        }
        Ok(())
    }
}

/// An n-run experimental design over p variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    rows: Vec<Vec<f64>>,
    names: Vec<String>,
    kinds: Vec<VarKind>,
}

impl Design {
    /// Builds a design, validating every coordinate against its variable kind.
    pub fn new(rows: Vec<Vec<f64>>, names: Vec<String>, kinds: Vec<VarKind>) -> Result<Self> {
        if names.len() != kinds.len() {
            return Err(Error::Data(format!(
                "{} variable names but {} kinds",
                names.len(),
                kinds.len()
            )));
        }
        if rows.is_empty() {
            return Err(Error::Data("design has no runs".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != kinds.len() {
                return Err(Error::Data(format!(
                    "run {}: {} coordinates, expected {}",
                    i + 1,
                    row.len(),
                    kinds.len()
                )));
            }
            for ((v, kind), name) in row.iter().zip(&kinds).zip(&names) {
                kind.check(name, i, *v)?;
            }
        }
        Ok(Design { rows, names, kinds })
    }

    /// Design with anonymous continuous variables on [0,1]; handy in tests
    /// and synthetic studies.
    pub fn unit_continuous(rows: Vec<Vec<f64>>) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        let names = (1..=p).map(|j| format!("x{j}")).collect();
        let kinds = vec![VarKind::Continuous { lo: 0.0, hi: 1.0 }; p];
        Design::new(rows, names, kinds)
    }

    pub fn n_runs(&self) -> usize {
        self.rows.len()
    }

    pub fn n_vars(&self) -> usize {
        self.kinds.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn kinds(&self) -> &[VarKind] {
        &self.kinds
    }

    pub fn kind(&self, j: usize) -> &VarKind {
        &self.kinds[j]
    }

    /// Returns a copy without run `i`.
    pub fn without_run(&self, i: usize) -> Design {
        let rows = self
            .rows
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != i)
            .map(|(_, r)| r.clone())
            .collect();
        Design {
            rows,
            names: self.names.clone(),
            kinds: self.kinds.clone(),
        }
    }

    /// True when every coordinate of `x` lies inside its declared range
    /// (levels for categorical variables). Used to flag extrapolation.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.kinds.len()
            && x.iter()
                .zip(&self.kinds)
                .all(|(v, k)| k.check("", 0, *v).is_ok())
    }
}

/// Variable names of the bundled hard-turning design.
pub const TURNING_VAR_NAMES: [&str; 9] = [
    "edge_shape",
    "chamfer_angle",
    "chamfer_length",
    "edge_radius",
    "rake_angle",
    "nose_radius",
    "cutting_speed",
    "feed_rate",
    "cut_depth",
];

// Level-coded settings of the 30-run orthogonal-maximin branching Latin
// hypercube for the hard-turning experiment. Chamfer angle and length exist
// only under edge_shape = 1; hone rows carry the mid level 8 as a neutral
// placeholder.
const TURNING_RUNS: [[f64; 9]; 30] = [
    [1., 1., 6., 15., 23., 7., 9., 18., 10.],
    [1., 2., 11., 25., 3., 25., 14., 25., 19.],
    [1., 3., 3., 4., 20., 18., 18., 5., 26.],
    [1., 4., 14., 9., 6., 6., 27., 7., 17.],
    [1., 5., 8., 16., 8., 21., 2., 2., 1.],
    [1., 6., 1., 17., 10., 5., 25., 19., 25.],
    [1., 7., 12., 29., 26., 15., 5., 14., 12.],
    [1., 8., 5., 26., 16., 30., 22., 15., 6.],
    [1., 9., 15., 7., 13., 26., 7., 11., 27.],
    [1., 10., 10., 1., 29., 20., 23., 6., 5.],
    [1., 11., 2., 20., 21., 27., 10., 20., 29.],
    [1., 12., 7., 8., 11., 14., 4., 29., 21.],
    [1., 13., 13., 22., 9., 1., 24., 27., 9.],
    [1., 14., 4., 10., 2., 24., 28., 13., 13.],
    [1., 15., 9., 28., 25., 13., 17., 3., 28.],
    [2., 8., 8., 19., 5., 9., 1., 8., 20.],
    [2., 8., 8., 14., 28., 17., 6., 21., 24.],
    [2., 8., 8., 6., 17., 4., 16., 12., 4.],
    [2., 8., 8., 11., 1., 12., 15., 4., 8.],
    [2., 8., 8., 27., 22., 8., 30., 24., 16.],
    [2., 8., 8., 21., 14., 23., 19., 10., 22.],
    [2., 8., 8., 23., 18., 22., 12., 28., 3.],
    [2., 8., 8., 3., 27., 3., 3., 26., 14.],
    [2., 8., 8., 13., 15., 19., 29., 16., 30.],
    [2., 8., 8., 24., 12., 2., 11., 1., 18.],
    [2., 8., 8., 18., 24., 28., 8., 17., 2.],
    [2., 8., 8., 12., 30., 11., 26., 9., 11.],
    [2., 8., 8., 2., 4., 16., 13., 30., 15.],
    [2., 8., 8., 30., 7., 10., 20., 23., 7.],
    [2., 8., 8., 5., 19., 29., 21., 22., 23.],
];

/// The bundled 30-run branching Latin hypercube design for the hard-turning
/// experiment: edge shape is categorical (1 = chamfer, 2 = hone), chamfer
/// factors run over 15 levels, the remaining factors over 30 levels.
pub fn turning_design() -> Design {
    let kinds = vec![
        VarKind::Categorical { levels: 2 },
        VarKind::Continuous { lo: 1.0, hi: 15.0 },
        VarKind::Continuous { lo: 1.0, hi: 15.0 },
        VarKind::Continuous { lo: 1.0, hi: 30.0 },
        VarKind::Continuous { lo: 1.0, hi: 30.0 },
        VarKind::Continuous { lo: 1.0, hi: 30.0 },
        VarKind::Continuous { lo: 1.0, hi: 30.0 },
        VarKind::Continuous { lo: 1.0, hi: 30.0 },
        VarKind::Continuous { lo: 1.0, hi: 30.0 },
    ];
    Design::new(
        TURNING_RUNS.iter().map(|r| r.to_vec()).collect(),
        TURNING_VAR_NAMES.iter().map(|s| s.to_string()).collect(),
        kinds,
    )
    .expect("bundled design is valid")
}
