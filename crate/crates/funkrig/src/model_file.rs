//! Versioned plain-text model files.
//!
//! The file stores everything needed to reproduce predictions: variable
//! declarations, correlation parameters, basis, grid, design, the
//! (completed) response matrix, and the decay rate. Floats use the shortest
//! exact decimal representation, and loading re-derives the caches
//! deterministically, so a save/load round trip preserves predictions
//! bitwise on the same platform.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::basis::BasisSpec;
use crate::corr::{CorrParams, PowerExponent};
use crate::design::{Design, VarKind};
use crate::error::{Error, Result};
use crate::kriging::{fit_with_params, KrigingModel, Prediction};

const MAGIC: &str = "funkrig-model v1";

/// A model as persisted: the fitted kriging model plus the decay rate that
/// maps the modeling scale back to the raw data scale.
#[derive(Debug, Clone)]
pub struct SavedModel {
    pub model: KrigingModel,
    pub decay_lambda: f64,
}

impl SavedModel {
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

pub fn save_model(path: &Path, model: &KrigingModel, decay_lambda: f64) -> Result<()> {
    for name in model.design.names() {
        if name.chars().any(char::is_whitespace) {
            return Err(Error::Data(format!(
                "variable name '{name}' contains whitespace; not representable in a model file"
            )));
        }
    }
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC}");
    let _ = writeln!(s, "decay_lambda {decay_lambda}");
    let d_flag = match model.params.d {
        PowerExponent::Exponential => 1,
        PowerExponent::Gaussian => 2,
    };
    let _ = writeln!(s, "d {d_flag}");
    let _ = writeln!(s, "nugget {}", model.params.nugget);
    let _ = writeln!(s, "sigma2 {}", model.sigma2);
    let _ = writeln!(s, "beta {}", model.params.beta);
    let _ = writeln!(s, "alphas{}", join_floats(&model.params.alphas));
    let mu: Vec<f64> = model.mu.iter().copied().collect();
    let _ = writeln!(s, "mu{}", join_floats(&mu));
    let _ = writeln!(
        s,
        "basis_t{}",
        model
            .basis
            .t_powers()
            .iter()
            .fold(String::new(), |mut acc, p| {
                let _ = write!(acc, " {p}");
                acc
            })
    );
    let _ = writeln!(
        s,
        "basis_x{}",
        model
            .basis
            .x_terms()
            .iter()
            .fold(String::new(), |mut acc, (j, p)| {
                let _ = write!(acc, " {j}:{p}");
                acc
            })
    );
    let _ = writeln!(s, "vars {}", model.design.n_vars());
    for (name, kind) in model.design.names().iter().zip(model.design.kinds()) {
        match kind {
            VarKind::Continuous { lo, hi } => {
                let _ = writeln!(s, "var {name} continuous {lo} {hi}");
            }
            VarKind::Categorical { levels } => {
                let _ = writeln!(s, "var {name} categorical {levels}");
            }
        }
    }
    let grid = &model.grid;
    let _ = writeln!(s, "grid {}", grid.len());
    let _ = writeln!(s, "{}", join_floats(grid).trim_start());
    let _ = writeln!(s, "runs {}", model.design.n_runs());
    for row in model.design.rows() {
        let _ = writeln!(s, "row{}", join_floats(row));
    }
    let _ = writeln!(s, "data");
    for i in 0..model.y.nrows() {
        let row: Vec<f64> = model.y.row(i).iter().copied().collect();
        let _ = writeln!(s, "{}", join_floats(&row).trim_start());
    }
    let _ = writeln!(s, "end");
    std::fs::write(path, s)?;
    Ok(())
}

fn join_floats(vs: &[f64]) -> String {
    vs.iter().fold(String::new(), |mut acc, v| {
        let _ = write!(acc, " {v}");
        acc
    })
}

struct Lines<'a> {
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<(usize, &'a str)> {
        self.iter
            .next()
            .map(|(i, l)| (i + 1, l))
            .ok_or_else(|| Error::Data("model file truncated".into()))
    }

    fn expect_key(&mut self, key: &str) -> Result<Vec<String>> {
        let (lineno, line) = self.next()?;
        let mut parts = line.split_whitespace();
        let head = parts.next().unwrap_or("");
        if head != key {
            return Err(Error::Data(format!(
                "model file line {lineno}: expected '{key}', found '{head}'"
            )));
        }
        Ok(parts.map(|p| p.to_string()).collect())
    }
}

fn parse_floats(parts: &[String], what: &str) -> Result<Vec<f64>> {
    parts
        .iter()
        .map(|p| {
            p.parse::<f64>()
                .map_err(|_| Error::Data(format!("model file: bad {what} value '{p}'")))
        })
        .collect()
}

pub fn load_model(path: &Path) -> Result<SavedModel> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let mut lines = Lines {
        iter: text.lines().enumerate(),
    };
    let (_, magic) = lines.next()?;
    if magic.trim() != MAGIC {
        return Err(Error::Data(format!(
            "unsupported model file version: '{}'",
            magic.trim()
        )));
    }
    let decay_lambda = parse_floats(&lines.expect_key("decay_lambda")?, "decay_lambda")?
        .first()
        .copied()
        .ok_or_else(|| Error::Data("missing decay_lambda".into()))?;
    let d_parts = lines.expect_key("d")?;
    let d_flag: u8 = d_parts
        .first()
        .and_then(|p| p.parse().ok())
        .ok_or_else(|| Error::Data("bad d flag".into()))?;
    let d = PowerExponent::from_flag(d_flag)?;
    let nugget = parse_floats(&lines.expect_key("nugget")?, "nugget")?[0];
    let sigma2 = parse_floats(&lines.expect_key("sigma2")?, "sigma2")?[0];
    let beta = parse_floats(&lines.expect_key("beta")?, "beta")?[0];
    let alphas = parse_floats(&lines.expect_key("alphas")?, "alphas")?;
    let mu_stored = parse_floats(&lines.expect_key("mu")?, "mu")?;
    let t_powers: Vec<u32> = lines
        .expect_key("basis_t")?
        .iter()
        .map(|p| {
            p.parse::<u32>()
                .map_err(|_| Error::Data(format!("bad t power '{p}'")))
        })
        .collect::<Result<_>>()?;
    let x_terms: Vec<(usize, u32)> = lines
        .expect_key("basis_x")?
        .iter()
        .map(|p| {
            p.split_once(':')
                .and_then(|(j, pw)| Some((j.parse().ok()?, pw.parse().ok()?)))
                .ok_or_else(|| Error::Data(format!("bad x term '{p}'")))
        })
        .collect::<Result<_>>()?;

    let n_vars: usize = lines.expect_key("vars")?[0]
        .parse()
        .map_err(|_| Error::Data("bad vars count".into()))?;
    let mut names = Vec::with_capacity(n_vars);
    let mut kinds = Vec::with_capacity(n_vars);
    for _ in 0..n_vars {
        let parts = lines.expect_key("var")?;
        match parts.as_slice() {
            [name, kw, lo, hi] if kw == "continuous" => {
                names.push(name.clone());
                kinds.push(VarKind::Continuous {
                    lo: lo.parse().map_err(|_| Error::Data("bad range".into()))?,
                    hi: hi.parse().map_err(|_| Error::Data("bad range".into()))?,
                });
            }
            [name, kw, k] if kw == "categorical" => {
                names.push(name.clone());
                kinds.push(VarKind::Categorical {
                    levels: k.parse().map_err(|_| Error::Data("bad levels".into()))?,
                });
            }
            _ => return Err(Error::Data("bad var line in model file".into())),
        }
    }

    let m: usize = lines.expect_key("grid")?[0]
        .parse()
        .map_err(|_| Error::Data("bad grid count".into()))?;
    let (_, grid_line) = lines.next()?;
    let grid = parse_floats(
        &grid_line
            .split_whitespace()
            .map(|s| s.to_string())
            .collect::<Vec<_>>(),
        "grid",
    )?;
    if grid.len() != m {
        return Err(Error::Data(format!(
            "grid has {} values, expected {m}",
            grid.len()
        )));
    }

    let n: usize = lines.expect_key("runs")?[0]
        .parse()
        .map_err(|_| Error::Data("bad run count".into()))?;
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        rows.push(parse_floats(&lines.expect_key("row")?, "design row")?);
    }
    lines.expect_key("data")?;
    let mut y = DMatrix::zeros(n, m);
    for i in 0..n {
        let (_, line) = lines.next()?;
        let vals = parse_floats(
            &line
                .split_whitespace()
                .map(|s| s.to_string())
                .collect::<Vec<_>>(),
            "data",
        )?;
        if vals.len() != m {
            return Err(Error::Data(format!(
                "data row {} has {} values, expected {m}",
                i + 1,
                vals.len()
            )));
        }
        for (j, v) in vals.iter().enumerate() {
            y[(i, j)] = *v;
        }
    }
    lines.expect_key("end")?;

    let design = Design::new(rows, names, kinds)?;
    let basis = BasisSpec::new(t_powers, x_terms)?;
    let params = CorrParams::new(alphas, beta, d, nugget)?;
    let model = fit_with_params(&design, &grid, &y, &basis, &params)?;

    // The caches are recomputed; the stored estimates certify the file.
    let mu_drift = model
        .mu
        .iter()
        .zip(&mu_stored)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    let s2_drift = (model.sigma2 - sigma2).abs() / (1.0 + sigma2.abs());
    if mu_drift > 1e-6 || s2_drift > 1e-6 {
        return Err(Error::Data(format!(
            "model file inconsistent: recomputed estimates drift by {mu_drift:.2e} (mu) / {s2_drift:.2e} (sigma2)"
        )));
    }
    Ok(SavedModel {
        model,
        decay_lambda,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kriging::FitOpts;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fitted() -> KrigingModel {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let design = Design::unit_continuous(
            (0..5)
                .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let grid: Vec<f64> = (0..6).map(|i| i as f64 * 0.5).collect();
        let y = DMatrix::from_fn(5, 6, |i, j| ((i * j) as f64 * 0.37).sin() + 2.0);
        let basis = BasisSpec::new(vec![1], vec![(0, 1)]).unwrap();
        let init =
            CorrParams::new(vec![1.0, 1.0], 0.8, PowerExponent::Exponential, 1e-8).unwrap();
        crate::kriging::fit_regular_matrix(
            &design,
            &grid,
            &y,
            &basis,
            &init,
            &FitOpts::with_restarts(1),
        )
        .unwrap()
    }

    #[test]
    fn save_load_preserves_predictions_bitwise() {
        let model = fitted();
        let f = tempfile::NamedTempFile::new().unwrap();
        save_model(f.path(), &model, 0.01).unwrap();
        let loaded = load_model(f.path()).unwrap();
        assert_eq!(loaded.decay_lambda, 0.01);
        for &(x, t) in &[([0.3, 0.4], 1.1), ([0.9, 0.05], 2.5), ([0.5, 0.5], 0.0)] {
            let a = model.predict(&x, t);
            let b = loaded.model.predict(&x, t);
            assert_eq!(a, b, "prediction drift at {x:?} {t}");
            let ca = model.predict_ci(&x, t, 0.05);
            let cb = loaded.model.predict_ci(&x, t, 0.05);
            assert_eq!(ca.lo, cb.lo);
            assert_eq!(ca.hi, cb.hi);
        }
    }

    #[test]
    fn rejects_unknown_version() {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), "funkrig-model v99\n").unwrap();
        assert!(load_model(f.path()).is_err());
    }

    #[test]
    fn rejects_tampered_estimates() {
        let model = fitted();
        let f = tempfile::NamedTempFile::new().unwrap();
        save_model(f.path(), &model, 0.0).unwrap();
        let text = std::fs::read_to_string(f.path()).unwrap();
        let tampered = text.replace(
            &format!("sigma2 {}", model.sigma2),
            "sigma2 123.456",
        );
        std::fs::write(f.path(), tampered).unwrap();
        assert!(load_model(f.path()).is_err());
    }
}
