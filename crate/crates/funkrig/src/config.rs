//! Project configuration: a flat key = value text file. Every CLI flag
//! overrides its config key; unknown keys are rejected with the line
//! number.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::corr::{PowerExponent, DEFAULT_NUGGET};
use crate::design::VarKind;
use crate::em::EStepMode;
use crate::error::{Error, Result};

/// Decay-transform setting for the fit pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecaySetting {
    Off,
    /// Fit λ from the mean profile.
    Auto,
    Fixed(f64),
}

/// Synthetic-generation block of the config.
#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    /// "random" (Latin hypercube) or "turning" (the bundled 30-run design).
    pub design: String,
    pub n: usize,
    pub p: usize,
    pub m: usize,
    pub t_step: f64,
    pub mu0: f64,
    pub t_slope: f64,
    pub x_slopes: Vec<f64>,
    pub sigma2: f64,
    pub alphas: Vec<f64>,
    pub beta: f64,
    pub keep_lo: f64,
    pub keep_hi: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            design: "random".into(),
            n: 30,
            p: 2,
            m: 40,
            t_step: 1.0,
            mu0: 10.0,
            t_slope: 0.0,
            x_slopes: vec![],
            sigma2: 4.0,
            alphas: vec![1.0, 1.0],
            beta: 0.1,
            keep_lo: 0.4,
            keep_hi: 1.0,
        }
    }
}

/// Everything the CLI needs to run the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectConfig {
    pub design_path: String,
    pub profiles_path: String,
    pub out_dir: String,
    pub seed: u64,
    pub d: u8,
    pub nugget: f64,
    pub decay: DecaySetting,
    pub t_powers: Vec<u32>,
    pub x_linear: bool,
    pub n_restarts: usize,
    pub em_q: usize,
    pub em_delta: f64,
    pub em_max_iter: usize,
    pub em_mode: EStepMode,
    pub kappa: f64,
    /// Declared variable kinds by name; undeclared design columns default
    /// to continuous over their observed range.
    pub vars: Vec<(String, VarKind)>,
    pub gen: GenConfig,
}

impl Default for ProjectConfig {
    fn default() -> Self {
        ProjectConfig {
            design_path: "design.csv".into(),
            profiles_path: "profiles.csv".into(),
            out_dir: "out".into(),
            seed: 42,
            d: 1,
            nugget: DEFAULT_NUGGET,
            decay: DecaySetting::Off,
            t_powers: vec![1, 2],
            x_linear: true,
            n_restarts: 5,
            em_q: 10,
            em_delta: 0.05,
            em_max_iter: 100,
            em_mode: EStepMode::Expectation,
            kappa: 0.05,
            vars: vec![],
            gen: GenConfig::default(),
        }
    }
}

fn fmt_f64(v: f64) -> String {
    // Shortest representation that round-trips exactly.
    format!("{v}")
}

fn fmt_list<T: std::fmt::Display>(vs: &[T]) -> String {
    vs.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl ProjectConfig {
    pub fn exponent(&self) -> Result<PowerExponent> {
        PowerExponent::from_flag(self.d)
    }

    /// Serializes in a fixed key order; `parse` inverts this exactly.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "design = {}", self.design_path);
        let _ = writeln!(s, "profiles = {}", self.profiles_path);
        let _ = writeln!(s, "out_dir = {}", self.out_dir);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "d = {}", self.d);
        let _ = writeln!(s, "nugget = {}", fmt_f64(self.nugget));
        let decay = match self.decay {
            DecaySetting::Off => "off".to_string(),
            DecaySetting::Auto => "auto".to_string(),
            DecaySetting::Fixed(l) => fmt_f64(l),
        };
        let _ = writeln!(s, "decay = {decay}");
        let _ = writeln!(s, "t_powers = {}", fmt_list(&self.t_powers));
        let _ = writeln!(s, "x_linear = {}", self.x_linear);
        let _ = writeln!(s, "n_restarts = {}", self.n_restarts);
        let _ = writeln!(s, "em_q = {}", self.em_q);
        let _ = writeln!(s, "em_delta = {}", fmt_f64(self.em_delta));
        let _ = writeln!(s, "em_max_iter = {}", self.em_max_iter);
        let mode = match self.em_mode {
            EStepMode::Expectation => "expectation",
            EStepMode::Sampling => "sampling",
        };
        let _ = writeln!(s, "em_mode = {mode}");
        let _ = writeln!(s, "kappa = {}", fmt_f64(self.kappa));
        for (name, kind) in &self.vars {
            let v = match kind {
                VarKind::Continuous { lo, hi } => {
                    format!("continuous {} {}", fmt_f64(*lo), fmt_f64(*hi))
                }
                VarKind::Categorical { levels } => format!("categorical {levels}"),
            };
            let _ = writeln!(s, "var.{name} = {v}");
        }
        let g = &self.gen;
        let _ = writeln!(s, "gen.design = {}", g.design);
        let _ = writeln!(s, "gen.n = {}", g.n);
        let _ = writeln!(s, "gen.p = {}", g.p);
        let _ = writeln!(s, "gen.m = {}", g.m);
        let _ = writeln!(s, "gen.t_step = {}", fmt_f64(g.t_step));
        let _ = writeln!(s, "gen.mu0 = {}", fmt_f64(g.mu0));
        let _ = writeln!(s, "gen.t_slope = {}", fmt_f64(g.t_slope));
        if !g.x_slopes.is_empty() {
            let _ = writeln!(s, "gen.x_slopes = {}", fmt_list(&g.x_slopes));
        }
        let _ = writeln!(s, "gen.sigma2 = {}", fmt_f64(g.sigma2));
        let _ = writeln!(s, "gen.alphas = {}", fmt_list(&g.alphas));
        let _ = writeln!(s, "gen.beta = {}", fmt_f64(g.beta));
        let _ = writeln!(s, "gen.keep_lo = {}", fmt_f64(g.keep_lo));
        let _ = writeln!(s, "gen.keep_hi = {}", fmt_f64(g.keep_hi));
        s
    }

    pub fn parse(text: &str) -> Result<ProjectConfig> {
        let mut cfg = ProjectConfig::default();
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let lineno = idx + 1;
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {lineno}: expected 'key = value'"))
            })?;
            let key = key.trim();
            let value = value.trim();
            if let Some(prev) = seen.insert(key.to_string(), lineno) {
                return Err(Error::Config(format!(
                    "line {lineno}: key '{key}' already set on line {prev}"
                )));
            }
            let err = |what: &str| {
                Error::Config(format!("line {lineno}: bad {what} value '{value}'"))
            };
            match key {
                "design" => cfg.design_path = value.to_string(),
                "profiles" => cfg.profiles_path = value.to_string(),
                "out_dir" => cfg.out_dir = value.to_string(),
                "seed" => cfg.seed = value.parse().map_err(|_| err("seed"))?,
                "d" => cfg.d = value.parse().map_err(|_| err("d"))?,
                "nugget" => cfg.nugget = value.parse().map_err(|_| err("nugget"))?,
                "decay" => {
                    cfg.decay = match value {
                        "off" => DecaySetting::Off,
                        "auto" => DecaySetting::Auto,
                        v => DecaySetting::Fixed(v.parse().map_err(|_| err("decay"))?),
                    }
                }
                "t_powers" => {
                    cfg.t_powers = parse_list(value).map_err(|_| err("t_powers"))?
                }
                "x_linear" => cfg.x_linear = value.parse().map_err(|_| err("x_linear"))?,
                "n_restarts" => {
                    cfg.n_restarts = value.parse().map_err(|_| err("n_restarts"))?
                }
                "em_q" => cfg.em_q = value.parse().map_err(|_| err("em_q"))?,
                "em_delta" => cfg.em_delta = value.parse().map_err(|_| err("em_delta"))?,
                "em_max_iter" => {
                    cfg.em_max_iter = value.parse().map_err(|_| err("em_max_iter"))?
                }
                "em_mode" => {
                    cfg.em_mode = match value {
                        "expectation" => EStepMode::Expectation,
                        "sampling" => EStepMode::Sampling,
                        _ => return Err(err("em_mode")),
                    }
                }
                "kappa" => cfg.kappa = value.parse().map_err(|_| err("kappa"))?,
                _ if key.starts_with("var.") => {
                    let name = key.trim_start_matches("var.").to_string();
                    let parts: Vec<&str> = value.split_whitespace().collect();
                    let kind = match parts.as_slice() {
                        ["continuous", lo, hi] => VarKind::Continuous {
                            lo: lo.parse().map_err(|_| err("range"))?,
                            hi: hi.parse().map_err(|_| err("range"))?,
                        },
                        ["categorical", k] => VarKind::Categorical {
                            levels: k.parse().map_err(|_| err("levels"))?,
                        },
                        _ => return Err(err("variable kind")),
                    };
                    cfg.vars.push((name, kind));
                }
                _ if key.starts_with("gen.") => {
                    let g = &mut cfg.gen;
                    match key.trim_start_matches("gen.") {
                        "design" => g.design = value.to_string(),
                        "n" => g.n = value.parse().map_err(|_| err("gen.n"))?,
                        "p" => g.p = value.parse().map_err(|_| err("gen.p"))?,
                        "m" => g.m = value.parse().map_err(|_| err("gen.m"))?,
                        "t_step" => g.t_step = value.parse().map_err(|_| err("gen.t_step"))?,
                        "mu0" => g.mu0 = value.parse().map_err(|_| err("gen.mu0"))?,
                        "t_slope" => {
                            g.t_slope = value.parse().map_err(|_| err("gen.t_slope"))?
                        }
                        "x_slopes" => {
                            g.x_slopes = parse_list(value).map_err(|_| err("gen.x_slopes"))?
                        }
                        "sigma2" => g.sigma2 = value.parse().map_err(|_| err("gen.sigma2"))?,
                        "alphas" => {
                            g.alphas = parse_list(value).map_err(|_| err("gen.alphas"))?
                        }
                        "beta" => g.beta = value.parse().map_err(|_| err("gen.beta"))?,
                        "keep_lo" => {
                            g.keep_lo = value.parse().map_err(|_| err("gen.keep_lo"))?
                        }
                        "keep_hi" => {
                            g.keep_hi = value.parse().map_err(|_| err("gen.keep_hi"))?
                        }
                        other => {
                            return Err(Error::Config(format!(
                                "line {lineno}: unknown key 'gen.{other}'"
                            )))
                        }
                    }
                }
                other => {
                    return Err(Error::Config(format!(
                        "line {lineno}: unknown key '{other}'"
                    )))
                }
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<ProjectConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        ProjectConfig::parse(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

fn parse_list<T: std::str::FromStr>(value: &str) -> std::result::Result<Vec<T>, ()> {
    if value.is_empty() {
        return Ok(vec![]);
    }
    value
        .split(',')
        .map(|v| v.trim().parse::<T>().map_err(|_| ()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_default() {
        let cfg = ProjectConfig::default();
        let back = ProjectConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn round_trip_customized() {
        let mut cfg = ProjectConfig::default();
        cfg.decay = DecaySetting::Fixed(0.005);
        cfg.em_mode = EStepMode::Sampling;
        cfg.t_powers = vec![1];
        cfg.vars = vec![
            ("edge_shape".into(), VarKind::Categorical { levels: 2 }),
            ("feed_rate".into(), VarKind::Continuous { lo: 0.05, hi: 0.15 }),
        ];
        cfg.gen.x_slopes = vec![1.5, -0.25];
        let back = ProjectConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn unknown_key_rejected_with_line() {
        let err = ProjectConfig::parse("seed = 1\nbogus = 2\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn duplicate_key_rejected() {
        let err = ProjectConfig::parse("seed = 1\nseed = 2\n").unwrap_err();
        assert!(err.to_string().contains("already set"), "{err}");
    }

    #[test]
    fn comments_and_blanks_ignored() {
        let cfg = ProjectConfig::parse("# comment\n\nseed = 7\n").unwrap();
        assert_eq!(cfg.seed, 7);
    }
}
