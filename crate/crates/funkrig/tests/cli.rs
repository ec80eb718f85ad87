//! File-level tests of the command-line surface: formats, exit codes,
//! report contents, and the bundled design fixture.

use std::path::PathBuf;
use std::process::Command;

use funkrig::oracle::DenseSystem;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_funkrig"))
}

struct Project {
    dir: tempfile::TempDir,
    cfg: PathBuf,
}

impl Project {
    fn new(extra: &str) -> Project {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let cfg = dir.path().join("project.cfg");
        let text = format!(
            "design = {out}/design.csv\nprofiles = {out}/profiles.csv\n\
             out_dir = {out}\nseed = 99\nt_powers = 1\n{extra}",
            out = out.display()
        );
        std::fs::write(&cfg, text).unwrap();
        Project { dir, cfg }
    }

    fn run(&self, args: &[&str]) -> std::process::Output {
        bin()
            .arg("--config")
            .arg(&self.cfg)
            .args(args)
            .output()
            .unwrap()
    }

    fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join("out").join(name)
    }
}

fn small_gen() -> &'static str {
    "gen.n = 8\ngen.p = 2\ngen.m = 10\ngen.mu0 = 5\ngen.sigma2 = 2\n\
     gen.alphas = 0.8,0.8\ngen.beta = 0.3\ngen.keep_lo = 0.5\ngen.keep_hi = 1\n"
}

#[test]
fn full_truncation_gives_regular_dataset_and_plain_report() {
    let p = Project::new(
        "gen.n = 6\ngen.p = 2\ngen.m = 8\ngen.mu0 = 5\ngen.sigma2 = 2\n\
         gen.alphas = 1,1\ngen.beta = 0.3\ngen.keep_lo = 1\ngen.keep_hi = 1\n",
    );
    assert!(p.run(&["generate"]).status.success());
    let profiles = std::fs::read_to_string(p.out("profiles.csv")).unwrap();
    assert_eq!(profiles.lines().count(), 1 + 6 * 8, "regular long format");
    assert!(p.run(&["fit"]).status.success());
    let report = std::fs::read_to_string(p.out("report.txt")).unwrap();
    assert!(report.contains("grid: regular"), "{report}");
    assert!(!report.contains("EM:"), "unexpected EM section:\n{report}");
}

#[test]
fn truncated_fit_report_carries_converged_em_section() {
    let p = Project::new(small_gen());
    assert!(p.run(&["generate"]).status.success());
    assert!(p.run(&["fit"]).status.success());
    let report = std::fs::read_to_string(p.out("report.txt")).unwrap();
    assert!(report.contains("grid: irregular"), "{report}");
    assert!(report.contains("EM:"), "{report}");
    assert!(report.contains("q = 10, delta = 0.05"), "{report}");
    let last_delta: f64 = report
        .lines()
        .filter(|l| l.trim_start().chars().next().is_some_and(|c| c.is_ascii_digit()))
        .filter_map(|l| {
            let fields: Vec<&str> = l.split_whitespace().collect();
            (fields.len() == 3).then(|| fields[1].parse().ok()).flatten()
        })
        .last()
        .expect("EM iteration rows present");
    assert!(
        last_delta < 0.05,
        "final parameter delta {last_delta} not below 0.05\n{report}"
    );
    assert!(report.contains("(converged)"), "{report}");
    assert!(report.contains("contraction diagnostic"), "{report}");
}

#[test]
fn corrupted_profile_duplicate_t_exits_2_with_location() {
    let p = Project::new(small_gen());
    assert!(p.run(&["generate"]).status.success());
    // Duplicate an abscissa inside run 2.
    let path = p.out("profiles.csv");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    let dup = lines
        .iter()
        .position(|l| l.starts_with("2,"))
        .expect("run 2 present");
    let clone = lines[dup];
    lines.insert(dup + 1, clone);
    std::fs::write(&path, lines.join("\n")).unwrap();

    let out = p.run(&["fit"]);
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(
        msg.contains("run 2") && msg.contains("t ="),
        "error should name the run and point: {msg}"
    );
}

#[test]
fn duplicated_design_rows_without_nugget_exit_3() {
    let p = Project::new(&format!("{}nugget = 0\n", small_gen()));
    assert!(p.run(&["generate"]).status.success());
    // Make run 2's setting identical to run 1's.
    let path = p.out("design.csv");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(|s| s.to_string()).collect();
    lines[2] = lines[1].clone();
    std::fs::write(&path, lines.join("\n")).unwrap();

    let out = p.run(&["fit"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    // The singular matrix surfaces as every optimizer start failing.
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(
        msg.contains("failed factorization") || msg.contains("singular"),
        "{msg}"
    );
}

#[test]
fn predict_training_point_and_empty_query() {
    let p = Project::new(&format!(
        "nugget = 0\ngen.n = 6\ngen.p = 2\ngen.m = 8\ngen.mu0 = 5\ngen.sigma2 = 2\n\
         gen.alphas = 1,1\ngen.beta = 0.3\ngen.keep_lo = 1\ngen.keep_hi = 1\n"
    ));
    assert!(p.run(&["generate"]).status.success());
    assert!(p.run(&["fit"]).status.success());

    // Query the first training point: read it from the generated files.
    let design = std::fs::read_to_string(p.out("design.csv")).unwrap();
    let first_row = design.lines().nth(1).unwrap();
    let profiles = std::fs::read_to_string(p.out("profiles.csv")).unwrap();
    let first_obs: Vec<&str> = profiles.lines().nth(1).unwrap().split(',').collect();
    let (t0, y0): (f64, f64) = (first_obs[1].parse().unwrap(), first_obs[2].parse().unwrap());

    let queries = p.dir.path().join("queries.csv");
    std::fs::write(&queries, format!("x1,x2,t\n{first_row},{t0}\n")).unwrap();
    let model = p.out("model.txt").display().to_string();
    assert!(p
        .run(&["predict", &model, queries.to_str().unwrap()])
        .status
        .success());
    let preds = std::fs::read_to_string(p.out("predictions.csv")).unwrap();
    let row: Vec<f64> = preds
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert!(
        (row[0] - y0).abs() / (1.0 + y0.abs()) < 1e-6,
        "training prediction {} vs {y0}",
        row[0]
    );
    assert!((row[2] - row[1]).abs() < 1e-6, "interval not degenerate: {row:?}");

    // An empty query file yields an empty output with the header.
    std::fs::write(&queries, "x1,x2,t\n").unwrap();
    assert!(p
        .run(&["predict", &model, queries.to_str().unwrap()])
        .status
        .success());
    let preds = std::fs::read_to_string(p.out("predictions.csv")).unwrap();
    assert_eq!(preds.trim(), "yhat,lo,hi");
}

#[test]
fn predict_rejects_unknown_columns_with_exit_2() {
    let p = Project::new(small_gen());
    assert!(p.run(&["generate"]).status.success());
    assert!(p.run(&["fit"]).status.success());
    let queries = p.dir.path().join("queries.csv");
    std::fs::write(&queries, "x1,bogus,t\n0.5,0.5,1\n").unwrap();
    let model = p.out("model.txt").display().to_string();
    let out = p.run(&["predict", &model, queries.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("header"));
}

#[test]
fn predictions_match_dense_reference() {
    let p = Project::new(&format!(
        "nugget = 0\ngen.n = 5\ngen.p = 2\ngen.m = 6\ngen.mu0 = 4\ngen.sigma2 = 1.5\n\
         gen.alphas = 1,1\ngen.beta = 0.4\ngen.keep_lo = 1\ngen.keep_hi = 1\n"
    ));
    assert!(p.run(&["generate"]).status.success());
    assert!(p.run(&["fit"]).status.success());
    let saved = funkrig::model_file::load_model(&p.out("model.txt")).unwrap();
    let ds = funkrig::dataset::FunctionalDataset::from_matrix(
        saved.model.design.clone(),
        saved.model.grid.clone(),
        &saved.model.y,
    )
    .unwrap();
    let dense = DenseSystem::build(&ds, &saved.model.basis, &saved.model.params).unwrap();
    for &(x, t) in &[([0.3, 0.7], 1.3), ([0.8, 0.1], 2.9), ([0.5, 0.5], 0.0)] {
        let fast = saved.model.predict(&x, t);
        let slow = dense.predict(&x, t);
        assert!(
            (fast - slow).abs() <= 1e-8 * (1.0 + slow.abs()),
            "{fast} vs {slow}"
        );
    }
}

#[test]
fn validate_writes_loo_profiles_and_mscv_report() {
    let p = Project::new(small_gen());
    assert!(p.run(&["generate"]).status.success());
    let out = p.run(&["validate", "--probes", "2,4,6"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let loo = std::fs::read_to_string(p.out("loo_profiles.csv")).unwrap();
    assert!(loo.starts_with("run_id,t,y,yhat,lo,hi"));
    assert!(loo.lines().skip(1).all(|l| {
        let run: usize = l.split(',').next().unwrap().parse().unwrap();
        [2, 4, 6].contains(&run)
    }));
    let report = std::fs::read_to_string(p.out("mscv_report.txt")).unwrap();
    assert!(report.contains("MSCV (EM-completed fit)"));
    assert!(report.contains("MSCV (common-grid-only fit)"));
}

#[test]
fn optimize_and_sensitivity_write_outputs() {
    let p = Project::new(small_gen());
    assert!(p.run(&["generate"]).status.success());
    assert!(p.run(&["fit"]).status.success());
    let model = p.out("model.txt").display().to_string();
    assert!(p.run(&["optimize", &model, "--restarts", "5"]).status.success());
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(p.out("optimum.json")).unwrap())
            .unwrap();
    assert_eq!(json["x_star"].as_array().unwrap().len(), 2);
    assert!(json["worst_value"].is_number());
    assert!(json["trace"].as_array().unwrap().len() >= 5);

    assert!(p
        .run(&["sensitivity", &model, "--variables", "x1", "--levels", "3", "--nodes", "16"])
        .status
        .success());
    let effect = std::fs::read_to_string(p.out("effect_x1.csv")).unwrap();
    assert!(effect.starts_with("level,t,effect"));
    assert_eq!(effect.lines().count(), 1 + 3 * 10);
}

#[test]
fn benchmark_reps_zero_validates_without_timing_rows() {
    let p = Project::new("");
    let out = p.run(&["benchmark", "--sizes", "6x6,6x8", "--reps", "0"]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("validation-only"), "{stdout}");
    assert!(!p.out("timings.csv").exists());
}

#[test]
fn turning_fixture_first_row_matches_published_design() {
    let p = Project::new(
        "gen.design = turning\ngen.m = 6\ngen.mu0 = 50\ngen.sigma2 = 9\n\
         gen.alphas = 1\ngen.beta = 0.3\ngen.keep_lo = 0.5\ngen.keep_hi = 1\n",
    );
    assert!(p.run(&["generate"]).status.success());
    let design = std::fs::read_to_string(p.out("design.csv")).unwrap();
    let mut lines = design.lines();
    assert_eq!(
        lines.next().unwrap(),
        "edge_shape,chamfer_angle,chamfer_length,edge_radius,rake_angle,nose_radius,cutting_speed,feed_rate,cut_depth"
    );
    assert_eq!(lines.next().unwrap(), "1,1,6,15,23,7,9,18,10");
    assert_eq!(design.lines().count(), 31);
}

#[test]
fn seed_flag_overrides_config_seed() {
    let p = Project::new(small_gen());
    assert!(p.run(&["generate"]).status.success());
    let first = std::fs::read(p.out("profiles.csv")).unwrap();
    assert!(p.run(&["--seed", "100", "generate"]).status.success());
    let second = std::fs::read(p.out("profiles.csv")).unwrap();
    assert_ne!(first, second, "different seeds must change the sample");
    assert!(p.run(&["--seed", "99", "generate"]).status.success());
    let third = std::fs::read(p.out("profiles.csv")).unwrap();
    assert_eq!(first, third, "explicit seed equal to config seed must agree");
}

#[test]
fn missing_input_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("p.cfg");
    std::fs::write(
        &cfg,
        format!(
            "design = {0}/nope.csv\nprofiles = {0}/nope2.csv\nout_dir = {0}\n",
            dir.path().display()
        ),
    )
    .unwrap();
    let out = bin().arg("--config").arg(&cfg).arg("fit").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sampled_field_mean_is_plausible() {
    // Sanity check on generated magnitudes: with mu0 = 5 and sigma = 1.4 the
    // grand mean of the sample should land near 5.
    let p = Project::new(small_gen());
    assert!(p.run(&["generate"]).status.success());
    let profiles = std::fs::read_to_string(p.out("profiles.csv")).unwrap();
    let ys: Vec<f64> = profiles
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    assert!((mean - 5.0).abs() < 2.0, "grand mean {mean}");
}
