//! File formats: design CSV (header of variable names, one row per run),
//! long-format profile CSV (run_id,t,y), query CSV (variables plus t), and
//! the plot-ready output CSVs. Parsers reject unknown columns and report
//! the offending run and point.

use std::path::Path;

use crate::dataset::Profile;
use crate::design::{Design, VarKind};
use crate::error::{Error, Result};

fn parse_f64(field: &str, context: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::Data(format!("{context}: '{field}' is not a number")))
}

/// Reads a design CSV. Variable kinds come from `declared` (matched by
/// name); variables without a declaration default to continuous over their
/// observed range.
pub fn read_design_csv(path: &Path, declared: &[(String, VarKind)]) -> Result<Design> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let names: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
        .iter()
        .map(|s| s.to_string())
        .collect();
    for (name, _) in declared {
        if !names.contains(name) {
            return Err(Error::Config(format!(
                "declared variable '{name}' not in design header {names:?}"
            )));
        }
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        if record.len() != names.len() {
            return Err(Error::Data(format!(
                "design row {}: {} fields, expected {}",
                idx + 1,
                record.len(),
                names.len()
            )));
        }
        rows.push(
            record
                .iter()
                .enumerate()
                .map(|(j, f)| {
                    parse_f64(f, &format!("design row {} column {}", idx + 1, names[j]))
                })
                .collect::<Result<Vec<f64>>>()?,
        );
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("{}: no runs", path.display())));
    }
    let kinds: Vec<VarKind> = names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            declared
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, k)| k.clone())
                .unwrap_or_else(|| {
                    let lo = rows.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min);
                    let hi = rows.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max);
                    VarKind::Continuous { lo, hi }
                })
        })
        .collect();
    Design::new(rows, names, kinds)
}

pub fn write_design_csv(path: &Path, design: &Design) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(design.names())
        .map_err(|e| Error::Data(e.to_string()))?;
    for row in design.rows() {
        w.write_record(row.iter().map(|v| v.to_string()))
            .map_err(|e| Error::Data(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a long-format profile CSV with columns run_id,t,y. Run ids must be
/// contiguous from 1, abscissae strictly increasing within each run.
pub fn read_profiles_csv(path: &Path) -> Result<Vec<Profile>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
        .iter()
        .map(|s| s.to_string())
        .collect();
    if headers != ["run_id", "t", "y"] {
        return Err(Error::Data(format!(
            "profile CSV header must be run_id,t,y; got {}",
            headers.join(",")
        )));
    }
    let mut runs: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let line = idx + 2; // header is line 1
        if record.len() != 3 {
            return Err(Error::Data(format!(
                "profile line {line}: {} fields, expected 3",
                record.len()
            )));
        }
        let run_id = record[0].parse::<usize>().map_err(|_| {
            Error::Data(format!("profile line {line}: bad run_id '{}'", &record[0]))
        })?;
        let t = parse_f64(&record[1], &format!("profile line {line} t"))?;
        let y = parse_f64(&record[2], &format!("profile line {line} y"))?;
        if run_id == 0 || run_id > runs.len() + 1 {
            return Err(Error::Data(format!(
                "profile line {line}: run_id {run_id} not contiguous from 1"
            )));
        }
        if run_id == runs.len() + 1 {
            runs.push((vec![], vec![]));
        }
        let (ts, ys) = &mut runs[run_id - 1];
        if let Some(&last) = ts.last() {
            if t == last {
                return Err(Error::Data(format!(
                    "run {run_id}: duplicate abscissa t = {t} (line {line})"
                )));
            }
            if t < last {
                return Err(Error::Data(format!(
                    "run {run_id}: abscissae not increasing at t = {t} (line {line})"
                )));
            }
        }
        ts.push(t);
        ys.push(y);
    }
    if runs.is_empty() {
        return Err(Error::Data(format!("{}: no profile rows", path.display())));
    }
    runs.into_iter()
        .enumerate()
        .map(|(i, (t, y))| {
            if t.is_empty() {
                Err(Error::Data(format!("run {}: no observations", i + 1)))
            } else {
                Profile::new(t, y)
            }
        })
        .collect()
}

pub fn write_profiles_csv(path: &Path, runs: &[Profile]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["run_id", "t", "y"])
        .map_err(|e| Error::Data(e.to_string()))?;
    for (i, run) in runs.iter().enumerate() {
        for (t, y) in run.t.iter().zip(&run.y) {
            w.write_record([(i + 1).to_string(), t.to_string(), y.to_string()])
                .map_err(|e| Error::Data(e.to_string()))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a query CSV whose header must be exactly the design's variable
/// names followed by `t`.
pub fn read_query_csv(path: &Path, var_names: &[String]) -> Result<Vec<(Vec<f64>, f64)>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut expected: Vec<String> = var_names.to_vec();
    expected.push("t".into());
    if headers != expected {
        return Err(Error::Data(format!(
            "query header must be {}; got {}",
            expected.join(","),
            headers.join(",")
        )));
    }
    let mut out = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let line = idx + 2;
        if record.len() != expected.len() {
            return Err(Error::Data(format!(
                "query line {line}: {} fields, expected {}",
                record.len(),
                expected.len()
            )));
        }
        let mut x = Vec::with_capacity(var_names.len());
        for j in 0..var_names.len() {
            x.push(parse_f64(&record[j], &format!("query line {line}"))?);
        }
        let t = parse_f64(&record[var_names.len()], &format!("query line {line} t"))?;
        out.push((x, t));
    }
    Ok(out)
}

/// Writes prediction rows (yhat, lo, hi), one per query.
pub fn write_predictions_csv(path: &Path, rows: &[(f64, f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["yhat", "lo", "hi"])
        .map_err(|e| Error::Data(e.to_string()))?;
    for (yhat, lo, hi) in rows {
        w.write_record([yhat.to_string(), lo.to_string(), hi.to_string()])
            .map_err(|e| Error::Data(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes leave-one-out profile rows.
pub fn write_loo_csv(
    path: &Path,
    rows: &[(usize, f64, f64, f64, f64, f64)], // run_id, t, y, yhat, lo, hi
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["run_id", "t", "y", "yhat", "lo", "hi"])
        .map_err(|e| Error::Data(e.to_string()))?;
    for (run, t, y, yhat, lo, hi) in rows {
        w.write_record([
            run.to_string(),
            t.to_string(),
            y.to_string(),
            yhat.to_string(),
            lo.to_string(),
            hi.to_string(),
        ])
        .map_err(|e| Error::Data(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes one variable's effect curve in long format (level, t, effect).
pub fn write_effect_csv(path: &Path, rows: &[(f64, f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["level", "t", "effect"])
        .map_err(|e| Error::Data(e.to_string()))?;
    for (level, t, effect) in rows {
        w.write_record([level.to_string(), t.to_string(), effect.to_string()])
            .map_err(|e| Error::Data(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes benchmark timing rows.
pub fn write_timing_csv(path: &Path, rows: &[(usize, usize, String, f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["n", "m", "path", "median_seconds", "objective"])
        .map_err(|e| Error::Data(e.to_string()))?;
    for (n, m, which, secs, obj) in rows {
        w.write_record([
            n.to_string(),
            m.to_string(),
            which.clone(),
            format!("{secs:.6e}"),
            format!("{obj:.9e}"),
        ])
        .map_err(|e| Error::Data(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
