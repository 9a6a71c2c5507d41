use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::diagnostics::probe_csv;
use crate::error::{Error, Result};

use super::study::{RowStatus, StudyResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Report,
}

#[derive(Serialize)]
struct CsvRow {
    m: usize,
    eps: f64,
    status: &'static str,
    linf_error: Option<f64>,
    wiener_error: Option<f64>,
    wallclock_s: Option<f64>,
}

/// `m,eps,status,linf_error,wiener_error,wallclock_s`; failed rows leave the
/// error fields empty.
pub fn study_csv(result: &StudyResult) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &result.rows {
        let ok = r.status == RowStatus::Ok;
        w.serialize(CsvRow {
            m: r.m,
            eps: r.eps,
            status: if ok { "ok" } else { "failed" },
            linf_error: r.linf_error,
            wiener_error: r.wiener_error,
            wallclock_s: if result.config.output.wallclock { r.wallclock_s } else { None },
        })
        .expect("in-memory csv");
    }
    if result.rows.is_empty() {
        w.write_record(["m", "eps", "status", "linf_error", "wiener_error", "wallclock_s"])
            .expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4e}"))
}

pub fn study_report(result: &StudyResult) -> String {
    let c = &result.config;
    let mut s = String::new();
    let _ = writeln!(s, "envelope approximation study");
    let _ = writeln!(s, "============================");
    let _ = writeln!(
        s,
        "model {} (gamma = {}), kappa = {:?}, omega = {:.9}, c_g = {:.9}, rule = {:?}",
        c.model.name, c.model.gamma, result.carrier.kappa, result.carrier.omega, result.carrier.cg[0], result.carrier.rule
    );
    let _ = writeln!(
        s,
        "grid L = {}, N = {}; t_end = {}, dt = {} ({:?}), {} observer times; reference m = {}",
        c.grid.length, c.grid.points, c.time.t_end, c.time.dt, c.time.dt_policy, c.time.observers, c.study.reference_m
    );
    let _ = writeln!(s);

    let _ = writeln!(s, "errors (sup over observer times)");
    let _ = writeln!(
        s,
        "{:>3} {:>10} {:>10} {:>12} {:>12} {:>12} {:>8}",
        "m", "eps", "dt", "linf", "linf_maxabs", "wiener", "status"
    );
    for r in &result.rows {
        let status = match &r.status {
            RowStatus::Ok => "ok".to_string(),
            RowStatus::Failed(_) => "failed".to_string(),
        };
        let _ = writeln!(
            s,
            "{:>3} {:>10.6} {:>10.3e} {:>12} {:>12} {:>12} {:>8}",
            r.m,
            r.eps,
            r.dt,
            opt(r.linf_error),
            opt(r.linf_error_maxabs),
            opt(r.wiener_error),
            status
        );
        if let RowStatus::Failed(reason) = &r.status {
            let _ = writeln!(s, "      reason: {reason}");
        }
    }
    let _ = writeln!(s);

    let _ = writeln!(s, "observed orders (least squares on log eps, log linf)");
    for &m in &c.study.m_list {
        match result.fits.get(&m) {
            Some(f) => {
                let _ = writeln!(
                    s,
                    "  m = {m}: slope {:.4}, intercept {:.4}, max residual {:.3e} ({} points)",
                    f.slope, f.intercept, f.max_residual, f.points
                );
            }
            None => {
                let _ = writeln!(s, "  m = {m}: no fit (fewer than 3 completed rows with positive error)");
            }
        }
    }
    let _ = writeln!(s);

    let _ = writeln!(s, "non-resonance (required level: {})", result.required_level);
    for report in &result.nonresonance {
        let _ = writeln!(s, "{report}");
    }
    let _ = writeln!(s);

    if !result.probes.is_empty() {
        let _ = writeln!(s, "scaling probes (sup over observer times, L1 in k)");
        let _ = writeln!(s, "{:>10} {:>10} {:>14} {:>10}", "eps", "quantity", "sup", "ratio");
        for p in &result.probes {
            let _ = writeln!(
                s,
                "{:>10.4} {:>10} {:>14.6e} {:>10}",
                p.eps,
                p.quantity.name(),
                p.sup_value,
                p.ratio_to_previous.map_or_else(|| "-".to_string(), |r| format!("{r:.4}"))
            );
        }
        let _ = writeln!(s);
    }

    if result.flags.is_empty() {
        let _ = writeln!(s, "flags: none");
    } else {
        let _ = writeln!(s, "flags:");
        for f in &result.flags {
            let _ = writeln!(s, "  - {f}");
        }
    }
    s
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `study.csv` and/or `report.txt` (plus `probes.csv` when probes
/// are attached) under `dir`; returns the written paths.
pub fn emit(result: &StudyResult, formats: &[Format], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for f in formats {
        let (name, text) = match f {
            Format::Csv => ("study.csv", study_csv(result)),
            Format::Report => ("report.txt", study_report(result)),
        };
        let path = dir.join(name);
        write_file(&path, &text)?;
        written.push(path);
    }
    if !result.probes.is_empty() && formats.contains(&Format::Csv) {
        let path = dir.join("probes.csv");
        write_file(&path, &probe_csv(&result.probes))?;
        written.push(path);
    }
    Ok(written)
}
