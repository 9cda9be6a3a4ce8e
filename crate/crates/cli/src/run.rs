//! Execution of a resolved job and artifact emission.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use momentlab::kernels::{KernelGrid, KernelTag};
use momentlab::precision::to_decimal;
use momentlab::spectral::{fit_decay, section_stabilization, spectrum};
use momentlab::stability::{log_grid, modulus_curve};
use momentlab::verify::{self, hilbert_rate_limit, hilbert_row};
use momentlab::PrecisionContext;
use rug::Float;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{Job, Resolved};

pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Ok,
    /// A numerical diagnostic flagged the result.
    Unreliable,
    /// At least one acceptance check failed.
    Failed,
}

#[derive(Debug)]
pub enum RunError {
    Io(std::io::Error),
    Numeric(momentlab::Error),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Io(e) => write!(f, "i/o error: {e}"),
            RunError::Numeric(e) => write!(f, "computation failed: {e}"),
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

impl From<momentlab::Error> for RunError {
    fn from(e: momentlab::Error) -> Self {
        RunError::Numeric(e)
    }
}

#[derive(Debug)]
pub struct Outcome {
    pub status: Status,
    pub dir: PathBuf,
    /// Lines for the terminal.
    pub summary: Vec<String>,
}

fn write_with<F>(path: &Path, f: F) -> std::io::Result<()>
where
    F: FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>,
{
    let mut w = BufWriter::new(fs::File::create(path)?);
    f(&mut w)?;
    w.flush()
}

fn write_json(path: &Path, v: &Value) -> std::io::Result<()> {
    write_with(path, |w| {
        serde_json::to_writer_pretty(&mut *w, v)?;
        writeln!(w)
    })
}

/// Run `cfg` unless its run directory already holds a finished report.
pub fn execute(cfg: &Resolved, force: bool) -> Result<Outcome, RunError> {
    let dir = cfg.run_dir();
    let report_path = dir.join(REPORT_FILE);
    if !force {
        if let Some(outcome) = cached(&dir, &report_path) {
            return Ok(outcome);
        }
    }
    fs::create_dir_all(&dir)?;
    let _ = fs::remove_file(&report_path);
    let (status, result, summary) = compute(cfg, &dir)?;
    let envelope = json!({
        "command": cfg.job.kind().name(),
        "version": env!("CARGO_PKG_VERSION"),
        "config_hash": cfg.hash(),
        "config": serde_json::from_str::<Value>(&cfg.canonical()).expect("canonical json"),
        "precision_bits": cfg.bits,
        "status": status,
        "result": result,
    });
    write_json(&report_path, &envelope)?;
    Ok(Outcome {
        status,
        dir,
        summary,
    })
}

fn cached(dir: &Path, report_path: &Path) -> Option<Outcome> {
    let text = fs::read_to_string(report_path).ok()?;
    let v: Value = serde_json::from_str(&text).ok()?;
    let status: Status = serde_json::from_value(v.get("status")?.clone()).ok()?;
    let mut summary = vec![format!("cached result in {}", dir.display())];
    if let Some(lines) = v["result"]["lines"].as_array() {
        summary.extend(lines.iter().filter_map(|l| l.as_str().map(String::from)));
    }
    Some(Outcome {
        status,
        dir: dir.to_path_buf(),
        summary,
    })
}

fn compute(cfg: &Resolved, dir: &Path) -> Result<(Status, Value, Vec<String>), RunError> {
    let ctx = PrecisionContext::new(cfg.bits)?;
    let exec = cfg.exec;
    match &cfg.job {
        Job::Spectrum { spec } => {
            let report = spectrum(&ctx, spec, exec)?;
            write_with(&dir.join("spectrum.csv"), |w| report.write_csv(w))?;
            let status = if report.reliable() { Status::Ok } else { Status::Unreliable };
            let summary = vec![format!(
                "{spec} {}x{}: sigma_1 = {:.6e}, sigma_{} = {:.6e}, reliable = {}",
                report.rows,
                report.cols,
                report.sigmas[0].to_f64(),
                report.n(),
                report.sigmas[report.n() - 1].to_f64(),
                report.reliable()
            )];
            Ok((status, report.to_json(), summary))
        }
        Job::Hilbert { n } => {
            let limit = hilbert_rate_limit();
            let mut rows = Vec::with_capacity(*n);
            let mut csv = vec!["n,inv_norm,log_rate".to_string()];
            let mut summary = vec![format!("{:>3}  {:>14}  {:>8}   (limit 4ln(1+sqrt 2) = {limit:.4})", "n", "||H_n^-1||", "rate")];
            for m in 1..=*n {
                let row = hilbert_row(&ctx, m, exec)?;
                let rate = Float::with_val(row.bits, row.inv_norm.ln_ref()) / m as u32;
                csv.push(format!("{},{},{}", m, to_decimal(&row.inv_norm), to_decimal(&rate)));
                summary.push(format!("{m:>3}  {:>14.6e}  {:>8.4}", row.inv_norm.to_f64(), row.log_rate));
                rows.push(json!({
                    "n": m,
                    "bits": row.bits,
                    "inv_norm": to_decimal(&row.inv_norm),
                    "log_rate": to_decimal(&rate),
                    "identity_defect": row.identity_defect,
                }));
            }
            write_with(&dir.join("hilbert.csv"), |w| {
                for line in &csv {
                    writeln!(w, "{line}")?;
                }
                Ok(())
            })?;
            Ok((Status::Ok, json!({ "rate_limit": limit, "rows": rows }), summary))
        }
        Job::Kernel { tag, grid } => {
            let tag = KernelTag::from_str(tag)?;
            let g = KernelGrid::uniform(&ctx, tag, *grid, exec)?;
            write_with(&dir.join("kernel.csv"), |w| g.write_csv(w))?;
            let asym = g.max_asymmetry().map(|a| to_decimal(&a));
            let summary = vec![format!("{tag}: {grid}x{grid} grid written")];
            Ok((
                Status::Ok,
                json!({ "tag": tag.to_string(), "grid": grid, "symmetric_kernel": tag.is_symmetric(), "max_asymmetry": asym }),
                summary,
            ))
        }
        Job::Modulus {
            d,
            a,
            n,
            delta_hi_exp,
            delta_lo_exp,
            per_decade,
        } => {
            let grid = log_grid(&ctx, *delta_hi_exp, *delta_lo_exp, *per_decade);
            let curve = modulus_curve(&ctx, d, a, *n, &grid, exec)?;
            write_with(&dir.join("modulus.csv"), |w| curve.write_csv(w))?;
            let products: Vec<f64> = curve
                .deltas
                .iter()
                .zip(&curve.omegas)
                .map(|(dl, w)| w.to_f64() * (1.0 / dl.to_f64()).ln())
                .collect();
            let c0 = products.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let status = if curve.monotone { Status::Ok } else { Status::Unreliable };
            let mut result = curve.to_json();
            result["max_omega_log_inv_delta"] = json!(c0);
            let summary = vec![format!(
                "{} points, max omega*ln(1/delta) = {c0:.4}, monotone = {}, star-shaped = {}",
                curve.deltas.len(),
                curve.monotone,
                curve.star_shaped()
            )];
            Ok((status, result, summary))
        }
        Job::Rates {
            spec,
            window,
            sizes,
            index,
        } => {
            let report = spectrum(&ctx, spec, exec)?;
            write_with(&dir.join("spectrum.csv"), |w| report.write_csv(w))?;
            let fit = fit_decay(&report.sigmas, window.0, window.1)?;
            let stab = section_stabilization(&ctx, spec, sizes, *index, exec)?;
            let reliable = report.reliable();
            let status = if reliable { Status::Ok } else { Status::Unreliable };
            let summary = vec![format!(
                "{spec}: exponent {:.4} on [{}, {}], residual {:.3e}, not power law = {}",
                fit.exponent, window.0, window.1, fit.residual, fit.not_power_law
            )];
            let result = json!({
                "spec": spec,
                "reliable": reliable,
                "fit": fit,
                "stabilization": {
                    "index": stab.index,
                    "monotone": stab.monotone,
                    "points": stab.points.iter().map(|(m, s)| json!({ "cols": m, "sigma": to_decimal(s) })).collect::<Vec<_>>(),
                },
            });
            Ok((status, result, summary))
        }
        Job::Verify { only } => {
            let mut results = Vec::new();
            for (id, f) in verify::criteria() {
                if only.contains(&id) {
                    for r in f(exec) {
                        println!("{r}");
                        results.push(r);
                    }
                }
            }
            let failed = results.iter().filter(|r| !r.passed).count();
            let status = if failed == 0 { Status::Ok } else { Status::Failed };
            let lines: Vec<String> = results.iter().map(ToString::to_string).collect();
            let summary = vec![format!("{} checks, {} failed", results.len(), failed)];
            write_with(&dir.join("verify.csv"), |w| {
                writeln!(w, "id,passed,measured,expected")?;
                for r in &results {
                    writeln!(w, "{},{},\"{}\",\"{}\"", r.id, r.passed, r.measured.replace('"', "'"), r.expected.replace('"', "'"))?;
                }
                Ok(())
            })?;
            Ok((status, json!({ "checks": results, "lines": lines }), summary))
        }
    }
}
