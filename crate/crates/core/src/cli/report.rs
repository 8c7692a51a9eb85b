use std::fmt::{Display, Write as _};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::commands::{write_json, MethodRun};
use super::config::RunConfig;
use super::Method;
use crate::error::{Error, Result};
use crate::ideal::Variation;
use crate::metrics::{cosine_distance, euclidean_distance, kl_divergence};
use crate::population::StratificationIndex;

/// Stored and recomputed distances must agree to this.
pub const RECHECK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub ideal: String,
    pub variation: Option<Variation>,
    pub method: Method,
    /// `ok` or `error`.
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<MethodRun>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ReportRow {
    pub fn from_result(ideal: &str, variation: Option<Variation>, method: Method, res: Result<MethodRun>) -> Self {
        match res {
            Ok(run) => ReportRow {
                ideal: ideal.to_string(),
                variation,
                method,
                status: "ok".into(),
                result: Some(run),
                error: None,
            },
            Err(e) => Self::failed(ideal, variation, method, e),
        }
    }

    pub fn failed(ideal: &str, variation: Option<Variation>, method: Method, err: impl Display) -> Self {
        ReportRow {
            ideal: ideal.to_string(),
            variation,
            method,
            status: "error".into(),
            result: None,
            error: Some(err.to_string()),
        }
    }
}

/// Timings live apart from the report so that reports stay byte-stable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub ideal: String,
    pub method: Method,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// The config file as written.
    pub config: Option<serde_json::Value>,
    pub seed: u64,
    pub grid_step: f64,
    pub sample_size: usize,
    pub population_size: usize,
    pub strata: Vec<String>,
    pub joint_initial: Vec<f64>,
    pub rows: Vec<ReportRow>,
}

impl ComparisonReport {
    pub fn new(cfg: &RunConfig, index: &StratificationIndex, rows: Vec<ReportRow>) -> Self {
        ComparisonReport {
            config: cfg.raw.clone(),
            seed: cfg.seed,
            grid_step: cfg.grid_step,
            sample_size: cfg.sample_size,
            population_size: index.total(),
            strata: (0..index.dimension()).map(|h| index.label(h)).collect(),
            joint_initial: index.joint_initial(),
            rows,
        }
    }

    /// Recomputes every distance from the stored vectors.
    pub fn check_distances(&self, tol: f64) -> Result<()> {
        for row in &self.rows {
            let Some(r) = &row.result else { continue };
            let close = |stored: f64, fresh: f64| (stored - fresh).abs() <= tol;
            let cos = cosine_distance(&r.fractions, &r.joint_ideal)?;
            let euc = euclidean_distance(&r.fractions, &r.joint_ideal)?;
            let kl = kl_divergence(&r.fractions, &r.joint_ideal).ok();
            let kl_ok = match (r.kl_divergence, kl) {
                (Some(a), Some(b)) => close(a, b),
                (None, None) => true,
                _ => false,
            };
            if !close(r.cosine_distance, cos) || !close(r.euclidean_distance, euc) || !kl_ok {
                return Err(Error::Validation(format!(
                    "{} / {}: stored distances do not match the stored vectors",
                    row.ideal, row.method
                )));
            }
        }
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        write_json(&dir.join("report.json"), self)?;
        let csv_path = dir.join("report.csv");
        fs::write(&csv_path, self.to_csv()?).map_err(|e| Error::io(csv_path.display().to_string(), e))?;
        let alloc_path = dir.join("allocations.csv");
        fs::write(&alloc_path, self.allocations_csv()?).map_err(|e| Error::io(alloc_path.display().to_string(), e))?;
        let md_path = dir.join("report.md");
        fs::write(&md_path, self.to_markdown()).map_err(|e| Error::io(md_path.display().to_string(), e))
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "ideal",
            "variation",
            "method",
            "status",
            "cosine",
            "euclidean",
            "kl",
            "converged",
            "evaluations",
            "error",
        ])?;
        for row in &self.rows {
            let variation = row.variation.map(|v| v.to_string()).unwrap_or_default();
            let r = row.result.as_ref();
            w.write_record([
                row.ideal.clone(),
                variation,
                row.method.to_string(),
                row.status.clone(),
                r.map(|r| r.cosine_distance.to_string()).unwrap_or_default(),
                r.map(|r| r.euclidean_distance.to_string()).unwrap_or_default(),
                r.and_then(|r| r.kl_divergence).map(|k| k.to_string()).unwrap_or_default(),
                r.and_then(|r| r.converged).map(|c| c.to_string()).unwrap_or_default(),
                r.map(|r| r.evaluations.to_string()).unwrap_or_default(),
                row.error.clone().unwrap_or_default(),
            ])?;
        }
        into_string(w)
    }

    /// Long format: one line per (row, stratum), for plotting.
    pub fn allocations_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["ideal", "method", "stratum", "label", "joint_initial", "joint_ideal", "fraction", "count"])?;
        for row in &self.rows {
            let Some(r) = &row.result else { continue };
            for (h, label) in self.strata.iter().enumerate() {
                w.write_record([
                    row.ideal.clone(),
                    row.method.to_string(),
                    h.to_string(),
                    label.clone(),
                    self.joint_initial[h].to_string(),
                    r.joint_ideal[h].to_string(),
                    r.fractions[h].to_string(),
                    r.counts[h].to_string(),
                ])?;
            }
        }
        into_string(w)
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# Cohort comparison\n");
        let _ = writeln!(
            s,
            "Population of {} subjects over {} strata; sample size {}; seed {}; grid step {}.\n",
            self.population_size,
            self.strata.len(),
            self.sample_size,
            self.seed,
            self.grid_step
        );
        let _ = writeln!(s, "| ideal | variation | method | cosine | euclidean | KL | note |");
        let _ = writeln!(s, "|---|---|---|---:|---:|---:|---|");
        for row in &self.rows {
            let variation = row.variation.map(|v| v.to_string()).unwrap_or_else(|| "-".into());
            match &row.result {
                Some(r) => {
                    let kl = r.kl_divergence.map(six).unwrap_or_else(|| "inf".into());
                    let note = match r.converged {
                        Some(false) => "not converged".to_string(),
                        _ if r.evaluations > 1 && r.method != Method::Op => format!("{} combinations", r.evaluations),
                        _ => String::new(),
                    };
                    let _ = writeln!(
                        s,
                        "| {} | {} | {} | {} | {} | {} | {} |",
                        row.ideal,
                        variation,
                        row.method,
                        six(r.cosine_distance),
                        six(r.euclidean_distance),
                        kl,
                        note
                    );
                }
                None => {
                    let err = row.error.as_deref().unwrap_or("").replace('|', "/");
                    let _ =
                        writeln!(s, "| {} | {} | {} | - | - | - | error: {} |", row.ideal, variation, row.method, err);
                }
            }
        }
        s
    }
}

/// Six decimals, without a sign on values that round to zero.
fn six(x: f64) -> String {
    let s = format!("{x:.6}");
    match s.strip_prefix('-') {
        Some(rest) if rest.bytes().all(|b| b == b'0' || b == b'.') => rest.to_string(),
        _ => s,
    }
}

fn into_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::io("<csv>", e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::InvalidInput(e.to_string()))
}
