use serde::{Deserialize, Serialize};

use super::config::{Factor, Method, StudyConfig};
use super::run::Cell;
use crate::util::{fmt_f64, mean_var};

/// Outcome of one method on one replicate image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub cell: usize,
    pub replicate: usize,
    pub method: Method,
    /// `None` when the method found no loop.
    pub death: Option<f64>,
    pub birth: Option<f64>,
    /// `None` for methods without a confidence region.
    pub covered: Option<bool>,
    pub area: Option<f64>,
    /// Share of loop pixels present at the loop's birth (tTDA only).
    pub p_b: Option<f64>,
}

/// Aggregate of one method over the replicates of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: usize,
    pub factor: Factor,
    pub level: usize,
    pub value: f64,
    pub sigma: f64,
    pub method: Method,
    pub n_replicates: usize,
    pub n_missing: usize,
    pub truth_death: f64,
    pub truth_birth: f64,
    pub mean_estimate_death: Option<f64>,
    pub mean_estimate_birth: Option<f64>,
    pub bias_death: Option<f64>,
    pub bias_birth: Option<f64>,
    pub sd_death: Option<f64>,
    pub sd_birth: Option<f64>,
    pub coverage: Option<f64>,
    /// Binomial standard error.
    pub coverage_se: Option<f64>,
    pub mean_area: Option<f64>,
    pub area_se: Option<f64>,
    pub mean_p_b: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub config: StudyConfig,
    pub cells: Vec<Cell>,
    pub rows: Vec<CellSummary>,
    /// Ordered by cell, replicate and configured method.
    pub records: Vec<ReplicateRecord>,
}

impl StudyResult {
    pub fn row(&self, cell: usize, method: Method) -> Option<&CellSummary> {
        self.rows.iter().find(|r| r.cell == cell && r.method == method)
    }
}

/// Run metadata written next to the result tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: StudyConfig,
    pub master_seed: u64,
    /// Seeds are `split_seed(master_seed, [cell, replicate, stream])`
    /// with stream 0 for the image and 1 for the bootstrap.
    pub seed_rule: String,
    pub version: String,
    pub bandwidth_definition: String,
    pub wall_clock_seconds: f64,
    pub summary_csv: String,
    pub records_csv: String,
}

fn stats(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let (n, mean, var) = mean_var(values.iter().copied());
    (Some(mean), (n > 1).then(|| var.sqrt()))
}

pub fn summarize(cells: &[Cell], methods: &[Method], records: &[ReplicateRecord]) -> Vec<CellSummary> {
    let mut out = Vec::with_capacity(cells.len() * methods.len());
    for cell in cells {
        for &method in methods {
            let recs: Vec<&ReplicateRecord> = records
                .iter()
                .filter(|r| r.cell == cell.index && r.method == method)
                .collect();
            let truth = match method {
                Method::Stda => cell.smoothed_truth.unwrap_or((f64::NAN, f64::NAN)),
                _ => cell.truth,
            };
            let deaths: Vec<f64> = recs.iter().filter_map(|r| r.death).collect();
            let births: Vec<f64> = recs.iter().filter_map(|r| r.birth).collect();
            let (mean_d, sd_d) = stats(&deaths);
            let (mean_b, sd_b) = stats(&births);
            let covered: Vec<bool> = recs.iter().filter_map(|r| r.covered).collect();
            let (coverage, coverage_se) = if covered.is_empty() {
                (None, None)
            } else {
                let n = covered.len() as f64;
                let p = covered.iter().filter(|&&c| c).count() as f64 / n;
                (Some(p), Some((p * (1.0 - p) / n).sqrt()))
            };
            let areas: Vec<f64> = recs.iter().filter_map(|r| r.area).collect();
            let (mean_area, area_sd) = stats(&areas);
            let area_se = area_sd.map(|s| s / (areas.len() as f64).sqrt());
            let p_b: Vec<f64> = recs.iter().filter_map(|r| r.p_b).collect();
            out.push(CellSummary {
                cell: cell.index,
                factor: cell.factor,
                level: cell.level,
                value: cell.value,
                sigma: cell.sigma,
                method,
                n_replicates: recs.len(),
                n_missing: recs.len() - deaths.len(),
                truth_death: truth.0,
                truth_birth: truth.1,
                mean_estimate_death: mean_d,
                mean_estimate_birth: mean_b,
                bias_death: mean_d.map(|m| m - truth.0),
                bias_birth: mean_b.map(|m| m - truth.1),
                sd_death: sd_d,
                sd_birth: sd_b,
                coverage,
                coverage_se,
                mean_area,
                area_se,
                mean_p_b: stats(&p_b).0,
            });
        }
    }
    out
}

pub const SUMMARY_CSV_HEADER: &str = "cell,factor,level,value,sigma,method,n_replicates,n_missing,\
truth_death,truth_birth,mean_estimate_death,mean_estimate_birth,bias_death,bias_birth,\
sd_death,sd_birth,coverage,coverage_se,mean_area,area_se,mean_p_b";

pub const RECORDS_CSV_HEADER: &str = "cell,replicate,method,death,birth,covered,area,p_b";

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// One row per cell and method; empty fields stand for "not applicable".
pub fn write_summary_csv(result: &StudyResult) -> String {
    let mut out = String::from(SUMMARY_CSV_HEADER);
    out.push('\n');
    for r in &result.rows {
        let fields = [
            r.cell.to_string(),
            r.factor.to_string(),
            r.level.to_string(),
            fmt_f64(r.value),
            fmt_f64(r.sigma),
            r.method.to_string(),
            r.n_replicates.to_string(),
            r.n_missing.to_string(),
            fmt_f64(r.truth_death),
            fmt_f64(r.truth_birth),
            opt(r.mean_estimate_death),
            opt(r.mean_estimate_birth),
            opt(r.bias_death),
            opt(r.bias_birth),
            opt(r.sd_death),
            opt(r.sd_birth),
            opt(r.coverage),
            opt(r.coverage_se),
            opt(r.mean_area),
            opt(r.area_se),
            opt(r.mean_p_b),
        ];
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn write_records_csv(result: &StudyResult) -> String {
    let mut out = String::from(RECORDS_CSV_HEADER);
    out.push('\n');
    for r in &result.records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.cell,
            r.replicate,
            r.method,
            opt(r.death),
            opt(r.birth),
            r.covered.map(|c| c.to_string()).unwrap_or_default(),
            opt(r.area),
            opt(r.p_b)
        ));
    }
    out
}
