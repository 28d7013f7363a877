use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{confidence_region, match_loops, partition_stats, persistence_interval};
use super::{ConfidenceRegion, MatchResult, PartitionStats};
use crate::grid_image::{GrayImage, PartitionLabeling, Role};
use crate::persistence::PersistenceDiagram;
use crate::util::fmt_f64;
use crate::{Error, Result};

pub const REPORT_CSV_HEADER: &str = "loop_label,death_est,birth_est,persistence,area,covered";

/// Everything estimated for one matched loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopEstimate {
    pub loop_label: u32,
    pub point_index: usize,
    /// `(death, birth)` of the matched diagram point.
    pub diagram_point: (f64, f64),
    pub interior: PartitionStats,
    pub ring: PartitionStats,
    /// `None` when both partitions are constant.
    pub region: Option<ConfidenceRegion>,
    /// Persistence estimate and half-width.
    pub interval: (f64, f64),
}

impl LoopEstimate {
    /// `(death, birth)` estimate from the partition means.
    pub fn estimate(&self) -> (f64, f64) {
        (self.interior.mean, self.ring.mean)
    }

    pub fn covers(&self, truth: (f64, f64)) -> Option<bool> {
        self.region.map(|r| r.contains(truth))
    }
}

/// Matches loops and builds the estimates and regions for each match.
pub fn analyze(
    image: &GrayImage,
    labeling: &PartitionLabeling,
    diagram: &PersistenceDiagram,
    alpha: f64,
    smoothed: Option<(&GrayImage, &PersistenceDiagram)>,
) -> Result<(MatchResult, Vec<LoopEstimate>)> {
    let matches = match_loops(diagram, labeling, image, smoothed)?;
    let mut out = Vec::with_capacity(matches.pairs.len());
    for m in &matches.pairs {
        let interior = partition_stats(image, labeling, Role::Interior(m.loop_label))?;
        let ring = partition_stats(image, labeling, Role::Loop(m.loop_label))?;
        let region = match confidence_region(&interior, &ring, alpha) {
            Ok(r) => Some(r),
            Err(Error::DegenerateRegion(msg)) => {
                log::warn!("loop {}: degenerate region ({msg})", m.loop_label);
                None
            }
            Err(e) => return Err(e),
        };
        let p = diagram.points[m.point_index];
        out.push(LoopEstimate {
            loop_label: m.loop_label,
            point_index: m.point_index,
            diagram_point: (p.death, p.birth),
            interior,
            ring,
            region,
            interval: persistence_interval(&interior, &ring, alpha)?,
        });
    }
    Ok((matches, out))
}

/// One row per matched loop. `area` is empty for degenerate regions and
/// `covered` is empty unless a truth is given for that loop.
pub fn write_report_csv(estimates: &[LoopEstimate], truth: &BTreeMap<u32, (f64, f64)>) -> String {
    let mut out = String::from(REPORT_CSV_HEADER);
    out.push('\n');
    for e in estimates {
        let (d, b) = e.estimate();
        let area = e.region.map(|r| fmt_f64(r.area())).unwrap_or_default();
        let covered = truth
            .get(&e.loop_label)
            .and_then(|&t| e.covers(t))
            .map(|c| c.to_string())
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            e.loop_label,
            fmt_f64(d),
            fmt_f64(b),
            fmt_f64(b - d),
            area,
            covered
        ));
    }
    out
}
