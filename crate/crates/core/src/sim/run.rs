use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Factor, Geometry, Method, Segmentation, StudyConfig, StudyKind};
use super::record::{summarize, ReplicateRecord, StudyResult};
use crate::filtration::{Direction, FilteredComplex};
use crate::grid_image::{generate, GrayImage, PartitionLabeling, RingSpec, Role};
use crate::partda::{analyze, match_loops, LoopEstimate};
use crate::persistence::{compute_diagram, PersistenceDiagram};
use crate::segmentation::{correct_misclassified, loop_contour, segment, SegmentParams};
use crate::stda::{local_poly_smooth, stda_band_with_smoothed, SquareRegion};
use crate::util::split_seed;
use crate::{Error, Result};

/// One combination of factor levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub index: usize,
    pub factor: Factor,
    /// Position of the level in its factor's list, from 1.
    pub level: usize,
    pub value: f64,
    pub sigma: f64,
    pub geometry: Geometry,
    /// `(death, birth)` of the loop in the noise-free pattern.
    pub truth: (f64, f64),
    /// Same for the smoothed noise-free pattern, when sTDA runs.
    pub smoothed_truth: Option<(f64, f64)>,
}

fn cells(config: &StudyConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for (factor, level, value, geometry) in config.geometries() {
        for (k, &sigma) in config.sigmas.iter().enumerate() {
            let (level, value) = if factor == Factor::Sigma {
                (k + 1, sigma)
            } else {
                (level, value)
            };
            out.push(Cell {
                index: out.len(),
                factor,
                level,
                value,
                sigma,
                geometry,
                truth: (config.truth.1, config.truth.2),
                smoothed_truth: None,
            });
        }
    }
    out
}

/// Per-cell inputs shared by all replicates.
struct CellContext {
    spec: RingSpec,
    /// sTDA bootstrap strata for known partitions.
    strata: Option<PartitionLabeling>,
    /// Corrupted labeling for the misclassification study.
    corrupted: Option<PartitionLabeling>,
}

fn upper_diagram(image: &GrayImage) -> PersistenceDiagram {
    compute_diagram(&FilteredComplex::build(image, Direction::Upper))
}

fn first_loop(labeling: &PartitionLabeling) -> Option<u32> {
    labeling.loop_indices().first().copied()
}

/// The matched H1 point of a diagram as `(death, birth)`.
fn matched_point(
    diagram: &PersistenceDiagram,
    labeling: &PartitionLabeling,
    image: &GrayImage,
) -> Result<Option<(f64, f64, u32)>> {
    let m = match_loops(diagram, labeling, image, None)?;
    Ok(m.pairs.first().map(|p| {
        let q = diagram.points[p.point_index];
        (q.death, q.birth, p.loop_label)
    }))
}

fn prepare(config: &StudyConfig, cell: &mut Cell) -> Result<CellContext> {
    let spec = cell.geometry.spec(config.truth, cell.sigma);
    let pattern = spec.pattern()?;
    let truth_labeling = spec.truth_labeling()?;
    let mut strata = None;
    if config.methods.contains(&Method::Stda) {
        let s = &config.stda;
        let smoothed = local_poly_smooth(&pattern, s.degree, s.bandwidth)?;
        let (d, b, _) = matched_point(&upper_diagram(&smoothed), &truth_labeling, &smoothed)?
            .ok_or_else(|| {
                Error::InvalidSpec("the smoothed pattern has no loop matching the ring".into())
            })?;
        cell.smoothed_truth = Some((d, b));
        if config.segmentation == Segmentation::Truth {
            strata = Some(segment(&pattern, &SegmentParams::default())?.labeling);
        }
    }
    let corrupted = if config.study == StudyKind::Misclassification {
        Some(misclassify_interior(&truth_labeling, config.misclassified_pixels)?)
    } else {
        None
    };
    Ok(CellContext {
        spec,
        strata,
        corrupted,
    })
}

/// Relabels `count` interior pixels of the first loop as loop pixels: a
/// horizontal run centered in the interior's top row, next to the loop.
pub fn misclassify_interior(labeling: &PartitionLabeling, count: usize) -> Result<PartitionLabeling> {
    if count == 0 {
        return Ok(labeling.clone());
    }
    let w = labeling.width();
    let i = first_loop(labeling).ok_or_else(|| Error::InvalidArgument("labeling has no loop".into()))?;
    let inside = labeling.pixels_with_role(Role::Interior(i));
    let top = inside.iter().map(|&j| j / w).min().ok_or_else(|| {
        Error::InvalidArgument(format!("loop {i} has no interior pixels"))
    })?;
    let row: Vec<usize> = inside.into_iter().filter(|&j| j / w == top).collect();
    if row.len() < count || top == 0 {
        return Err(Error::InvalidArgument(format!(
            "interior top row has {} pixels, cannot misclassify {count}",
            row.len()
        )));
    }
    let start = (row.len() - count) / 2;
    let picked = &row[start..start + count];
    let loop_label = labeling.label(picked[0] - w);
    if labeling.roles().get(&loop_label) != Some(&Role::Loop(i)) {
        return Err(Error::InvalidArgument("interior top row does not border the loop".into()));
    }
    let mut labels = labeling.labels().to_vec();
    for &j in picked {
        labels[j] = loop_label;
    }
    PartitionLabeling::new(
        w,
        labeling.height(),
        labels,
        labeling.edge_mask().to_vec(),
        labeling.roles().clone(),
    )
}

fn missing(cell: &Cell, replicate: usize, method: Method, covered: Option<bool>) -> ReplicateRecord {
    ReplicateRecord {
        cell: cell.index,
        replicate,
        method,
        death: None,
        birth: None,
        covered,
        area: None,
        p_b: None,
    }
}

/// Record of the first loop estimate; a degenerate region covers exactly
/// its own center and has zero area.
fn partda_record(
    cell: &Cell,
    replicate: usize,
    method: Method,
    estimates: Result<Vec<LoopEstimate>>,
) -> ReplicateRecord {
    match estimates {
        Ok(est) if !est.is_empty() => {
            let e = &est[0];
            let (d, b) = e.estimate();
            let (covered, area) = match e.region {
                Some(r) => (r.contains(cell.truth), r.area()),
                None => ((d, b) == cell.truth, 0.0),
            };
            ReplicateRecord {
                cell: cell.index,
                replicate,
                method,
                death: Some(d),
                birth: Some(b),
                covered: Some(covered),
                area: Some(area),
                p_b: None,
            }
        }
        Ok(_) => missing(cell, replicate, method, Some(false)),
        Err(e) => {
            log::warn!("cell {} replicate {replicate}: {method} failed: {e}", cell.index);
            missing(cell, replicate, method, Some(false))
        }
    }
}

fn ttda_record(
    cell: &Cell,
    replicate: usize,
    image: &GrayImage,
    diagram: &PersistenceDiagram,
    labeling: &PartitionLabeling,
) -> ReplicateRecord {
    match matched_point(diagram, labeling, image) {
        Ok(Some((d, b, label))) => {
            // share of loop pixels already present when the loop is born
            let ring = labeling.pixels_with_role(Role::Loop(label));
            let present = ring.iter().filter(|&&j| image.data()[j] >= b).count();
            ReplicateRecord {
                cell: cell.index,
                replicate,
                method: Method::Ttda,
                death: Some(d),
                birth: Some(b),
                covered: None,
                area: None,
                p_b: Some(present as f64 / ring.len() as f64),
            }
        }
        Ok(None) => missing(cell, replicate, Method::Ttda, None),
        Err(e) => {
            log::warn!("cell {} replicate {replicate}: tTDA failed: {e}", cell.index);
            missing(cell, replicate, Method::Ttda, None)
        }
    }
}

fn stda_record(
    config: &StudyConfig,
    cell: &Cell,
    replicate: usize,
    image: &GrayImage,
    strata: &PartitionLabeling,
    roles: &PartitionLabeling,
) -> ReplicateRecord {
    let s = &config.stda;
    let seed = split_seed(config.master_seed, &[cell.index as u64, replicate as u64, 1]);
    let run = || -> Result<ReplicateRecord> {
        let (band, smoothed) = stda_band_with_smoothed(
            image,
            strata,
            s.degree,
            s.bandwidth,
            s.bootstrap_replicates,
            config.alpha,
            seed,
        )?;
        let area = Some(4.0 * band.c_n * band.c_n);
        let Some((d, b, _)) = matched_point(&upper_diagram(&smoothed), roles, &smoothed)? else {
            return Ok(ReplicateRecord {
                area,
                ..missing(cell, replicate, Method::Stda, Some(false))
            });
        };
        let region = SquareRegion {
            death: d,
            birth: b,
            c_n: band.c_n,
            significant: (b - d) / 2.0 > band.c_n,
        };
        let target = cell.smoothed_truth.expect("prepared with sTDA");
        Ok(ReplicateRecord {
            cell: cell.index,
            replicate,
            method: Method::Stda,
            death: Some(d),
            birth: Some(b),
            covered: Some(region.contains(target)),
            area,
            p_b: None,
        })
    };
    run().unwrap_or_else(|e| {
        log::warn!("cell {} replicate {replicate}: sTDA failed: {e}", cell.index);
        missing(cell, replicate, Method::Stda, Some(false))
    })
}

fn replicate(
    config: &StudyConfig,
    cell: &Cell,
    ctx: &CellContext,
    r: usize,
) -> Result<Vec<ReplicateRecord>> {
    let seed = split_seed(config.master_seed, &[cell.index as u64, r as u64, 0]);
    let (image, truth) = generate(&ctx.spec, seed)?;
    let diagram = upper_diagram(&image);
    let mut out = Vec::with_capacity(config.methods.len());

    if let Some(corrupted) = &ctx.corrupted {
        let e_hat = loop_contour(corrupted);
        let mis = corrupted.with_edge_mask(e_hat.mask().to_vec())?;
        for &m in &config.methods {
            let labeling = match m {
                Method::PartdaMisclassified => mis.clone(),
                _ => {
                    let e_new = correct_misclassified(&e_hat, &image, &mis)?;
                    mis.with_edge_mask(e_new.mask().to_vec())?
                }
            };
            let est = analyze(&image, &labeling, &diagram, config.alpha, None).map(|r| r.1);
            out.push(partda_record(cell, r, m, est));
        }
        return Ok(out);
    }

    let labeling = match config.segmentation {
        Segmentation::Truth => Ok(truth.clone()),
        Segmentation::Estimated => segment(&image, &SegmentParams::default()).map(|s| s.labeling),
    };
    for &m in &config.methods {
        let labeling = match &labeling {
            Ok(l) => l,
            Err(e) => {
                log::warn!("cell {} replicate {r}: segmentation failed: {e}", cell.index);
                let covered = (m != Method::Ttda).then_some(false);
                out.push(missing(cell, r, m, covered));
                continue;
            }
        };
        out.push(match m {
            Method::Ttda => ttda_record(cell, r, &image, &diagram, labeling),
            Method::Partda => {
                let est = analyze(&image, labeling, &diagram, config.alpha, None).map(|r| r.1);
                partda_record(cell, r, m, est)
            }
            Method::Stda => {
                let strata = ctx.strata.as_ref().unwrap_or(labeling);
                stda_record(config, cell, r, &image, strata, labeling)
            }
            _ => unreachable!("rejected by validation"),
        });
    }
    Ok(out)
}

fn run(config: &StudyConfig, kind: StudyKind) -> Result<StudyResult> {
    if config.study != kind {
        return Err(Error::InvalidSpec(format!(
            "expected a {kind:?} study config, got {:?}",
            config.study
        )));
    }
    config.validate()?;
    let mut cells = cells(config);
    let contexts = cells
        .iter_mut()
        .map(|c| prepare(config, c))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..config.replicates).map(move |r| (c, r)))
        .collect();
    let records = jobs
        .into_par_iter()
        .map(|(c, r)| replicate(config, &cells[c], &contexts[c], r))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect::<Vec<_>>();
    let rows = summarize(&cells, &config.methods, &records);
    Ok(StudyResult {
        config: config.clone(),
        cells,
        rows,
        records,
    })
}

pub fn run_coverage_study(config: &StudyConfig) -> Result<StudyResult> {
    run(config, StudyKind::Coverage)
}

pub fn run_bias_study(config: &StudyConfig) -> Result<StudyResult> {
    run(config, StudyKind::Bias)
}

pub fn run_misclassification_study(config: &StudyConfig) -> Result<StudyResult> {
    run(config, StudyKind::Misclassification)
}

pub fn run_study(config: &StudyConfig) -> Result<StudyResult> {
    run(config, config.study)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_coverage() -> StudyConfig {
        StudyConfig {
            replicates: 6,
            sigmas: vec![0.0, 50.0],
            geometry: Geometry {
                dimension: 40,
                outer_half_extent: 12,
                thickness: 4,
            },
            methods: vec![Method::Ttda, Method::Partda],
            master_seed: 17,
            ..StudyConfig::coverage()
        }
    }

    #[test]
    fn noiseless_cell_is_exact() {
        let res = run_coverage_study(&small_coverage()).unwrap();
        let row = res
            .rows
            .iter()
            .find(|r| r.sigma == 0.0 && r.method == Method::Partda)
            .unwrap();
        assert_eq!((row.mean_estimate_death, row.mean_estimate_birth), (Some(1000.0), Some(3000.0)));
        assert_eq!(row.coverage, Some(1.0));
        assert_eq!(row.mean_area, Some(0.0));
    }

    #[test]
    fn results_are_deterministic_and_prefix_stable() {
        let c = small_coverage();
        let a = run_coverage_study(&c).unwrap();
        let b = run_coverage_study(&c).unwrap();
        assert_eq!(a, b);
        let more = run_coverage_study(&StudyConfig { replicates: 9, ..c }).unwrap();
        for rec in &a.records {
            assert!(more.records.contains(rec));
        }
        assert_eq!(a.rows.len(), 4);
    }

    #[test]
    fn wrong_runner_is_rejected() {
        assert!(matches!(
            run_bias_study(&small_coverage()),
            Err(Error::InvalidSpec(_))
        ));
    }

    #[test]
    fn misclassify_moves_a_centered_run() {
        let spec = RingSpec::centered(40, 12, 4, 500.0, 1000.0, 3000.0, 0.0);
        let lab = spec.truth_labeling().unwrap();
        let bad = misclassify_interior(&lab, 6).unwrap();
        let moved: Vec<usize> = (0..1600).filter(|&j| lab.label(j) != bad.label(j)).collect();
        assert_eq!(moved.len(), 6);
        let top = 20 - 8;
        assert_eq!(moved, (17..23).map(|x| top * 40 + x).collect::<Vec<_>>());
        assert!(moved.iter().all(|&j| bad.role_at(j) == Some(Role::Loop(1))));
        assert_eq!(misclassify_interior(&lab, 0).unwrap(), lab);
        assert!(misclassify_interior(&lab, 100).is_err());
    }

    #[test]
    fn zero_misclassification_without_noise_gives_identical_branches() {
        let c = StudyConfig {
            replicates: 2,
            sigmas: vec![0.0],
            misclassified_pixels: 0,
            geometry: Geometry {
                dimension: 40,
                outer_half_extent: 12,
                thickness: 4,
            },
            ..StudyConfig::misclassification()
        };
        let res = run_misclassification_study(&c).unwrap();
        let (a, b) = (&res.rows[0], &res.rows[1]);
        assert_eq!(a.method, Method::PartdaMisclassified);
        assert_eq!(b.method, Method::PartdaCorrected);
        assert_eq!(
            (a.mean_estimate_death, a.mean_estimate_birth, a.coverage),
            (b.mean_estimate_death, b.mean_estimate_birth, b.coverage)
        );
    }
}
