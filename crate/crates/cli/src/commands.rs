use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};
use std::time::Instant;

use looptrust::filtration::{Direction, FilteredComplex};
use looptrust::grid_image::{
    generate, load_image, load_labeling, save_image, save_labeling, GrayImage, PartitionLabeling,
    RingSpec, Role,
};
use looptrust::partda::{analyze, write_report_csv, LoopEstimate};
use looptrust::persistence::{compute_diagram, write_diagram_csv, PersistenceDiagram};
use looptrust::segmentation::{detect_edges, segment, write_edge_csv, EdgeSet, SegmentParams};
use looptrust::sim::{run_study, write_records_csv, write_summary_csv, Manifest, StudyConfig};
use looptrust::stda::{
    band_to_regions, local_poly_smooth, stda_band_with_smoothed, write_regions_csv,
    BANDWIDTH_DEFINITION, DEFAULT_BANDWIDTH, DEFAULT_DEGREE,
};
use looptrust::util::fmt_f64;
use looptrust::{Error, Result, VERSION};
use serde::Serialize;
use serde_json::json;

use crate::{
    AnalyzeArgs, Command, DiagramArgs, EdgeArgs, GenerateArgs, ImageFormat, SegmentArgs,
    SimulateArgs, StdaArgs,
};

pub fn version_string() -> &'static str {
    VERSION
}

pub(crate) fn dispatch(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Generate(a) => cmd_generate(a),
        Command::Diagram(a) => cmd_diagram(a),
        Command::Segment(a) => cmd_segment(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Stda(a) => cmd_stda(a),
        Command::Simulate(a) => cmd_simulate(a),
    }
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Io(io::Error::new(
            io::ErrorKind::NotFound,
            format!("{}: no such file", path.display()),
        )))
    }
}

fn require_labeling(path: &Path) -> Result<()> {
    require_file(path)?;
    require_file(&path.with_extension("json"))
}

fn prepare_out_dir(dir: &Path) -> Result<()> {
    if dir.exists() && !dir.is_dir() {
        return Err(Error::Io(io::Error::new(
            io::ErrorKind::AlreadyExists,
            format!("{}: exists and is not a directory", dir.display()),
        )));
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn read_json_spec<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::InvalidSpec(format!("{}: {e}", path.display())))
}

fn diagram_of(image: &GrayImage, direction: Direction) -> PersistenceDiagram {
    compute_diagram(&FilteredComplex::build(image, direction))
}

fn segment_params(e: &EdgeArgs) -> Result<SegmentParams> {
    if !(e.gaussian_sigma.is_finite() && e.gaussian_sigma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "gaussian sigma must be positive, got {}",
            e.gaussian_sigma
        )));
    }
    Ok(SegmentParams {
        gaussian_sigma: e.gaussian_sigma,
        threshold: e.threshold,
        correct: !e.no_correct,
        assign_edges: !e.hold_out_edges,
    })
}

fn edges_of(labeling: &PartitionLabeling) -> Result<EdgeSet> {
    EdgeSet::from_mask(labeling.width(), labeling.height(), labeling.edge_mask().to_vec())
}

fn cmd_generate(a: &GenerateArgs) -> Result<()> {
    require_file(&a.spec)?;
    let spec: RingSpec = read_json_spec(&a.spec)?;
    spec.validate()?;
    prepare_out_dir(&a.out)?;
    let (image, labeling) = generate(&spec, a.seed)?;
    let image_name = match a.image_format {
        ImageFormat::Csv => "image.csv",
        ImageFormat::Png => "image.png",
    };
    save_image(&image, a.out.join(image_name))?;
    save_labeling(&labeling, a.out.join("labeling.csv"))?;
    write_json(
        &a.out.join("manifest.json"),
        &json!({
            "version": VERSION,
            "seed": a.seed,
            "spec": spec,
            "image": image_name,
            "labeling": "labeling.csv",
            "labeling_sidecar": "labeling.json",
        }),
    )?;
    log::info!("wrote {}x{} image to {}", image.width(), image.height(), a.out.display());
    Ok(())
}

fn cmd_diagram(a: &DiagramArgs) -> Result<()> {
    require_file(&a.image)?;
    let image = load_image(&a.image)?;
    let csv = write_diagram_csv(&diagram_of(&image, a.direction.into()));
    match &a.out {
        Some(path) => fs::write(path, csv)?,
        None => match io::stdout().lock().write_all(csv.as_bytes()) {
            // a closed pipe (`| head`) is not a failure
            Err(e) if e.kind() == io::ErrorKind::BrokenPipe => {}
            r => r?,
        },
    }
    Ok(())
}

fn cmd_segment(a: &SegmentArgs) -> Result<()> {
    require_file(&a.image)?;
    let params = segment_params(&a.edges)?;
    prepare_out_dir(&a.out)?;
    let image = load_image(&a.image)?;
    let seg = segment(&image, &params)?;
    fs::write(a.out.join("edges.csv"), write_edge_csv(&seg.edges))?;
    save_labeling(&seg.labeling, a.out.join("labeling.csv"))?;
    log::info!(
        "{} edge pixels, {} loops",
        seg.edges.len(),
        seg.labeling.loop_count()
    );
    Ok(())
}

#[derive(Serialize)]
struct RegionEntry {
    loop_label: u32,
    diagram_point: (f64, f64),
    estimate: (f64, f64),
    persistence: f64,
    persistence_half_width: f64,
    n: (usize, usize),
    /// `None` when the region is degenerate.
    ellipse: Option<Ellipse>,
    covered: Option<bool>,
    notice: Option<String>,
}

#[derive(Serialize)]
struct Ellipse {
    center: (f64, f64),
    variance: (f64, f64),
    semi_axes: (f64, f64),
    chi2_quantile: f64,
    area: f64,
}

fn region_entry(e: &LoopEstimate, truth: Option<(f64, f64)>) -> RegionEntry {
    let (death, birth) = e.estimate();
    let ellipse = e.region.map(|r| Ellipse {
        center: r.center,
        variance: r.variance,
        semi_axes: (
            (r.chi2_quantile * r.variance.0).sqrt(),
            (r.chi2_quantile * r.variance.1).sqrt(),
        ),
        chi2_quantile: r.chi2_quantile,
        area: r.area(),
    });
    let covered = match (truth, e.region) {
        (Some(t), Some(r)) => Some(r.contains(t)),
        (Some(t), None) => Some(t == (death, birth)),
        _ => None,
    };
    RegionEntry {
        loop_label: e.loop_label,
        diagram_point: e.diagram_point,
        estimate: (death, birth),
        persistence: e.interval.0,
        persistence_half_width: e.interval.1,
        n: (e.interior.n, e.ring.n),
        notice: e
            .region
            .is_none()
            .then(|| "degenerate region: both partitions are constant".to_string()),
        ellipse,
        covered,
    }
}

fn cmd_analyze(a: &AnalyzeArgs) -> Result<()> {
    require_file(&a.image)?;
    if let Some(l) = &a.labeling {
        require_labeling(l)?;
    }
    let params = segment_params(&a.edges)?;
    prepare_out_dir(&a.out)?;
    let image = load_image(&a.image)?;
    let diagram = diagram_of(&image, Direction::Upper);
    fs::write(a.out.join("diagram.csv"), write_diagram_csv(&diagram))?;

    let mut notices = Vec::new();
    let labeling = match &a.labeling {
        Some(path) => Some(load_labeling(path)?),
        None => match segment(&image, &params) {
            Ok(seg) => Some(seg.labeling),
            Err(Error::DegenerateSegmentation(msg)) => {
                log::warn!("degenerate segmentation: {msg}");
                notices.push(format!("degenerate segmentation: {msg}"));
                None
            }
            Err(e) => return Err(e),
        },
    };
    let edges = match &labeling {
        Some(l) => edges_of(l)?,
        None => detect_edges(&image, params.gaussian_sigma, params.threshold)?,
    };
    fs::write(a.out.join("edges.csv"), write_edge_csv(&edges))?;

    let estimates = match &labeling {
        Some(l) => {
            let smoothed = if a.smooth_hint {
                let s = local_poly_smooth(&image, DEFAULT_DEGREE, DEFAULT_BANDWIDTH)?;
                let d = diagram_of(&s, Direction::Upper);
                Some((s, d))
            } else {
                None
            };
            let hint = smoothed.as_ref().map(|(s, d)| (s, d));
            let (matches, estimates) = analyze(&image, l, &diagram, a.alpha, hint)?;
            if matches.pairs.len() < l.loop_count() {
                notices.push(format!(
                    "{} of {} segmented loops matched a diagram point",
                    matches.pairs.len(),
                    l.loop_count()
                ));
            }
            estimates
        }
        None => Vec::new(),
    };
    log::info!("{} matched loops", estimates.len());

    let truth: BTreeMap<u32, (f64, f64)> = match a.truth {
        // a single truth applies to every matched loop
        Some(t) => estimates.iter().map(|e| (e.loop_label, t)).collect(),
        None => BTreeMap::new(),
    };
    fs::write(a.out.join("report.csv"), write_report_csv(&estimates, &truth))?;
    let entries: Vec<RegionEntry> = estimates.iter().map(|e| region_entry(e, a.truth)).collect();
    let loops = labeling.as_ref().map_or(0, |l| l.loop_count());
    write_json(
        &a.out.join("regions.json"),
        &json!({
            "alpha": a.alpha,
            "segmented_loops": loops,
            "matched_loops": entries.len(),
            "loops": entries,
            "notices": notices,
        }),
    )?;
    Ok(())
}

/// One stratum for the whole image, used when segmentation finds nothing.
fn single_stratum(image: &GrayImage) -> Result<PartitionLabeling> {
    let n = image.len();
    PartitionLabeling::new(
        image.width(),
        image.height(),
        vec![0; n],
        vec![false; n],
        [(0, Role::Background)].into(),
    )
}

fn cmd_stda(a: &StdaArgs) -> Result<()> {
    require_file(&a.image)?;
    if let Some(l) = &a.labeling {
        require_labeling(l)?;
    }
    let params = segment_params(&a.edges)?;
    prepare_out_dir(&a.out)?;
    let image = load_image(&a.image)?;
    let strata = match &a.labeling {
        Some(path) => load_labeling(path)?,
        None => match segment(&image, &params) {
            Ok(seg) => seg.labeling,
            Err(Error::DegenerateSegmentation(msg)) => {
                log::warn!("degenerate segmentation ({msg}); bootstrapping without strata");
                single_stratum(&image)?
            }
            Err(e) => return Err(e),
        },
    };
    let (band, smoothed) = stda_band_with_smoothed(
        &image,
        &strata,
        a.degree,
        a.bandwidth,
        a.bootstrap,
        a.alpha,
        a.seed,
    )?;
    save_image(&smoothed, a.out.join("smoothed.csv"))?;
    let mut distances = String::from("replicate,distance\n");
    for (b, d) in band.distances.iter().enumerate() {
        distances.push_str(&format!("{b},{}\n", fmt_f64(*d)));
    }
    fs::write(a.out.join("distances.csv"), distances)?;
    let regions = band_to_regions(&band, &diagram_of(&smoothed, Direction::Upper));
    fs::write(a.out.join("regions.csv"), write_regions_csv(&regions))?;
    write_json(
        &a.out.join("band.json"),
        &json!({
            "c_n": band.c_n,
            "alpha": band.alpha,
            "B": band.b,
            "distances_path": "distances.csv",
            "degree": a.degree,
            "bandwidth": a.bandwidth,
            "bandwidth_definition": BANDWIDTH_DEFINITION,
            "seed": a.seed,
            "version": VERSION,
        }),
    )?;
    log::info!(
        "c_n = {}, {} of {} loops significant",
        band.c_n,
        regions.iter().filter(|r| r.significant).count(),
        regions.len()
    );
    Ok(())
}

fn load_config(a: &SimulateArgs) -> Result<StudyConfig> {
    let mut config = StudyConfig::from_json(&fs::read_to_string(&a.config)?)?;
    if let Some(r) = a.replicates {
        config.replicates = r;
    }
    if let Some(s) = a.seed {
        config.master_seed = s;
    }
    config.validate()?;
    Ok(config)
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    require_file(&a.config)?;
    let config = load_config(a)?;
    prepare_out_dir(&a.out)?;
    let start = Instant::now();
    let result = run_study(&config)?;
    let summary = PathBuf::from("summary.csv");
    let records = PathBuf::from("records.csv");
    fs::write(a.out.join(&summary), write_summary_csv(&result))?;
    fs::write(a.out.join(&records), write_records_csv(&result))?;
    let manifest = Manifest {
        master_seed: config.master_seed,
        config,
        seed_rule: "split_seed(master_seed, [cell, replicate, stream]); stream 0 draws the image, \
                    stream 1 seeds the bootstrap, whose replicate b uses split_seed(that seed, [b])"
            .into(),
        version: VERSION.into(),
        bandwidth_definition: BANDWIDTH_DEFINITION.into(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        summary_csv: summary.display().to_string(),
        records_csv: records.display().to_string(),
    };
    write_json(&a.out.join("manifest.json"), &manifest)?;
    log::info!(
        "{} rows in {:.1} s",
        result.rows.len(),
        manifest.wall_clock_seconds
    );
    Ok(())
}
