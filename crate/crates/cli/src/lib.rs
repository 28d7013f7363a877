//! Command-line front end: argument parsing and the subcommands.
//!
//! Exit codes: 0 on success, 1 when the computation or I/O fails, 2 for
//! invalid specs, configs and arguments.

mod commands;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use looptrust::filtration::Direction;
use looptrust::segmentation::GradientThreshold;

pub use commands::version_string;

#[derive(Debug, Parser)]
#[command(name = "looptrust", version, about = "Loop estimates and confidence regions for noisy grayscale images")]
pub struct Cli {
    /// Worker threads; defaults to all available cores. Results do not depend on it.
    #[arg(long, global = true, env = "LOOPTRUST_THREADS")]
    pub threads: Option<usize>,

    /// Log more (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic ring image and its true labeling from a JSON spec.
    Generate(GenerateArgs),
    /// Compute the persistence diagram of an image.
    Diagram(DiagramArgs),
    /// Segment an image into background, loop and interior regions.
    Segment(SegmentArgs),
    /// Match loops and report partition-based estimates with confidence regions.
    Analyze(AnalyzeArgs),
    /// Smooth, bootstrap and report square confidence regions.
    Stda(StdaArgs),
    /// Run a simulation study from a JSON config.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DirectionArg {
    Upper,
    Lower,
}

impl From<DirectionArg> for Direction {
    fn from(d: DirectionArg) -> Self {
        match d {
            DirectionArg::Upper => Direction::Upper,
            DirectionArg::Lower => Direction::Lower,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ImageFormat {
    Csv,
    Png,
}

fn parse_threshold(s: &str) -> Result<GradientThreshold, String> {
    if s.eq_ignore_ascii_case("otsu") {
        return Ok(GradientThreshold::Otsu);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(GradientThreshold::Fixed(v)),
        _ => Err(format!("expected `otsu` or a non-negative number, got {s:?}")),
    }
}

fn parse_point(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected DEATH,BIRTH, got {s:?}"))?;
    let p = |t: &str| {
        t.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| format!("not a finite number: {t:?}"))
    };
    Ok((p(a)?, p(b)?))
}

fn parse_alpha(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(a) if a > 0.0 && a < 1.0 => Ok(a),
        _ => Err(format!("alpha must lie in (0, 1), got {s:?}")),
    }
}

/// Edge-detection settings shared by the subcommands that segment.
#[derive(Debug, Clone, Args)]
pub struct EdgeArgs {
    /// Standard deviation of the Gaussian blur before edge detection.
    #[arg(long, default_value_t = 2.0)]
    pub gaussian_sigma: f64,
    /// Gradient threshold: `otsu` or a fixed value.
    #[arg(long, default_value = "otsu", value_parser = parse_threshold)]
    pub threshold: GradientThreshold,
    /// Skip the misclassified-pixel correction.
    #[arg(long)]
    pub no_correct: bool,
    /// Leave edge pixels unassigned instead of giving them the nearest region's label.
    #[arg(long)]
    pub hold_out_edges: bool,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Ring spec (JSON).
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory; created if missing.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = ImageFormat::Csv)]
    pub image_format: ImageFormat,
}

#[derive(Debug, Args)]
pub struct DiagramArgs {
    /// Image (`.png` or CSV).
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long, value_enum, default_value_t = DirectionArg::Upper)]
    pub direction: DirectionArg,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[command(flatten)]
    pub edges: EdgeArgs,
    /// Output directory for edges.csv, labeling.csv and labeling.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub image: PathBuf,
    /// Known labeling CSV (with its JSON sidecar); the image is segmented when omitted.
    #[arg(long)]
    pub labeling: Option<PathBuf>,
    #[arg(long, default_value = "0.05", value_parser = parse_alpha)]
    pub alpha: f64,
    #[command(flatten)]
    pub edges: EdgeArgs,
    /// Use a smoothed copy of the image to pick among pixels that share a birth or death value.
    #[arg(long)]
    pub smooth_hint: bool,
    /// True (death, birth) of the loop, recorded as coverage in the report.
    #[arg(long, value_parser = parse_point)]
    pub truth: Option<(f64, f64)>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StdaArgs {
    #[arg(long)]
    pub image: PathBuf,
    /// Strata labeling CSV (with its JSON sidecar); the image is segmented when omitted.
    #[arg(long)]
    pub labeling: Option<PathBuf>,
    #[command(flatten)]
    pub edges: EdgeArgs,
    /// Polynomial degree of the local fits (0, 1 or 2).
    #[arg(long, default_value_t = looptrust::stda::DEFAULT_DEGREE)]
    pub degree: usize,
    /// Fraction of all pixels used in each local fit.
    #[arg(long, default_value_t = looptrust::stda::DEFAULT_BANDWIDTH)]
    pub bandwidth: f64,
    /// Bootstrap replicates (at least 100).
    #[arg(long, default_value_t = looptrust::stda::DEFAULT_REPLICATES)]
    pub bootstrap: usize,
    #[arg(long, default_value = "0.05", value_parser = parse_alpha)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Study config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Override the config's replicate count.
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Override the config's master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .try_init();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return 2;
        }
        // the global pool can only be built once per process
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::debug!("thread pool already configured: {e}");
        }
    }
    match commands::dispatch(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &looptrust::Error) -> i32 {
    use looptrust::Error::*;
    match e {
        InvalidSpec(_) | InvalidArgument(_) => 2,
        _ => 1,
    }
}
