//! Smoothing plus stratified bootstrap confidence bands.
//!
//! The image is smoothed by local polynomial regression and the sup-norm
//! distance between the smoothed image and smoothed bootstrap resamples is
//! collected. Its upper quantile `c_n` bounds the bottleneck distance
//! between the diagram of the smoothed image and that of its noiseless
//! counterpart, so every diagram point gets a square of half-side `c_n`.

mod smoother;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::grid_image::{GrayImage, PartitionLabeling};
use crate::persistence::PersistenceDiagram;
use crate::util::{fmt_f64, split_seed};
use crate::{Error, Result};

pub use smoother::{local_poly_smooth, LocalPolySmoother, BATCH_LANES};

pub const DEFAULT_DEGREE: usize = 2;
pub const DEFAULT_BANDWIDTH: f64 = 0.3;
pub const DEFAULT_REPLICATES: usize = 300;
pub const MIN_REPLICATES: usize = 100;

pub const REGION_CSV_HEADER: &str = "death,birth,c_n,significant,area";

/// How the bandwidth maps to a neighborhood size, for manifests.
pub const BANDWIDTH_DEFINITION: &str = "fraction of pixels: each local fit uses the ceil(bandwidth * N) \
nearest pixels, ordered by (distance, dy, dx), with tricube weights scaled by the farthest one";

/// Pixel indices of each bootstrap stratum: one per label over non-edge
/// pixels, then all edge pixels. Empty strata are left out.
fn strata(labeling: &PartitionLabeling) -> Vec<Vec<usize>> {
    let mut by_label: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    let mut edges = Vec::new();
    for i in 0..labeling.width() * labeling.height() {
        if labeling.is_edge(i) {
            edges.push(i);
        } else {
            by_label.entry(labeling.label(i)).or_default().push(i);
        }
    }
    let mut out: Vec<Vec<usize>> = by_label.into_values().collect();
    if !edges.is_empty() {
        out.push(edges);
    }
    out
}

fn check_shapes(image: &GrayImage, labeling: &PartitionLabeling) -> Result<()> {
    if (image.width(), image.height()) != (labeling.width(), labeling.height()) {
        return Err(Error::InvalidArgument(format!(
            "image is {}x{} but labeling is {}x{}",
            image.width(),
            image.height(),
            labeling.width(),
            labeling.height()
        )));
    }
    Ok(())
}

fn resample_into(z: &[f64], strata: &[Vec<usize>], seed: u64, mut put: impl FnMut(usize, f64)) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for s in strata {
        for &i in s {
            put(i, z[s[rng.random_range(0..s.len())]]);
        }
    }
}

/// Resamples intensities with replacement within each stratum.
pub fn stratified_bootstrap(
    image: &GrayImage,
    labeling: &PartitionLabeling,
    seed: u64,
) -> Result<GrayImage> {
    check_shapes(image, labeling)?;
    let mut out = image.data().to_vec();
    resample_into(image.data(), &strata(labeling), seed, |i, v| out[i] = v);
    GrayImage::new(image.width(), image.height(), out)
}

/// Seed of bootstrap replicate `b` under master seed `seed`.
pub fn replicate_seed(seed: u64, b: usize) -> u64 {
    split_seed(seed, &[b as u64])
}

/// Sup-norm bootstrap distances and their upper quantile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapBand {
    pub c_n: f64,
    pub alpha: f64,
    #[serde(rename = "B")]
    pub b: usize,
    /// In replicate order.
    pub distances: Vec<f64>,
}

/// Order statistic `ceil((1 - alpha) B)` of the distances.
pub fn band_quantile(distances: &[f64], alpha: f64) -> f64 {
    let mut sorted = distances.to_vec();
    sorted.sort_by(f64::total_cmp);
    let b = sorted.len();
    let k = (((1.0 - alpha) * b as f64) - 1e-9).ceil().clamp(1.0, b as f64) as usize;
    sorted[k - 1]
}

/// Bootstraps the image `b` times and returns the band at level `alpha`.
///
/// Also returns the smoothed image, which is the reference for every
/// distance.
pub fn stda_band_with_smoothed(
    image: &GrayImage,
    labeling: &PartitionLabeling,
    degree: usize,
    bandwidth: f64,
    b: usize,
    alpha: f64,
    seed: u64,
) -> Result<(BootstrapBand, GrayImage)> {
    check_shapes(image, labeling)?;
    if b < MIN_REPLICATES {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_REPLICATES} bootstrap replicates, got {b}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let smoother = LocalPolySmoother::cached(image.width(), image.height(), degree, bandwidth)?;
    let smoothed = smoother.smooth(image)?;
    let strata = strata(labeling);
    let z = image.data();
    let n = z.len();
    // the smoother is linear, so each distance is the sup-norm of the
    // smoothed difference between resample and original
    let mut distances = Vec::with_capacity(b);
    let mut batch = vec![[0.0f32; BATCH_LANES]; n];
    for first in (0..b).step_by(BATCH_LANES) {
        let lanes = BATCH_LANES.min(b - first);
        for l in 0..lanes {
            resample_into(z, &strata, replicate_seed(seed, first + l), |i, v| {
                batch[i][l] = (v - z[i]) as f32;
            });
        }
        for row in batch.iter_mut() {
            row[lanes..].fill(0.0);
        }
        distances.extend_from_slice(&smoother.max_abs_batch(&batch)[..lanes]);
    }
    let c_n = band_quantile(&distances, alpha);
    Ok((
        BootstrapBand {
            c_n,
            alpha,
            b,
            distances,
        },
        smoothed,
    ))
}

pub fn stda_band(
    image: &GrayImage,
    labeling: &PartitionLabeling,
    degree: usize,
    bandwidth: f64,
    b: usize,
    alpha: f64,
    seed: u64,
) -> Result<BootstrapBand> {
    stda_band_with_smoothed(image, labeling, degree, bandwidth, b, alpha, seed).map(|r| r.0)
}

/// Square confidence region around one H1 point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SquareRegion {
    pub death: f64,
    pub birth: f64,
    pub c_n: f64,
    /// The point is farther than `c_n` from the diagonal.
    pub significant: bool,
}

impl SquareRegion {
    pub fn area(&self) -> f64 {
        4.0 * self.c_n * self.c_n
    }

    pub fn contains(&self, (death, birth): (f64, f64)) -> bool {
        (death - self.death).abs() <= self.c_n && (birth - self.birth).abs() <= self.c_n
    }
}

pub fn band_to_regions(band: &BootstrapBand, diagram: &PersistenceDiagram) -> Vec<SquareRegion> {
    diagram
        .of_dim(1)
        .filter(|p| !p.essential)
        .map(|p| SquareRegion {
            death: p.death,
            birth: p.birth,
            c_n: band.c_n,
            significant: (p.birth - p.death).abs() / 2.0 > band.c_n,
        })
        .collect()
}

pub fn write_regions_csv(regions: &[SquareRegion]) -> String {
    let mut out = String::from(REGION_CSV_HEADER);
    out.push('\n');
    for r in regions {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_f64(r.death),
            fmt_f64(r.birth),
            fmt_f64(r.c_n),
            r.significant,
            fmt_f64(r.area())
        ));
    }
    out
}
