//! Partition-based estimates of loop birth and death.
//!
//! Once a loop of the diagram is tied to a segmented loop region and its
//! interior, the loop's birth is estimated by the mean intensity of the loop
//! region and its death by the mean intensity of the interior. The two
//! means are independent and approximately normal, which gives an
//! elliptical confidence region in the (death, birth) plane.

mod matching;
mod report;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::grid_image::{GrayImage, PartitionLabeling, Role};
use crate::util::mean_var;
use crate::{Error, Result};

pub use matching::{localize_value, match_loops, MatchResult, MatchedLoop, SmoothedHint, ValueIndex};
pub use report::{analyze, write_report_csv, LoopEstimate, REPORT_CSV_HEADER};

/// Summary of the non-edge pixels of one partition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionStats {
    pub role: Role,
    pub n: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub sample_variance: f64,
}

impl PartitionStats {
    /// Variance of the partition mean.
    pub fn mean_variance(&self) -> f64 {
        self.sample_variance / self.n as f64
    }
}

pub fn partition_stats(
    image: &GrayImage,
    labeling: &PartitionLabeling,
    role: Role,
) -> Result<PartitionStats> {
    let z = image.data();
    let pixels = labeling.pixels_with_role(role);
    let (n, mean, sample_variance) = mean_var(pixels.iter().map(|&i| z[i]));
    if n < 2 {
        return Err(Error::InsufficientPixels {
            what: format!("partition {role}"),
            n,
            need: 2,
        });
    }
    Ok(PartitionStats {
        role,
        n,
        mean,
        sample_variance,
    })
}

/// Upper `alpha` quantile of the chi-square distribution with two degrees
/// of freedom, which has the closed form `-2 ln(alpha)`.
pub fn chi2_2_quantile(alpha: f64) -> f64 {
    -2.0 * alpha.ln()
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Axis-aligned confidence ellipse for the (death, birth) of one loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceRegion {
    /// `(death, birth)` estimate.
    pub center: (f64, f64),
    /// Variances of the death and birth estimates.
    pub variance: (f64, f64),
    pub alpha: f64,
    pub chi2_quantile: f64,
    /// Pixel counts behind the death and birth estimates.
    pub n: (usize, usize),
}

impl ConfidenceRegion {
    /// Point of the boundary at angle `theta`.
    pub fn boundary(&self, theta: f64) -> (f64, f64) {
        let r = self.chi2_quantile.sqrt();
        (
            self.center.0 + r * self.variance.0.sqrt() * theta.cos(),
            self.center.1 + r * self.variance.1.sqrt() * theta.sin(),
        )
    }

    /// Squared Mahalanobis distance of `point` from the center.
    pub fn mahalanobis(&self, point: (f64, f64)) -> f64 {
        let dd = point.0 - self.center.0;
        let db = point.1 - self.center.1;
        dd * dd / self.variance.0 + db * db / self.variance.1
    }

    pub fn contains(&self, point: (f64, f64)) -> bool {
        self.mahalanobis(point) <= self.chi2_quantile
    }

    pub fn area(&self) -> f64 {
        std::f64::consts::PI * self.chi2_quantile * (self.variance.0 * self.variance.1).sqrt()
    }
}

pub fn region_contains(region: &ConfidenceRegion, point: (f64, f64)) -> bool {
    region.contains(point)
}

/// The `1 - alpha` confidence ellipse centered at the partition means.
pub fn confidence_region(
    interior: &PartitionStats,
    ring: &PartitionStats,
    alpha: f64,
) -> Result<ConfidenceRegion> {
    check_alpha(alpha)?;
    let variance = (interior.mean_variance(), ring.mean_variance());
    if !(variance.0 > 0.0 && variance.1 > 0.0) {
        return Err(Error::DegenerateRegion(format!(
            "zero variance in {} or {}",
            interior.role, ring.role
        )));
    }
    Ok(ConfidenceRegion {
        center: (interior.mean, ring.mean),
        variance,
        alpha,
        chi2_quantile: chi2_2_quantile(alpha),
        n: (interior.n, ring.n),
    })
}

/// Estimate of `birth - death` with a normal-theory half-width.
///
/// The half-width is zero when both partitions are constant.
pub fn persistence_interval(
    interior: &PartitionStats,
    ring: &PartitionStats,
    alpha: f64,
) -> Result<(f64, f64)> {
    check_alpha(alpha)?;
    let z = Normal::standard().inverse_cdf(1.0 - alpha / 2.0);
    let se = (ring.mean_variance() + interior.mean_variance()).sqrt();
    Ok((ring.mean - interior.mean, z * se))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_image::{generate, RingSpec};
    use statrs::distribution::ChiSquared;

    fn stats(role: Role, n: usize, mean: f64, var: f64) -> PartitionStats {
        PartitionStats {
            role,
            n,
            mean,
            sample_variance: var,
        }
    }

    fn unit_region() -> ConfidenceRegion {
        confidence_region(
            &stats(Role::Interior(1), 4, 10.0, 4.0),
            &stats(Role::Loop(1), 9, 20.0, 9.0),
            0.05,
        )
        .unwrap()
    }

    #[test]
    fn stats_by_hand() {
        let img = GrayImage::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let lab = PartitionLabeling::without_edges(2, 2, vec![0; 4], [(0, Role::Background)].into()).unwrap();
        let s = partition_stats(&img, &lab, Role::Background).unwrap();
        assert_eq!(s.n, 4);
        assert!((s.mean - 2.5).abs() < 1e-15);
        assert!((s.sample_variance - 5.0 / 3.0).abs() < 1e-15);
        assert!(matches!(
            partition_stats(&img, &lab, Role::Loop(1)),
            Err(Error::InsufficientPixels { n: 0, .. })
        ));
    }

    #[test]
    fn constant_partition_has_zero_variance() {
        let spec = RingSpec::centered(20, 7, 2, 1.0, 2.0, 3.0, 0.0);
        let (img, lab) = generate(&spec, 0).unwrap();
        let s = partition_stats(&img, &lab, Role::Loop(1)).unwrap();
        assert_eq!((s.mean, s.sample_variance), (3.0, 0.0));
        let i = partition_stats(&img, &lab, Role::Interior(1)).unwrap();
        assert!(matches!(confidence_region(&i, &s, 0.05), Err(Error::DegenerateRegion(_))));
        assert_eq!(persistence_interval(&i, &s, 0.05).unwrap(), (1.0, 0.0));
    }

    #[test]
    fn loop_mean_within_clt_bound() {
        let spec = RingSpec::centered(60, 20, 5, 2000.0, 3000.0, 4000.0, 50.0);
        let (img, lab) = generate(&spec, 9).unwrap();
        let s = partition_stats(&img, &lab, Role::Loop(1)).unwrap();
        assert!((s.mean - 4000.0).abs() < 5.0 * 50.0 / (s.n as f64).sqrt());
    }

    #[test]
    fn chi_square_quantile_matches_distribution() {
        let chi = ChiSquared::new(2.0).unwrap();
        for alpha in [0.01, 0.05, 0.1, 0.5, 0.9] {
            let q = chi2_2_quantile(alpha);
            assert!((chi.inverse_cdf(1.0 - alpha) - q).abs() < 1e-9 * q.max(1.0));
        }
        assert!((chi2_2_quantile(0.05) - 5.991464547107979).abs() < 1e-12);
    }

    #[test]
    fn unit_variances_give_circle() {
        let r = confidence_region(
            &stats(Role::Interior(1), 2, 0.0, 2.0),
            &stats(Role::Loop(1), 2, 0.0, 2.0),
            0.05,
        )
        .unwrap();
        let (x, y) = r.boundary(0.3);
        assert!(((x * x + y * y).sqrt() - 2.447746830680816).abs() < 1e-12);
    }

    #[test]
    fn boundary_points_lie_on_the_mahalanobis_contour() {
        let r = unit_region();
        for k in 0..64 {
            let th = k as f64 * std::f64::consts::TAU / 64.0;
            let m = r.mahalanobis(r.boundary(th));
            assert!((m - r.chi2_quantile).abs() <= 1e-9 * r.chi2_quantile);
        }
        assert!(r.contains(r.center));
        let inside = r.boundary(std::f64::consts::FRAC_PI_3);
        assert!(r.mahalanobis(inside) <= r.chi2_quantile * (1.0 + 1e-9));
        let out = (r.center.0, r.center.1 + 1.001 * (r.chi2_quantile * r.variance.1).sqrt());
        assert!(!region_contains(&r, out));
    }

    #[test]
    fn area_matches_green_integral() {
        let r = unit_region();
        let m = 20_000;
        let h = std::f64::consts::TAU / m as f64;
        // 1/2 closed integral of (x dy - y dx), trapezoid rule on a periodic integrand
        let mut acc = 0.0;
        for k in 0..m {
            let (x0, y0) = r.boundary(k as f64 * h);
            let (x1, y1) = r.boundary((k + 1) as f64 * h);
            acc += 0.5 * (x0 * y1 - x1 * y0);
        }
        assert!((acc - r.area()).abs() / r.area() < 1e-6);
    }

    #[test]
    fn region_collapses_as_alpha_approaches_one() {
        let i = stats(Role::Interior(1), 4, 10.0, 4.0);
        let l = stats(Role::Loop(1), 9, 20.0, 9.0);
        let r = confidence_region(&i, &l, 1.0 - 1e-12).unwrap();
        assert!(r.chi2_quantile < 1e-11);
        assert!(r.area() < 1e-10);
        assert!(confidence_region(&i, &l, 0.0).is_err());
        assert!(confidence_region(&i, &l, 1.0).is_err());
    }

    #[test]
    fn interval_half_width() {
        let i = stats(Role::Interior(1), 50, 1000.0, 400.0);
        let l = stats(Role::Loop(1), 50, 3000.0, 400.0);
        let (est, hw) = persistence_interval(&i, &l, 0.05).unwrap();
        assert_eq!(est, 2000.0);
        let expected = 1.959963984540054 * 20.0 * (2.0f64 / 50.0).sqrt();
        assert!((hw - expected).abs() < 1e-9);
    }

    #[test]
    fn region_json_layout() {
        let r = unit_region();
        let v: serde_json::Value = serde_json::to_value(r).unwrap();
        assert_eq!(v["center"], serde_json::json!([10.0, 20.0]));
        assert_eq!(v["n"], serde_json::json!([4, 9]));
        let back: ConfidenceRegion = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
    }
}
