use std::fmt;

use serde::{Deserialize, Serialize};

use crate::grid_image::RingSpec;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StudyKind {
    Coverage,
    Bias,
    Misclassification,
}

/// Estimator a result row refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "tTDA")]
    Ttda,
    #[serde(rename = "parTDA")]
    Partda,
    #[serde(rename = "sTDA")]
    Stda,
    /// parTDA with a deliberately corrupted edge set.
    #[serde(rename = "parTDA-misclassified")]
    PartdaMisclassified,
    /// parTDA after correcting the corrupted edge set.
    #[serde(rename = "parTDA-corrected")]
    PartdaCorrected,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Ttda => "tTDA",
            Method::Partda => "parTDA",
            Method::Stda => "sTDA",
            Method::PartdaMisclassified => "parTDA-misclassified",
            Method::PartdaCorrected => "parTDA-corrected",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Factor varied across the cells of a study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Factor {
    Sigma,
    Thickness,
    Dimension,
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Factor::Sigma => "sigma",
            Factor::Thickness => "thickness",
            Factor::Dimension => "dimension",
        })
    }
}

/// A single centered rectangle ring in a square image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    pub dimension: usize,
    pub outer_half_extent: usize,
    pub thickness: usize,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            dimension: 100,
            outer_half_extent: 30,
            thickness: 7,
        }
    }
}

impl Geometry {
    /// Geometry used at image size `dimension` in the dimension sweep: the
    /// ring keeps its proportions, with thickness at least two pixels.
    pub fn scaled(dimension: usize) -> Self {
        let d = dimension as f64;
        Self {
            dimension,
            outer_half_extent: (0.3 * d).round() as usize,
            thickness: ((0.07 * d).round() as usize).max(2),
        }
    }

    pub fn spec(&self, truth: (f64, f64, f64), sigma: f64) -> RingSpec {
        RingSpec::centered(
            self.dimension,
            self.outer_half_extent,
            self.thickness,
            truth.0,
            truth.1,
            truth.2,
            sigma,
        )
    }
}

/// Levels of the bias study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorLevels {
    /// Ring thicknesses at the base geometry's image size and extent.
    #[serde(default)]
    pub thickness: Vec<usize>,
    /// Image sizes, each with [`Geometry::scaled`].
    #[serde(default)]
    pub dimension: Vec<usize>,
}

impl Default for FactorLevels {
    fn default() -> Self {
        Self {
            thickness: vec![2, 7, 11, 16],
            dimension: vec![20, 50, 100, 150],
        }
    }
}

/// Where the partitions used by parTDA and sTDA come from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Segmentation {
    /// Known partitions. sTDA strata come from segmenting the noise-free
    /// pattern, so that they carry a realistic edge set.
    #[default]
    Truth,
    /// Segment every noisy image with the default parameters.
    Estimated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StdaSettings {
    pub degree: usize,
    /// Fraction of all pixels in each local fit.
    pub bandwidth: f64,
    pub bootstrap_replicates: usize,
}

impl Default for StdaSettings {
    fn default() -> Self {
        Self {
            degree: crate::stda::DEFAULT_DEGREE,
            bandwidth: crate::stda::DEFAULT_BANDWIDTH,
            bootstrap_replicates: crate::stda::DEFAULT_REPLICATES,
        }
    }
}

fn default_alpha() -> f64 {
    0.05
}

fn default_misclassified() -> usize {
    6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub study: StudyKind,
    pub replicates: usize,
    pub sigmas: Vec<f64>,
    /// Only read by the bias study.
    #[serde(default)]
    pub factor_levels: FactorLevels,
    /// `(background, interior, loop)` means.
    pub truth: (f64, f64, f64),
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub master_seed: u64,
    pub methods: Vec<Method>,
    #[serde(default)]
    pub geometry: Geometry,
    #[serde(default)]
    pub segmentation: Segmentation,
    #[serde(default)]
    pub stda: StdaSettings,
    /// Interior pixels relabeled as loop in the misclassification study.
    #[serde(default = "default_misclassified")]
    pub misclassified_pixels: usize,
}

impl StudyConfig {
    pub fn coverage() -> Self {
        Self {
            study: StudyKind::Coverage,
            replicates: 500,
            sigmas: vec![50.0, 150.0, 250.0, 350.0],
            factor_levels: FactorLevels::default(),
            truth: (500.0, 1000.0, 3000.0),
            alpha: 0.05,
            master_seed: 0,
            methods: vec![Method::Ttda, Method::Partda, Method::Stda],
            geometry: Geometry::default(),
            segmentation: Segmentation::Truth,
            stda: StdaSettings::default(),
            misclassified_pixels: 6,
        }
    }

    pub fn bias() -> Self {
        Self {
            study: StudyKind::Bias,
            sigmas: vec![150.0],
            truth: (2000.0, 3000.0, 4000.0),
            methods: vec![Method::Ttda, Method::Partda],
            ..Self::coverage()
        }
    }

    pub fn misclassification() -> Self {
        Self {
            study: StudyKind::Misclassification,
            sigmas: vec![10.0, 50.0, 100.0, 200.0, 300.0],
            methods: vec![Method::PartdaMisclassified, Method::PartdaCorrected],
            ..Self::coverage()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self =
            serde_json::from_str(text).map_err(|e| Error::InvalidSpec(format!("study config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.replicates == 0 {
            return bad("replicates must be positive".into());
        }
        if self.sigmas.is_empty() {
            return bad("sigmas must not be empty".into());
        }
        if let Some(s) = self.sigmas.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
            return bad(format!("sigma {s} is not a finite non-negative number"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.methods.is_empty() {
            return bad("methods must not be empty".into());
        }
        let allowed: &[Method] = match self.study {
            StudyKind::Coverage => &[Method::Ttda, Method::Partda, Method::Stda],
            StudyKind::Bias => &[Method::Ttda, Method::Partda],
            StudyKind::Misclassification => &[Method::PartdaMisclassified, Method::PartdaCorrected],
        };
        if let Some(m) = self.methods.iter().find(|m| !allowed.contains(m)) {
            return bad(format!("method {m} is not available in this study"));
        }
        if self.methods.contains(&Method::Stda) {
            let s = &self.stda;
            if s.degree > 2 || !(s.bandwidth > 0.0 && s.bandwidth <= 1.0) {
                return bad("sTDA needs degree 0 to 2 and bandwidth in (0, 1]".into());
            }
            if s.bootstrap_replicates < crate::stda::MIN_REPLICATES {
                return bad(format!(
                    "sTDA needs at least {} bootstrap replicates",
                    crate::stda::MIN_REPLICATES
                ));
            }
        }
        if self.study == StudyKind::Bias
            && self.factor_levels.thickness.is_empty()
            && self.factor_levels.dimension.is_empty()
        {
            return bad("the bias study needs thickness or dimension levels".into());
        }
        for g in self.geometries() {
            g.3.spec(self.truth, 0.0).validate()?;
        }
        Ok(())
    }

    /// `(factor, level index from 1, level value, geometry)` of each
    /// geometry the study uses.
    pub(crate) fn geometries(&self) -> Vec<(Factor, usize, f64, Geometry)> {
        match self.study {
            StudyKind::Bias => {
                let base = self.geometry;
                let t = self.factor_levels.thickness.iter().enumerate().map(|(k, &t)| {
                    (Factor::Thickness, k + 1, t as f64, Geometry { thickness: t, ..base })
                });
                let d = self
                    .factor_levels
                    .dimension
                    .iter()
                    .enumerate()
                    .map(|(k, &d)| (Factor::Dimension, k + 1, d as f64, Geometry::scaled(d)));
                t.chain(d).collect()
            }
            _ => vec![(Factor::Sigma, 0, 0.0, self.geometry)],
        }
    }
}
