//! Edge-based segmentation of an image into contiguous regions.
//!
//! Edges are ridge pixels of the gradient magnitude of a Gaussian-smoothed
//! image (non-maximum suppression along the gradient, then a threshold).
//! The pixels left over split into 4-connected regions, which are then
//! classified as background, loops and interiors by how they nest.

mod correction;
mod edges;
mod regions;

pub use correction::correct_misclassified;
pub use edges::{
    decode_edge_png, detect_edges, encode_edge_png, gaussian_blur, loop_contour, parse_edge_csv,
    write_edge_csv, EdgeSet, GradientThreshold,
};
pub use regions::{infer_roles, label_regions, EdgePolicy, MIN_REGION_PIXELS};

use crate::grid_image::{GrayImage, PartitionLabeling};
use crate::Result;

/// Parameters of the full segmentation pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentParams {
    pub gaussian_sigma: f64,
    pub threshold: GradientThreshold,
    /// Run the misclassified-pixel correction after role inference.
    pub correct: bool,
    /// Assign edge pixels to the nearest region instead of holding them out.
    pub assign_edges: bool,
}

impl Default for SegmentParams {
    fn default() -> Self {
        Self {
            gaussian_sigma: 2.0,
            threshold: GradientThreshold::Otsu,
            correct: true,
            assign_edges: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Segmentation {
    /// Edge set after correction (equal to `detected` when correction is off).
    pub edges: EdgeSet,
    pub detected: EdgeSet,
    pub labeling: PartitionLabeling,
}

/// Detect edges, label regions, infer roles and optionally correct
/// misclassified pixels. The returned labeling's edge mask matches `edges`.
pub fn segment(image: &GrayImage, params: &SegmentParams) -> Result<Segmentation> {
    let detected = detect_edges(image, params.gaussian_sigma, params.threshold)?;
    let policy = if params.assign_edges {
        EdgePolicy::NearestMean(image)
    } else {
        EdgePolicy::HoldOut
    };
    let labeling = infer_roles(&label_regions(&detected, policy)?)?;
    let edges = if params.correct && labeling.loop_count() > 0 {
        correct_misclassified(&detected, image, &labeling)?
    } else {
        detected.clone()
    };
    let labeling = labeling.with_edge_mask(edges.mask().to_vec())?;
    Ok(Segmentation {
        edges,
        detected,
        labeling,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_image::{generate, Role, RingSpec};

    #[test]
    fn noisy_ring_segments_into_three_regions() {
        let spec = RingSpec::centered(100, 30, 7, 500.0, 1000.0, 3000.0, 50.0);
        for seed in 0..5 {
            let (img, truth) = generate(&spec, seed).unwrap();
            let seg = segment(&img, &SegmentParams::default()).unwrap();
            assert_eq!(seg.labeling.roles().len(), 3, "seed {seed}");
            assert_eq!(seg.labeling.loop_count(), 1);
            seg.labeling.validate().unwrap();
            // nearly every non-edge loop pixel is a true loop pixel
            let lp = seg.labeling.pixels_with_role(Role::Loop(1));
            let right = lp.iter().filter(|&&i| truth.role_at(i) == Some(Role::Loop(1))).count();
            assert!(right as f64 >= 0.99 * lp.len() as f64);
        }
    }
}
