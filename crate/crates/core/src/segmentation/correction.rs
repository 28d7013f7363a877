use super::EdgeSet;
use crate::grid_image::{GrayImage, PartitionLabeling, Role};
use crate::util::quantile_sorted;
use crate::{Error, Result};

/// Outliers of one partition: indices outside the 1.5 IQR fences that sit
/// next to an edge pixel, plus the mean of the remaining pixels.
struct Screened {
    outliers: Vec<usize>,
    mean: f64,
}

fn near_edge(edges: &EdgeSet, i: usize) -> bool {
    // within Euclidean distance sqrt(2) of a unit grid: the 8-neighborhood
    let (w, h) = (edges.width() as isize, edges.height() as isize);
    let (x, y) = ((i as isize) % w, (i as isize) / w);
    (-1..=1).any(|dy| {
        (-1..=1).any(|dx| {
            let (nx, ny) = (x + dx, y + dy);
            (dx, dy) != (0, 0)
                && nx >= 0
                && ny >= 0
                && nx < w
                && ny < h
                && edges.contains_index((ny * w + nx) as usize)
        })
    })
}

fn screen(image: &GrayImage, edges: &EdgeSet, pixels: &[usize]) -> Screened {
    let z = image.data();
    let mut sorted: Vec<f64> = pixels.iter().map(|&i| z[i]).collect();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&sorted, 0.25);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let outliers: Vec<usize> = pixels
        .iter()
        .copied()
        .filter(|&i| (z[i] > hi || z[i] < lo) && near_edge(edges, i))
        .collect();
    let (mut sum, mut n) = (0.0, 0usize);
    for &i in pixels {
        if outliers.binary_search(&i).is_err() {
            sum += z[i];
            n += 1;
        }
    }
    Screened {
        outliers,
        mean: sum / n as f64,
    }
}

/// Moves misclassified boundary pixels into the edge set.
///
/// For every loop and its interior, pixels outside the IQR fences of their
/// partition that touch an edge pixel are outliers. An outlier becomes an
/// edge pixel when its intensity is at least as close to the other
/// partition's outlier-free mean as to its own. The result always contains
/// `edges`.
pub fn correct_misclassified(
    edges: &EdgeSet,
    image: &GrayImage,
    labeling: &PartitionLabeling,
) -> Result<EdgeSet> {
    let (w, h) = (image.width(), image.height());
    if (edges.width(), edges.height()) != (w, h) || (labeling.width(), labeling.height()) != (w, h) {
        return Err(Error::InvalidArgument("image, edges and labeling shapes differ".into()));
    }
    let mut out = edges.clone();
    let z = image.data();
    for i in labeling.loop_indices() {
        let members = |role: Role| -> Vec<usize> {
            (0..w * h)
                .filter(|&j| !edges.contains_index(j) && labeling.role_at(j) == Some(role))
                .collect()
        };
        let ring = members(Role::Loop(i));
        let inside = members(Role::Interior(i));
        if ring.len() < 4 || inside.len() < 4 {
            log::warn!(
                "loop {i}: partitions of {} and {} pixels are too small for quartiles, skipped",
                ring.len(),
                inside.len()
            );
            continue;
        }
        let (a, b) = (screen(image, edges, &ring), screen(image, edges, &inside));
        for (own, other) in [(&a, &b), (&b, &a)] {
            for &j in &own.outliers {
                if (z[j] - other.mean).abs() <= (z[j] - own.mean).abs() {
                    out.insert_index(j);
                }
            }
        }
    }
    Ok(out)
}
