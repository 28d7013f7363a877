use std::collections::{BTreeMap, VecDeque};

use super::EdgeSet;
use crate::grid_image::{
    flood, neighbors4, neighbors8, on_border, GrayImage, PartitionLabeling, Role, UNASSIGNED,
};
use crate::util::quantile_sorted;
use crate::{Error, Result};

/// Regions smaller than this are speckle and get absorbed.
pub const MIN_REGION_PIXELS: usize = 4;

/// What happens to edge pixels when regions are labeled.
#[derive(Debug, Clone, Copy)]
pub enum EdgePolicy<'a> {
    /// Edge pixels get no region.
    HoldOut,
    /// Each edge pixel joins the closest region whose IQR-trimmed mean is
    /// nearest its own intensity.
    NearestMean(&'a GrayImage),
}

/// For every unlabeled pixel, the labels of the regions at the smallest
/// 8-connected distance through unlabeled pixels.
fn nearest_regions(w: usize, h: usize, labels: &[u32]) -> Vec<Vec<u32>> {
    let n = w * h;
    let mut near: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut dist = vec![u32::MAX; n];
    let mut frontier: Vec<usize> = Vec::new();
    for i in 0..n {
        if labels[i] != UNASSIGNED {
            dist[i] = 0;
            near[i].push(labels[i]);
            frontier.push(i);
        }
    }
    let mut d = 0;
    while !frontier.is_empty() {
        d += 1;
        let mut next = Vec::new();
        for &i in &frontier {
            for j in neighbors8(w, h, i) {
                if dist[j] == u32::MAX {
                    dist[j] = d;
                    next.push(j);
                }
                if dist[j] == d {
                    let from = near[i].clone();
                    let set = &mut near[j];
                    set.extend(from);
                    set.sort_unstable();
                    set.dedup();
                }
            }
        }
        frontier = next;
    }
    near
}

fn trimmed_mean(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(values, 0.25);
    let q3 = quantile_sorted(values, 0.75);
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let kept: Vec<f64> = values.iter().copied().filter(|v| *v >= lo && *v <= hi).collect();
    kept.iter().sum::<f64>() / kept.len() as f64
}

/// Labels the 4-connected components of the non-edge pixels.
///
/// Label 0 is the largest region touching the border; the rest are
/// numbered in row-major order of their first pixel. Components with fewer
/// than [`MIN_REGION_PIXELS`] pixels join the surrounding region and are
/// flagged as edge pixels so they stay out of statistics. Every region
/// gets the placeholder role `Background`; see [`infer_roles`].
pub fn label_regions(edges: &EdgeSet, policy: EdgePolicy<'_>) -> Result<PartitionLabeling> {
    let (w, h) = (edges.width(), edges.height());
    let n = w * h;
    if let EdgePolicy::NearestMean(img) = policy {
        if (img.width(), img.height()) != (w, h) {
            return Err(Error::InvalidArgument("image and edge set shapes differ".into()));
        }
    }
    let mut comp = vec![UNASSIGNED; n];
    let mut components: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        if edges.contains_index(i) || comp[i] != UNASSIGNED {
            continue;
        }
        let pixels = flood(w, h, i, |j| !edges.contains_index(j));
        for &j in &pixels {
            comp[j] = components.len() as u32;
        }
        components.push(pixels);
    }
    if components.is_empty() {
        return Err(Error::DegenerateSegmentation("every pixel is an edge pixel".into()));
    }

    let mut kept: Vec<usize> = (0..components.len())
        .filter(|&c| components[c].len() >= MIN_REGION_PIXELS)
        .collect();
    if kept.is_empty() {
        // nothing survives pruning: keep the largest speck
        let largest = (0..components.len()).max_by_key(|&c| (components[c].len(), usize::MAX - c));
        kept.extend(largest);
    }
    let touches = |c: usize| components[c].iter().any(|&j| on_border(w, h, j));
    let first = kept
        .iter()
        .copied()
        .filter(|&c| touches(c))
        .max_by_key(|&c| (components[c].len(), usize::MAX - c))
        .unwrap_or(kept[0]);
    let mut label_of = vec![UNASSIGNED; components.len()];
    label_of[first] = 0;
    let mut next = 1;
    for &c in &kept {
        if c != first {
            label_of[c] = next;
            next += 1;
        }
    }

    let mut labels: Vec<u32> = comp
        .iter()
        .map(|&c| if c == UNASSIGNED { UNASSIGNED } else { label_of[c as usize] })
        .collect();
    let mut edge: Vec<bool> = edges.mask().to_vec();
    let near = nearest_regions(w, h, &labels);

    for (c, pixels) in components.iter().enumerate() {
        if label_of[c] != UNASSIGNED {
            continue;
        }
        let mut votes: BTreeMap<u32, usize> = BTreeMap::new();
        for &j in pixels {
            for &l in &near[j] {
                *votes.entry(l).or_default() += 1;
            }
        }
        let target = votes
            .iter()
            .max_by_key(|&(&l, &v)| (v, std::cmp::Reverse(l)))
            .map(|(&l, _)| l)
            .expect("some region survives pruning");
        for &j in pixels {
            labels[j] = target;
            edge[j] = true;
        }
    }

    if let EdgePolicy::NearestMean(img) = policy {
        let mut values: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
        for i in 0..n {
            if !edge[i] {
                values.entry(labels[i]).or_default().push(img.data()[i]);
            }
        }
        let means: BTreeMap<u32, f64> =
            values.into_iter().map(|(l, mut v)| (l, trimmed_mean(&mut v))).collect();
        for i in 0..n {
            if edges.contains_index(i) {
                let z = img.data()[i];
                labels[i] = near[i]
                    .iter()
                    .copied()
                    .min_by(|a, b| (means[a] - z).abs().total_cmp(&(means[b] - z).abs()))
                    .unwrap_or(0);
            }
        }
    }

    let roles = (0..next).map(|l| (l, Role::Background)).collect();
    PartitionLabeling::new(w, h, labels, edge, roles)
}

/// Assigns roles from the nesting of regions.
///
/// A region is contained in another if it cannot reach the border without
/// crossing it. Enclosed regions that themselves enclose regions are loops,
/// numbered in label order; their children are the matching interiors;
/// everything else is background.
pub fn infer_roles(labeling: &PartitionLabeling) -> Result<PartitionLabeling> {
    let (w, h) = (labeling.width(), labeling.height());
    let labels = labeling.labels();
    let n = w * h;
    let present: Vec<u32> = {
        let mut v: Vec<u32> = labels.iter().copied().filter(|&l| l != UNASSIGNED).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let index: BTreeMap<u32, usize> = present.iter().enumerate().map(|(k, &l)| (l, k)).collect();
    let r = present.len();

    // containers[b] = regions that enclose region b
    let mut containers: Vec<Vec<usize>> = vec![Vec::new(); r];
    for (a, &la) in present.iter().enumerate() {
        let mut seen = vec![false; n];
        let mut queue: VecDeque<usize> = (0..n)
            .filter(|&i| on_border(w, h, i) && labels[i] != la)
            .collect();
        for &i in &queue {
            seen[i] = true;
        }
        while let Some(i) = queue.pop_front() {
            for j in neighbors4(w, h, i) {
                if !seen[j] && labels[j] != la {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        let mut enclosed = vec![false; r];
        for i in 0..n {
            if !seen[i] && labels[i] != la && labels[i] != UNASSIGNED {
                enclosed[index[&labels[i]]] = true;
            }
        }
        for (b, &e) in enclosed.iter().enumerate() {
            if e {
                containers[b].push(a);
            }
        }
    }
    let depth: Vec<usize> = containers.iter().map(Vec::len).collect();
    if let Some(b) = (0..r).find(|&b| depth[b] > 2) {
        return Err(Error::UnsupportedNesting {
            label: present[b],
            depth: depth[b],
        });
    }
    let parent: Vec<Option<usize>> = (0..r)
        .map(|b| containers[b].iter().copied().max_by_key(|&a| depth[a]))
        .collect();

    let mut roles: BTreeMap<u32, Role> = present.iter().map(|&l| (l, Role::Background)).collect();
    let mut loop_no = 0;
    for a in 0..r {
        let children: Vec<usize> = (0..r).filter(|&b| parent[b] == Some(a)).collect();
        // regions on the border are background whatever they enclose
        if children.is_empty() || depth[a] == 0 {
            continue;
        }
        loop_no += 1;
        roles.insert(present[a], Role::Loop(loop_no));
        for b in children {
            roles.insert(present[b], Role::Interior(loop_no));
        }
    }
    labeling.with_roles(roles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_image::Pixel;

    /// Edge set drawing the outlines of axis-aligned squares.
    fn squares(w: usize, h: usize, boxes: &[(usize, usize, usize, usize)]) -> EdgeSet {
        let mut e = EdgeSet::empty(w, h);
        for &(x0, y0, x1, y1) in boxes {
            for x in x0..=x1 {
                e.insert(Pixel::new(x, y0));
                e.insert(Pixel::new(x, y1));
            }
            for y in y0..=y1 {
                e.insert(Pixel::new(x0, y));
                e.insert(Pixel::new(x1, y));
            }
        }
        e
    }

    fn region_count(l: &PartitionLabeling) -> usize {
        l.roles().len()
    }

    #[test]
    fn empty_edge_set_is_one_region() {
        let l = label_regions(&EdgeSet::empty(6, 5), EdgePolicy::HoldOut).unwrap();
        assert!(l.labels().iter().all(|&v| v == 0));
        let l = infer_roles(&l).unwrap();
        assert_eq!(l.roles()[&0], Role::Background);
        assert_eq!(l.loop_count(), 0);
    }

    #[test]
    fn concentric_squares_give_background_loop_interior() {
        let e = squares(20, 20, &[(3, 3, 16, 16), (7, 7, 12, 12)]);
        let l = label_regions(&e, EdgePolicy::HoldOut).unwrap();
        assert_eq!(region_count(&l), 3);
        let l = infer_roles(&l).unwrap();
        let roles: Vec<Role> = l.roles().values().copied().collect();
        assert_eq!(roles, vec![Role::Background, Role::Loop(1), Role::Interior(1)]);
        l.validate().unwrap();
        assert_eq!(l.role_at(10 * 20 + 10), Some(Role::Interior(1)));
        assert_eq!(l.role_at(5 * 20 + 5), Some(Role::Loop(1)));
        assert_eq!(l.label(3 * 20 + 3), UNASSIGNED);
    }

    #[test]
    fn two_disjoint_annuli_give_two_loops() {
        let e = squares(
            30,
            14,
            &[(1, 1, 12, 12), (4, 4, 9, 9), (16, 1, 27, 12), (19, 4, 24, 9)],
        );
        let l = infer_roles(&label_regions(&e, EdgePolicy::HoldOut).unwrap()).unwrap();
        assert_eq!(region_count(&l), 5);
        assert_eq!(l.loop_count(), 2);
        assert!(l.has_role(Role::Interior(1)) && l.has_role(Role::Interior(2)));
        l.validate().unwrap();
    }

    #[test]
    fn open_contour_leaves_one_region() {
        let mut e = squares(20, 20, &[(3, 3, 16, 16)]);
        e = EdgeSet::from_mask(
            20,
            20,
            e.mask()
                .iter()
                .enumerate()
                .map(|(i, &m)| m && i != 3 * 20 + 9)
                .collect(),
        )
        .unwrap();
        let l = infer_roles(&label_regions(&e, EdgePolicy::HoldOut).unwrap()).unwrap();
        assert_eq!(region_count(&l), 1);
        assert_eq!(l.loop_count(), 0);
    }

    #[test]
    fn speckle_is_absorbed() {
        let e = squares(20, 20, &[(3, 3, 16, 16), (8, 8, 10, 10)]);
        // the 3x3 box encloses a single pixel
        let l = label_regions(&e, EdgePolicy::HoldOut).unwrap();
        assert_eq!(region_count(&l), 2);
        assert!(l.is_edge(9 * 20 + 9));
        assert_eq!(l.label(9 * 20 + 9), l.label(5 * 20 + 5));
    }

    #[test]
    fn third_level_nesting_is_rejected() {
        let e = squares(30, 30, &[(1, 1, 28, 28), (5, 5, 24, 24), (10, 10, 19, 19)]);
        let l = label_regions(&e, EdgePolicy::HoldOut).unwrap();
        assert!(matches!(
            infer_roles(&l),
            Err(Error::UnsupportedNesting { depth: 3, .. })
        ));
    }

    #[test]
    fn all_edges_is_degenerate() {
        let e = EdgeSet::from_mask(3, 3, vec![true; 9]).unwrap();
        assert!(matches!(
            label_regions(&e, EdgePolicy::HoldOut),
            Err(Error::DegenerateSegmentation(_))
        ));
    }

    #[test]
    fn edges_join_the_region_with_the_nearest_mean() {
        let img = GrayImage::from_fn(12, 12, |x, y| {
            if (3..=8).contains(&x) && (3..=8).contains(&y) {
                100.0
            } else {
                0.0
            }
        })
        .unwrap();
        let mut e = squares(12, 12, &[(3, 3, 8, 8)]);
        let l = label_regions(&e, EdgePolicy::NearestMean(&img)).unwrap();
        // the contour pixels are bright, so they join the inside region
        assert_eq!(l.label(3 * 12 + 3), l.label(5 * 12 + 5));
        e.insert(Pixel::new(0, 0));
        let l = label_regions(&e, EdgePolicy::NearestMean(&img)).unwrap();
        assert_eq!(l.label(0), 0);
        assert!(l.labels().iter().all(|&v| v != UNASSIGNED));
    }
}
