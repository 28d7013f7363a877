use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::grid_image::{GrayImage, PartitionLabeling, Pixel, Role};
use crate::persistence::PersistenceDiagram;
use crate::{Error, Result};

fn key(v: f64) -> u64 {
    // -0.0 and 0.0 are the same intensity
    if v == 0.0 {
        0
    } else {
        v.to_bits()
    }
}

/// Lookup from intensity to the pixels that carry it.
pub struct ValueIndex<'a> {
    image: &'a GrayImage,
    map: HashMap<u64, Vec<usize>>,
}

impl<'a> ValueIndex<'a> {
    pub fn new(image: &'a GrayImage) -> Self {
        let mut map: HashMap<u64, Vec<usize>> = HashMap::with_capacity(image.len());
        for (i, &v) in image.data().iter().enumerate() {
            map.entry(key(v)).or_default().push(i);
        }
        Self { image, map }
    }

    /// Pixel indices with intensity exactly `value`, row-major.
    pub fn lookup(&self, value: f64) -> &[usize] {
        self.map.get(&key(value)).map_or(&[], Vec::as_slice)
    }

    pub fn image(&self) -> &GrayImage {
        self.image
    }
}

/// A smoothed version of the image and its value for the feature being
/// localized, used to break ties between equal-intensity pixels.
#[derive(Debug, Clone, Copy)]
pub struct SmoothedHint<'a> {
    pub image: &'a GrayImage,
    pub target: f64,
}

fn localize_in(index: &ValueIndex<'_>, value: f64, hint: Option<SmoothedHint<'_>>) -> Result<Vec<usize>> {
    let tied = index.lookup(value);
    if tied.is_empty() {
        return Err(Error::ValueNotFound(value));
    }
    match hint {
        Some(h) if tied.len() > 1 => {
            let s = h.image.data();
            // first minimum in row-major order
            let best = tied
                .iter()
                .copied()
                .min_by(|&a, &b| (s[a] - h.target).abs().total_cmp(&(s[b] - h.target).abs()))
                .expect("non-empty");
            Ok(vec![best])
        }
        _ => Ok(tied.to_vec()),
    }
}

/// The pixels whose intensity equals `value`.
///
/// With a hint and several tied pixels, only the tied pixel whose smoothed
/// intensity is nearest the hint target is returned.
pub fn localize_value(
    image: &GrayImage,
    value: f64,
    hint: Option<SmoothedHint<'_>>,
) -> Result<Vec<Pixel>> {
    let index = ValueIndex::new(image);
    Ok(localize_in(&index, value, hint)?
        .into_iter()
        .map(|i| image.pixel(i))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchedLoop {
    /// Index into the diagram's point list.
    pub point_index: usize,
    /// Loop number `i` of the `Loop(i)` / `Interior(i)` pair.
    pub loop_label: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchResult {
    pub pairs: Vec<MatchedLoop>,
    /// Dimension-1 points that matched no loop.
    pub unmatched: Vec<usize>,
}

impl MatchResult {
    pub fn point_for(&self, loop_label: u32) -> Option<usize> {
        self.pairs
            .iter()
            .find(|p| p.loop_label == loop_label)
            .map(|p| p.point_index)
    }
}

/// Dimension-1 point indices by decreasing persistence, earlier points
/// first on ties.
fn by_persistence(diagram: &PersistenceDiagram) -> Vec<usize> {
    let mut idx = diagram.h1_indices();
    idx.sort_by(|&a, &b| {
        diagram.points[b]
            .persistence()
            .total_cmp(&diagram.points[a].persistence())
            .then(a.cmp(&b))
    });
    idx
}

/// Ties dimension-1 points of `diagram` to the loops of `labeling`.
///
/// Points are scanned by decreasing persistence. A point matches loop `i`
/// when a pixel carrying its birth value lies in `Loop(i)` and a pixel
/// carrying its death value lies in `Interior(i)`. Each loop takes the
/// first point that matches it. With `smoothed`, equal-intensity ties are
/// resolved by the smoothed image and the point of the smoothed diagram
/// with the same persistence rank.
pub fn match_loops(
    diagram: &PersistenceDiagram,
    labeling: &PartitionLabeling,
    image: &GrayImage,
    smoothed: Option<(&GrayImage, &PersistenceDiagram)>,
) -> Result<MatchResult> {
    if (labeling.width(), labeling.height()) != (image.width(), image.height()) {
        return Err(Error::InvalidArgument("image and labeling shapes differ".into()));
    }
    let index = ValueIndex::new(image);
    let order = by_persistence(diagram);
    let smoothed_order = smoothed.map(|(_, d)| by_persistence(d));
    let mut open: BTreeSet<u32> = labeling.loop_indices().into_iter().collect();
    let mut result = MatchResult::default();

    for (rank, &j) in order.iter().enumerate() {
        if open.is_empty() {
            result.unmatched.push(j);
            continue;
        }
        let p = diagram.points[j];
        let reference = match (smoothed, &smoothed_order) {
            (Some((img, d)), Some(ord)) => ord.get(rank).map(|&k| (img, d.points[k])),
            _ => None,
        };
        let birth_hint = reference.map(|(img, q)| SmoothedHint { image: img, target: q.birth });
        let death_hint = reference.map(|(img, q)| SmoothedHint { image: img, target: q.death });
        let births = localize_in(&index, p.birth, birth_hint)?;
        let deaths = localize_in(&index, p.death, death_hint)?;

        let born_in: BTreeSet<u32> = births
            .iter()
            .filter_map(|&i| match labeling.role_at(i) {
                Some(Role::Loop(k)) => Some(k),
                _ => None,
            })
            .collect();
        let hit = deaths
            .iter()
            .filter_map(|&i| match labeling.role_at(i) {
                Some(Role::Interior(k)) if born_in.contains(&k) && open.contains(&k) => Some(k),
                _ => None,
            })
            .min();
        match hit {
            Some(k) => {
                open.remove(&k);
                result.pairs.push(MatchedLoop {
                    point_index: j,
                    loop_label: k,
                });
            }
            None => result.unmatched.push(j),
        }
    }
    result.pairs.sort_by_key(|m| m.loop_label);
    Ok(result)
}
