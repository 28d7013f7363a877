//! Persistence diagrams of filtered grid complexes.
//!
//! Dimension-0 pairs come from a union-find sweep over the edges with the
//! elder rule. Dimension-1 pairs come from reducing the triangle columns of
//! the boundary matrix over Z/2 in filtration order. Edges killed by
//! triangles never need a column of their own, so edge columns are never
//! reduced.
//!
//! Points use the `(death, birth)` convention: for the upper-level
//! filtration a feature is born at a high threshold and dies at a lower
//! one, so `birth >= death`. Pairs with zero persistence are dropped.

mod bottleneck;
mod diagram_csv;

use serde::{Deserialize, Serialize};

use crate::filtration::FilteredComplex;
use crate::grid_image::Pixel;

pub use bottleneck::bottleneck_distance;
pub use diagram_csv::{parse_diagram_csv, write_diagram_csv, DIAGRAM_CSV_HEADER};

/// One point of a persistence diagram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersistencePoint {
    pub dim: u8,
    pub death: f64,
    pub birth: f64,
    /// Never dies within the filtration. Only the dimension-0 class of the
    /// whole grid is essential; its `death` is set to the last threshold.
    pub essential: bool,
    pub birth_vertex: Pixel,
    pub death_vertex: Option<Pixel>,
}

impl PersistencePoint {
    pub fn persistence(&self) -> f64 {
        (self.birth - self.death).abs()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PersistenceDiagram {
    pub points: Vec<PersistencePoint>,
}

impl PersistenceDiagram {
    pub fn new(points: Vec<PersistencePoint>) -> Self {
        Self { points }
    }

    /// Points of dimension `dim`.
    pub fn of_dim(&self, dim: u8) -> impl Iterator<Item = &PersistencePoint> + '_ {
        self.points.iter().filter(move |p| p.dim == dim)
    }

    /// Non-essential points of dimension `dim` as `(death, birth)`.
    pub fn finite_pairs(&self, dim: u8) -> Vec<(f64, f64)> {
        self.of_dim(dim)
            .filter(|p| !p.essential)
            .map(|p| (p.death, p.birth))
            .collect()
    }

    /// Indices of the dimension-1 points.
    pub fn h1_indices(&self) -> Vec<usize> {
        (0..self.points.len())
            .filter(|&i| self.points[i].dim == 1)
            .collect()
    }

    pub fn betti(&self, dim: u8) -> usize {
        self.of_dim(dim).count()
    }
}

struct UnionFind {
    parent: Vec<u32>,
    /// Oldest vertex (smallest filtration rank) of each root's component.
    oldest: Vec<u32>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
            oldest: (0..n as u32).collect(),
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }
}

/// The vertex of `vertices` whose intensity equals `value`, ties broken by
/// the smallest `(x, y)`.
fn extreme_vertex(fc: &FilteredComplex, vertices: &[u32], value: f64) -> Pixel {
    let w = fc.width();
    vertices
        .iter()
        .filter(|&&v| fc.vertex_values()[v as usize] == value)
        .map(|&v| Pixel::new(v as usize % w, v as usize / w))
        .min()
        .expect("simplex value is attained at one of its vertices")
}

/// Symmetric difference of two ascending sorted columns.
fn add_columns(a: &[u32], b: &[u32], out: &mut Vec<u32>) {
    out.clear();
    out.reserve(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
}

const NONE: u32 = u32::MAX;

/// Computes the dimension-0 and dimension-1 diagram of `fc`.
///
/// Each point carries the pixel where it is born and dies: the vertex of
/// the creating (killing) simplex whose intensity equals the simplex value.
pub fn compute_diagram(fc: &FilteredComplex) -> PersistenceDiagram {
    let w = fc.width();
    let nv = fc.vertex_count();
    let values = fc.vertex_values();
    let pixel = |v: u32| Pixel::new(v as usize % w, v as usize / w);
    let mut points = Vec::new();

    let vertex_order = fc.vertex_order();
    let mut vertex_rank = vec![0u32; nv];
    for (r, &v) in vertex_order.iter().enumerate() {
        vertex_rank[v as usize] = r as u32;
    }

    // H0 by union-find with the elder rule.
    let edge_order = fc.edge_order();
    let mut edge_rank = vec![0u32; fc.edge_count()];
    for (r, &e) in edge_order.iter().enumerate() {
        edge_rank[e as usize] = r as u32;
    }
    let mut uf = UnionFind::new(nv);
    for &e in &edge_order {
        let [a, b] = fc.edges()[e as usize];
        let (ra, rb) = (uf.find(a), uf.find(b));
        if ra == rb {
            continue;
        }
        let (oa, ob) = (uf.oldest[ra as usize], uf.oldest[rb as usize]);
        let (elder_root, younger_root) = if vertex_rank[oa as usize] < vertex_rank[ob as usize] {
            (ra, rb)
        } else {
            (rb, ra)
        };
        let born = uf.oldest[younger_root as usize];
        let birth = values[born as usize];
        let death = fc.edge_values()[e as usize];
        if birth != death {
            points.push(PersistencePoint {
                dim: 0,
                death,
                birth,
                essential: false,
                birth_vertex: pixel(born),
                death_vertex: Some(extreme_vertex(fc, &[a, b], death)),
            });
        }
        uf.parent[younger_root as usize] = elder_root;
    }
    let first = vertex_order[0];
    let last = vertex_order[nv - 1];
    points.push(PersistencePoint {
        dim: 0,
        death: values[last as usize],
        birth: values[first as usize],
        essential: true,
        birth_vertex: pixel(first),
        death_vertex: None,
    });

    // H1 by column reduction of the triangle boundaries. Columns hold edge
    // filtration ranks in ascending order; the pivot is the last entry.
    let mut pivot_owner = vec![NONE; fc.edge_count()];
    let mut reduced: Vec<Vec<u32>> = Vec::new();
    let mut col = Vec::with_capacity(64);
    let mut scratch = Vec::with_capacity(64);
    for t in fc.triangle_order() {
        col.clear();
        col.extend(fc.triangle_edges(t).iter().map(|&e| edge_rank[e as usize]));
        col.sort_unstable();
        while let Some(&pivot) = col.last() {
            let owner = pivot_owner[pivot as usize];
            if owner == NONE {
                break;
            }
            add_columns(&col, &reduced[owner as usize], &mut scratch);
            std::mem::swap(&mut col, &mut scratch);
        }
        let Some(&pivot) = col.last() else { continue };
        pivot_owner[pivot as usize] = reduced.len() as u32;
        reduced.push(col.clone());

        let e = edge_order[pivot as usize];
        let birth = fc.edge_values()[e as usize];
        let death = fc.triangle_values()[t as usize];
        if birth != death {
            let ev = fc.edges()[e as usize];
            let tv = fc.triangles()[t as usize];
            points.push(PersistencePoint {
                dim: 1,
                death,
                birth,
                essential: false,
                birth_vertex: extreme_vertex(fc, &ev, birth),
                death_vertex: Some(extreme_vertex(fc, &tv, death)),
            });
        }
    }
    PersistenceDiagram { points }
}
