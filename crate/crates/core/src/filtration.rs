//! Triangulated pixel grid with level-set filtration values.
//!
//! Every pixel center is a vertex. Each unit square of four neighboring
//! pixel centers is split along the diagonal from its top-left to its
//! bottom-right corner, giving two triangles per square (the Freudenthal
//! triangulation). For the upper-level filtration a simplex enters at the
//! minimum intensity of its vertices; for the lower-level filtration at the
//! maximum.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::grid_image::GrayImage;
use crate::util::fmt_f64;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Sweep the threshold from `+inf` down: `{Z > delta}`.
    #[default]
    Upper,
    /// Sweep the threshold from `-inf` up: `{Z < delta}`.
    Lower,
}

impl std::str::FromStr for Direction {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "upper" => Ok(Direction::Upper),
            "lower" => Ok(Direction::Lower),
            _ => Err(crate::Error::InvalidArgument(format!(
                "direction must be 'upper' or 'lower', got {s:?}"
            ))),
        }
    }
}

impl Direction {
    /// Maps a value to a sort key that increases along the filtration.
    #[inline]
    pub fn key(self, v: f64) -> f64 {
        match self {
            Direction::Upper => -v,
            Direction::Lower => v,
        }
    }

    /// The value at which a simplex with the given vertex values enters.
    #[inline]
    fn entry<I: IntoIterator<Item = f64>>(self, values: I) -> f64 {
        let it = values.into_iter();
        match self {
            Direction::Upper => it.fold(f64::INFINITY, f64::min),
            Direction::Lower => it.fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Reference to a simplex of a [`FilteredComplex`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Simplex {
    Vertex(u32),
    Edge(u32),
    Triangle(u32),
}

impl Simplex {
    pub fn dim(self) -> usize {
        match self {
            Simplex::Vertex(_) => 0,
            Simplex::Edge(_) => 1,
            Simplex::Triangle(_) => 2,
        }
    }
}

/// The triangulated grid with per-simplex filtration values.
#[derive(Debug, Clone)]
pub struct FilteredComplex {
    width: usize,
    height: usize,
    direction: Direction,
    vertex_values: Vec<f64>,
    edges: Vec<[u32; 2]>,
    edge_values: Vec<f64>,
    triangles: Vec<[u32; 3]>,
    triangle_values: Vec<f64>,
}

impl FilteredComplex {
    /// Builds the complex for `image`.
    ///
    /// Edges are stored as all horizontal edges (row-major), then all
    /// vertical edges, then all diagonals; triangles as the upper and lower
    /// triangle of each unit square, row-major.
    pub fn build(image: &GrayImage, direction: Direction) -> Self {
        let (w, h) = (image.width(), image.height());
        let z = image.data();
        let n_h = (w - 1) * h;
        let n_v = w * (h - 1);
        let n_d = (w - 1) * (h - 1);
        let mut edges = Vec::with_capacity(n_h + n_v + n_d);
        for y in 0..h {
            for x in 0..w - 1 {
                let i = (y * w + x) as u32;
                edges.push([i, i + 1]);
            }
        }
        for y in 0..h - 1 {
            for x in 0..w {
                let i = (y * w + x) as u32;
                edges.push([i, i + w as u32]);
            }
        }
        for y in 0..h - 1 {
            for x in 0..w - 1 {
                let i = (y * w + x) as u32;
                edges.push([i, i + w as u32 + 1]);
            }
        }
        let mut triangles = Vec::with_capacity(2 * n_d);
        for y in 0..h - 1 {
            for x in 0..w - 1 {
                let i = (y * w + x) as u32;
                let wu = w as u32;
                triangles.push([i, i + 1, i + wu + 1]);
                triangles.push([i, i + wu, i + wu + 1]);
            }
        }
        let edge_values = edges
            .iter()
            .map(|e| direction.entry(e.iter().map(|&v| z[v as usize])))
            .collect();
        let triangle_values = triangles
            .iter()
            .map(|t| direction.entry(t.iter().map(|&v| z[v as usize])))
            .collect();
        Self {
            width: w,
            height: h,
            direction,
            vertex_values: z.to_vec(),
            edges,
            edge_values,
            triangles,
            triangle_values,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_values.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertex_values(&self) -> &[f64] {
        &self.vertex_values
    }

    pub fn edges(&self) -> &[[u32; 2]] {
        &self.edges
    }

    pub fn edge_values(&self) -> &[f64] {
        &self.edge_values
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn triangle_values(&self) -> &[f64] {
        &self.triangle_values
    }

    pub fn value(&self, s: Simplex) -> f64 {
        match s {
            Simplex::Vertex(i) => self.vertex_values[i as usize],
            Simplex::Edge(i) => self.edge_values[i as usize],
            Simplex::Triangle(i) => self.triangle_values[i as usize],
        }
    }

    pub fn vertices_of(&self, s: Simplex) -> Vec<u32> {
        match s {
            Simplex::Vertex(i) => vec![i],
            Simplex::Edge(i) => self.edges[i as usize].to_vec(),
            Simplex::Triangle(i) => self.triangles[i as usize].to_vec(),
        }
    }

    /// The three edges bounding triangle `t`.
    pub fn triangle_edges(&self, t: u32) -> [u32; 3] {
        let (w, h) = (self.width, self.height);
        let n_h = (w - 1) * h;
        let n_v = w * (h - 1);
        let square = (t / 2) as usize;
        let (x, y) = (square % (w - 1), square / (w - 1));
        let horizontal = |x: usize, y: usize| (y * (w - 1) + x) as u32;
        let vertical = |x: usize, y: usize| (n_h + y * w + x) as u32;
        let diagonal = (n_h + n_v + y * (w - 1) + x) as u32;
        if t % 2 == 0 {
            [horizontal(x, y), vertical(x + 1, y), diagonal]
        } else {
            [vertical(x, y), horizontal(x, y + 1), diagonal]
        }
    }

    /// Compares two simplices by filtration position: entry value along the
    /// sweep, then dimension, then lexicographic vertex indices.
    pub fn cmp_simplices(&self, a: Simplex, b: Simplex) -> Ordering {
        let d = self.direction;
        d.key(self.value(a))
            .total_cmp(&d.key(self.value(b)))
            .then(a.dim().cmp(&b.dim()))
            .then_with(|| self.vertices_of(a).cmp(&self.vertices_of(b)))
    }

    /// All simplices in filtration order.
    pub fn filtration_order(&self) -> Vec<Simplex> {
        let mut all: Vec<Simplex> = (0..self.vertex_count() as u32)
            .map(Simplex::Vertex)
            .chain((0..self.edge_count() as u32).map(Simplex::Edge))
            .chain((0..self.triangle_count() as u32).map(Simplex::Triangle))
            .collect();
        all.sort_by(|&a, &b| self.cmp_simplices(a, b));
        all
    }

    /// Filtration order of edges only, with ties broken as in
    /// [`cmp_simplices`](Self::cmp_simplices).
    pub fn edge_order(&self) -> Vec<u32> {
        let d = self.direction;
        let mut idx: Vec<u32> = (0..self.edge_count() as u32).collect();
        idx.sort_unstable_by(|&a, &b| {
            d.key(self.edge_values[a as usize])
                .total_cmp(&d.key(self.edge_values[b as usize]))
                .then_with(|| self.edges[a as usize].cmp(&self.edges[b as usize]))
        });
        idx
    }

    /// Filtration order of triangles only.
    pub fn triangle_order(&self) -> Vec<u32> {
        let d = self.direction;
        let mut idx: Vec<u32> = (0..self.triangle_count() as u32).collect();
        idx.sort_unstable_by(|&a, &b| {
            d.key(self.triangle_values[a as usize])
                .total_cmp(&d.key(self.triangle_values[b as usize]))
                .then_with(|| self.triangles[a as usize].cmp(&self.triangles[b as usize]))
        });
        idx
    }

    /// Filtration order of vertices only.
    pub fn vertex_order(&self) -> Vec<u32> {
        let d = self.direction;
        let mut idx: Vec<u32> = (0..self.vertex_count() as u32).collect();
        idx.sort_unstable_by(|&a, &b| {
            d.key(self.vertex_values[a as usize])
                .total_cmp(&d.key(self.vertex_values[b as usize]))
                .then(a.cmp(&b))
        });
        idx
    }

    /// Whether a simplex is present at threshold `delta`
    /// (`value >= delta` for upper, `value <= delta` for lower).
    pub fn present_at(&self, s: Simplex, delta: f64) -> bool {
        let v = self.value(s);
        match self.direction {
            Direction::Upper => v >= delta,
            Direction::Lower => v <= delta,
        }
    }

    /// Text dump: one `dim,vertex ids,value` line per simplex in filtration
    /// order.
    pub fn debug_dump(&self) -> String {
        let mut out = String::new();
        for s in self.filtration_order() {
            let ids: Vec<String> = self.vertices_of(s).iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{},{},{}", s.dim(), ids.join(" "), fmt_f64(self.value(s)));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn image(w: usize, h: usize, data: Vec<f64>) -> GrayImage {
        GrayImage::new(w, h, data).unwrap()
    }

    #[test]
    fn single_square_counts() {
        let fc = FilteredComplex::build(&image(2, 2, vec![1.0, 2.0, 3.0, 4.0]), Direction::Upper);
        assert_eq!((fc.vertex_count(), fc.edge_count(), fc.triangle_count()), (4, 5, 2));
    }

    #[test]
    fn three_by_three_counts_match_enumeration() {
        // 4 unit squares: 6 horizontal + 6 vertical + 4 diagonal edges,
        // 2 triangles per square
        let fc = FilteredComplex::build(&GrayImage::filled(3, 3, 0.0).unwrap(), Direction::Upper);
        assert_eq!((fc.vertex_count(), fc.edge_count(), fc.triangle_count()), (9, 16, 8));
        let (w, h) = (7usize, 4usize);
        let fc = FilteredComplex::build(&GrayImage::filled(w, h, 0.0).unwrap(), Direction::Upper);
        let squares = (w - 1) * (h - 1);
        assert_eq!(fc.edge_count(), (w - 1) * h + w * (h - 1) + squares);
        assert_eq!(fc.triangle_count(), 2 * squares);
    }

    #[test]
    fn constant_image_gives_constant_values() {
        let fc = FilteredComplex::build(&GrayImage::filled(4, 3, 7.5).unwrap(), Direction::Upper);
        assert!(fc.edge_values().iter().all(|&v| v == 7.5));
        assert!(fc.triangle_values().iter().all(|&v| v == 7.5));
    }

    #[test]
    fn triangle_edges_are_faces() {
        let fc = FilteredComplex::build(&GrayImage::filled(5, 4, 0.0).unwrap(), Direction::Upper);
        for t in 0..fc.triangle_count() as u32 {
            let tv = fc.triangles()[t as usize];
            for e in fc.triangle_edges(t) {
                let [a, b] = fc.edges()[e as usize];
                assert!(tv.contains(&a) && tv.contains(&b), "triangle {t} edge {e}");
            }
            let mut es = fc.triangle_edges(t);
            es.sort();
            assert!(es[0] != es[1] && es[1] != es[2]);
        }
    }

    #[test]
    fn edges_join_grid_neighbors_only() {
        let fc = FilteredComplex::build(&GrayImage::filled(6, 5, 0.0).unwrap(), Direction::Upper);
        for &[a, b] in fc.edges() {
            let (ax, ay) = (a as usize % 6, a as usize / 6);
            let (bx, by) = (b as usize % 6, b as usize / 6);
            let step = (bx as i64 - ax as i64, by as i64 - ay as i64);
            assert!(matches!(step, (1, 0) | (0, 1) | (1, 1)), "{step:?}");
        }
    }

    #[test]
    fn dump_lists_every_simplex() {
        let fc = FilteredComplex::build(&image(2, 2, vec![1.0, 2.0, 3.0, 4.0]), Direction::Upper);
        let dump = fc.debug_dump();
        assert_eq!(dump.lines().count(), 11);
        assert_eq!(dump.lines().next().unwrap(), "0,3,4");
        assert_eq!(dump.lines().last().unwrap(), "2,0 2 3,1");
    }

    fn arb_image() -> impl Strategy<Value = GrayImage> {
        (2usize..6, 2usize..6).prop_flat_map(|(w, h)| {
            proptest::collection::vec(-50i32..50, w * h)
                .prop_map(move |v| image(w, h, v.into_iter().map(f64::from).collect()))
        })
    }

    proptest! {
        #[test]
        fn faces_enter_no_later_than_cofaces(img in arb_image()) {
            for dir in [Direction::Upper, Direction::Lower] {
                let fc = FilteredComplex::build(&img, dir);
                let order = fc.filtration_order();
                let pos: std::collections::HashMap<Simplex, usize> =
                    order.iter().enumerate().map(|(i, &s)| (s, i)).collect();
                for (e, &[a, b]) in fc.edges().iter().enumerate() {
                    let ev = fc.edge_values()[e];
                    for v in [a, b] {
                        prop_assert!(dir.key(fc.vertex_values()[v as usize]) <= dir.key(ev));
                        prop_assert!(pos[&Simplex::Vertex(v)] < pos[&Simplex::Edge(e as u32)]);
                    }
                }
                for t in 0..fc.triangle_count() as u32 {
                    for e in fc.triangle_edges(t) {
                        prop_assert!(dir.key(fc.edge_values()[e as usize])
                            <= dir.key(fc.triangle_values()[t as usize]));
                        prop_assert!(pos[&Simplex::Edge(e)] < pos[&Simplex::Triangle(t)]);
                    }
                }
            }
        }

        #[test]
        fn every_threshold_gives_a_subcomplex(img in arb_image()) {
            let fc = FilteredComplex::build(&img, Direction::Upper);
            let mut deltas: Vec<f64> = img.data().to_vec();
            deltas.sort_by(f64::total_cmp);
            for &d in &deltas {
                for (e, &[a, b]) in fc.edges().iter().enumerate() {
                    if fc.present_at(Simplex::Edge(e as u32), d) {
                        prop_assert!(fc.present_at(Simplex::Vertex(a), d));
                        prop_assert!(fc.present_at(Simplex::Vertex(b), d));
                    }
                }
                for t in 0..fc.triangle_count() as u32 {
                    if fc.present_at(Simplex::Triangle(t), d) {
                        for e in fc.triangle_edges(t) {
                            prop_assert!(fc.present_at(Simplex::Edge(e), d));
                        }
                    }
                }
            }
            // nested: anything present at a higher threshold stays present
            for w in deltas.windows(2) {
                for s in fc.filtration_order() {
                    if fc.present_at(s, w[1]) {
                        prop_assert!(fc.present_at(s, w[0]));
                    }
                }
            }
        }

        #[test]
        fn lower_is_negated_upper(img in arb_image()) {
            let lower = FilteredComplex::build(&img, Direction::Lower);
            let upper = FilteredComplex::build(&img.negated(), Direction::Upper);
            for (a, b) in lower.edge_values().iter().zip(upper.edge_values()) {
                prop_assert_eq!(*a, -*b);
            }
            for (a, b) in lower.triangle_values().iter().zip(upper.triangle_values()) {
                prop_assert_eq!(*a, -*b);
            }
        }
    }
}
