//! Brute-force reference computations used by the integration and
//! acceptance tests. Nothing here shares code with the library internals
//! beyond the public image and diagram types.

#![allow(dead_code)]

use looptrust::grid_image::GrayImage;
use looptrust::persistence::PersistenceDiagram;

/// Simplices of the grid triangulation, each square cut along the
/// diagonal from (x, y) to (x + 1, y + 1).
struct Complex {
    n_vertices: usize,
    edges: Vec<[usize; 2]>,
    triangles: Vec<[usize; 3]>,
}

fn triangulate(w: usize, h: usize) -> Complex {
    let id = |x: usize, y: usize| y * w + x;
    let mut edges = Vec::new();
    let mut triangles = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if x + 1 < w {
                edges.push([id(x, y), id(x + 1, y)]);
            }
            if y + 1 < h {
                edges.push([id(x, y), id(x, y + 1)]);
            }
            if x + 1 < w && y + 1 < h {
                edges.push([id(x, y), id(x + 1, y + 1)]);
                triangles.push([id(x, y), id(x + 1, y), id(x + 1, y + 1)]);
                triangles.push([id(x, y), id(x, y + 1), id(x + 1, y + 1)]);
            }
        }
    }
    Complex { n_vertices: w * h, edges, triangles }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        x = parent[x];
    }
    x
}

/// Rank of a set of GF(2) vectors.
fn rank(mut vs: Vec<u128>) -> usize {
    let mut r = 0;
    for bit in 0..128 {
        let m = 1u128 << bit;
        let Some(p) = (r..vs.len()).find(|&i| vs[i] & m != 0) else { continue };
        vs.swap(r, p);
        let pv = vs[r];
        for (i, v) in vs.iter_mut().enumerate() {
            if i != r && *v & m != 0 {
                *v ^= pv;
            }
        }
        r += 1;
    }
    r
}

/// Basis of the kernel of the edge-to-vertex boundary map restricted to
/// the listed edges, as edge-indicator vectors.
fn cycle_basis(cx: &Complex, edges: &[usize]) -> Vec<u128> {
    // rows: (boundary in vertex space, combination in edge space)
    let mut rows: Vec<(u64, u128)> = edges
        .iter()
        .map(|&e| {
            let [a, b] = cx.edges[e];
            ((1u64 << a) | (1u64 << b), 1u128 << e)
        })
        .collect();
    let mut r = 0;
    for bit in 0..64 {
        let m = 1u64 << bit;
        let Some(p) = (r..rows.len()).find(|&i| rows[i].0 & m != 0) else { continue };
        rows.swap(r, p);
        let pv = rows[r];
        for i in 0..rows.len() {
            if i != r && rows[i].0 & m != 0 {
                rows[i].0 ^= pv.0;
                rows[i].1 ^= pv.1;
            }
        }
        r += 1;
    }
    rows[r..].iter().map(|row| row.1).collect()
}

/// Finite pairs `(dim, death, birth)` sorted, and births of essential classes,
/// for the upper-level filtration of an image with distinct intensities.
pub fn brute_force_pairs(img: &GrayImage) -> (Vec<(u8, f64, f64)>, Vec<(u8, f64)>) {
    let (w, h) = (img.width(), img.height());
    assert!(w * h <= 64, "oracle supports at most 64 pixels");
    let cx = triangulate(w, h);
    assert!(cx.edges.len() <= 128);
    let z = img.data();
    let edge_val: Vec<f64> = cx.edges.iter().map(|&[a, b]| z[a].min(z[b])).collect();
    let tri_val: Vec<f64> = cx
        .triangles
        .iter()
        .map(|t| t.iter().map(|&v| z[v]).fold(f64::INFINITY, f64::min))
        .collect();

    let mut levels: Vec<f64> = z.to_vec();
    levels.sort_by(|a, b| b.total_cmp(a));
    levels.dedup();
    let n = levels.len();

    // beta0[i][j] and beta1[i][j] for i <= j, thresholds indexed 1..=n
    let mut beta0 = vec![vec![0usize; n + 1]; n + 1];
    let mut beta1 = vec![vec![0usize; n + 1]; n + 1];
    let cycles: Vec<Vec<u128>> = (0..=n)
        .map(|i| {
            if i == 0 {
                return Vec::new();
            }
            let es: Vec<usize> = (0..cx.edges.len()).filter(|&e| edge_val[e] >= levels[i - 1]).collect();
            cycle_basis(&cx, &es)
        })
        .collect();
    let boundaries: Vec<Vec<u128>> = (0..=n)
        .map(|j| {
            if j == 0 {
                return Vec::new();
            }
            let edge_id = |a: usize, b: usize| {
                cx.edges
                    .iter()
                    .position(|&[p, q]| (p, q) == (a.min(b), a.max(b)))
                    .unwrap()
            };
            (0..cx.triangles.len())
                .filter(|&t| tri_val[t] >= levels[j - 1])
                .map(|t| {
                    let [a, b, c] = cx.triangles[t];
                    (1u128 << edge_id(a, b)) | (1u128 << edge_id(b, c)) | (1u128 << edge_id(a, c))
                })
                .collect()
        })
        .collect();

    for j in 1..=n {
        let c = levels[j - 1];
        let mut parent: Vec<usize> = (0..cx.n_vertices).collect();
        for (e, &[a, b]) in cx.edges.iter().enumerate() {
            if edge_val[e] >= c {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                parent[ra] = rb;
            }
        }
        let b_j = &boundaries[j];
        let rank_b = rank(b_j.clone());
        for i in 1..=j {
            let a = levels[i - 1];
            let mut roots: Vec<usize> = (0..cx.n_vertices)
                .filter(|&v| z[v] >= a)
                .map(|v| find(&mut parent, v))
                .collect();
            roots.sort_unstable();
            roots.dedup();
            beta0[i][j] = roots.len();

            let z_i = &cycles[i];
            let mut both = z_i.clone();
            both.extend_from_slice(b_j);
            beta1[i][j] = rank(both) - rank_b;
        }
    }

    let mut finite = Vec::new();
    let mut essential = Vec::new();
    for (dim, beta) in [(0u8, &beta0), (1u8, &beta1)] {
        let b = |i: usize, j: usize| if i == 0 || i > j { 0 } else { beta[i][j] } as i64;
        for i in 1..=n {
            for j in i + 1..=n {
                let mult = b(i, j - 1) - b(i - 1, j - 1) - b(i, j) + b(i - 1, j);
                assert!(mult >= 0);
                for _ in 0..mult {
                    finite.push((dim, levels[j - 1], levels[i - 1]));
                }
            }
            let ess = b(i, n) - b(i - 1, n);
            for _ in 0..ess {
                essential.push((dim, levels[i - 1]));
            }
        }
    }
    finite.sort_by(|x, y| x.partial_cmp(y).unwrap());
    essential.sort_by(|x, y| x.partial_cmp(y).unwrap());
    (finite, essential)
}

/// The same summary read off a computed diagram.
pub fn diagram_pairs(d: &PersistenceDiagram) -> (Vec<(u8, f64, f64)>, Vec<(u8, f64)>) {
    let mut finite: Vec<(u8, f64, f64)> = d
        .points
        .iter()
        .filter(|p| !p.essential)
        .map(|p| (p.dim, p.death, p.birth))
        .collect();
    let mut essential: Vec<(u8, f64)> =
        d.points.iter().filter(|p| p.essential).map(|p| (p.dim, p.birth)).collect();
    finite.sort_by(|x, y| x.partial_cmp(y).unwrap());
    essential.sort_by(|x, y| x.partial_cmp(y).unwrap());
    (finite, essential)
}

fn linf(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).abs().max((a.1 - b.1).abs())
}

/// Bottleneck distance by enumerating every bijection between the
/// diagonal-augmented point sets.
pub fn brute_bottleneck(p: &[(f64, f64)], q: &[(f64, f64)]) -> f64 {
    let n = p.len() + q.len();
    if n == 0 {
        return 0.0;
    }
    let half = |x: (f64, f64)| (x.1 - x.0).abs() / 2.0;
    // left: p then diagonal copies of q; right: q then diagonal copies of p
    let cost = |l: usize, r: usize| -> f64 {
        match (l < p.len(), r < q.len()) {
            (true, true) => linf(p[l], q[r]),
            (true, false) if r - q.len() == l => half(p[l]),
            (false, true) if l - p.len() == r => half(q[r]),
            (false, false) => 0.0,
            _ => f64::INFINITY,
        }
    };
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    heap_permutations(&mut perm, n, &mut |perm| {
        let c = (0..n).map(|l| cost(l, perm[l])).fold(0.0, f64::max);
        if c < best {
            best = c;
        }
    });
    best
}

fn heap_permutations(v: &mut [usize], k: usize, f: &mut impl FnMut(&[usize])) {
    if k <= 1 {
        f(v);
        return;
    }
    for i in 0..k - 1 {
        heap_permutations(v, k - 1, f);
        if k % 2 == 0 {
            v.swap(i, k - 1);
        } else {
            v.swap(0, k - 1);
        }
    }
    heap_permutations(v, k - 1, f);
}
