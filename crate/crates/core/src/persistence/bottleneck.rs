use std::collections::VecDeque;

use super::PersistenceDiagram;

fn linf(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).abs().max((a.1 - b.1).abs())
}

fn half_persistence(p: (f64, f64)) -> f64 {
    (p.1 - p.0).abs() / 2.0
}

/// Bottleneck distance between the non-essential points of dimension `dim`.
///
/// Points may be matched to each other at their L-infinity distance or to
/// the diagonal at half their persistence. Returns 0 when neither diagram
/// has points of that dimension.
pub fn bottleneck_distance(a: &PersistenceDiagram, b: &PersistenceDiagram, dim: u8) -> f64 {
    bottleneck_pairs(&a.finite_pairs(dim), &b.finite_pairs(dim))
}

pub(crate) fn bottleneck_pairs(p: &[(f64, f64)], q: &[(f64, f64)]) -> f64 {
    if p.is_empty() && q.is_empty() {
        return 0.0;
    }
    let mut candidates: Vec<f64> = p.iter().chain(q).map(|&x| half_persistence(x)).collect();
    for &x in p {
        for &y in q {
            candidates.push(linf(x, y));
        }
    }
    candidates.push(0.0);
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    // the largest candidate is always feasible: everything to the diagonal
    let (mut lo, mut hi) = (0usize, candidates.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if feasible(p, q, candidates[mid]) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    candidates[lo]
}

/// A perfect matching of the diagonal-augmented graph exists iff some
/// matching between real points covers every point too far from the
/// diagonal, on both sides. By the Mendelsohn-Dulmage theorem it suffices
/// to cover each side separately.
fn feasible(p: &[(f64, f64)], q: &[(f64, f64)], r: f64) -> bool {
    let must_p: Vec<usize> = (0..p.len()).filter(|&i| half_persistence(p[i]) > r).collect();
    let must_q: Vec<usize> = (0..q.len()).filter(|&j| half_persistence(q[j]) > r).collect();
    covers(p, q, &must_p, r) && covers(q, p, &must_q, r)
}

/// Whether every point of `left[must]` can be matched into `right` within `r`.
fn covers(left: &[(f64, f64)], right: &[(f64, f64)], must: &[usize], r: f64) -> bool {
    if must.len() > right.len() {
        return false;
    }
    let adj: Vec<Vec<u32>> = must
        .iter()
        .map(|&i| {
            (0..right.len() as u32)
                .filter(|&j| linf(left[i], right[j as usize]) <= r)
                .collect()
        })
        .collect();
    hopcroft_karp(&adj, right.len()) == must.len()
}

const FREE: u32 = u32::MAX;

/// Maximum bipartite matching size.
fn hopcroft_karp(adj: &[Vec<u32>], n_right: usize) -> usize {
    let n_left = adj.len();
    let mut match_l = vec![FREE; n_left];
    let mut match_r = vec![FREE; n_right];
    let mut dist = vec![u32::MAX; n_left];
    let mut size = 0;
    loop {
        // BFS layers from free left vertices
        let mut queue = VecDeque::new();
        for u in 0..n_left {
            if match_l[u] == FREE {
                dist[u] = 0;
                queue.push_back(u);
            } else {
                dist[u] = u32::MAX;
            }
        }
        let mut found = false;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                let w = match_r[v as usize];
                if w == FREE {
                    found = true;
                } else if dist[w as usize] == u32::MAX {
                    dist[w as usize] = dist[u] + 1;
                    queue.push_back(w as usize);
                }
            }
        }
        if !found {
            return size;
        }
        let mut next = vec![0usize; n_left];
        for u in 0..n_left {
            if match_l[u] == FREE && augment(u, adj, &mut match_l, &mut match_r, &mut dist, &mut next) {
                size += 1;
            }
        }
    }
}

fn augment(
    start: usize,
    adj: &[Vec<u32>],
    match_l: &mut [u32],
    match_r: &mut [u32],
    dist: &mut [u32],
    next: &mut [usize],
) -> bool {
    // iterative DFS along the layered graph
    let mut stack = vec![start];
    while let Some(&u) = stack.last() {
        if next[u] == adj[u].len() {
            dist[u] = u32::MAX;
            stack.pop();
            continue;
        }
        let v = adj[u][next[u]] as usize;
        next[u] += 1;
        let w = match_r[v];
        if w == FREE {
            // flip the path
            let mut v = v;
            while let Some(u) = stack.pop() {
                let prev = match_l[u];
                match_l[u] = v as u32;
                match_r[v] = u as u32;
                if prev == FREE {
                    break;
                }
                v = prev as usize;
            }
            return true;
        }
        if dist[w as usize] == dist[u] + 1 {
            stack.push(w as usize);
        }
    }
    false
}
