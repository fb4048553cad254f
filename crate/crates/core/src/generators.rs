//! Graph families used by tests, benchmarks and the CLI.

use std::collections::{BTreeSet, HashMap, HashSet};

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, Vertex};
use crate::rng::RngStream;

/// Induced subgraph of the `w x h` grid with the given cells removed.
/// Surviving cells are numbered row-major (`y * w + x` order) and keep their
/// coordinates.
pub fn gen_grid(w: usize, h: usize, deleted: &[(i64, i64)]) -> Graph {
    let deleted: HashSet<(i64, i64)> = deleted.iter().copied().collect();
    let mut id = HashMap::new();
    let mut coords = Vec::new();
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            if !deleted.contains(&(x, y)) {
                id.insert((x, y), coords.len());
                coords.push((x, y));
            }
        }
    }
    let mut edges = Vec::new();
    for (u, &(x, y)) in coords.iter().enumerate() {
        for nb in [(x + 1, y), (x, y + 1)] {
            if let Some(&v) = id.get(&nb) {
                edges.push((u, v));
            }
        }
    }
    Graph::from_edges(coords.len(), &edges)
        .and_then(|g| g.with_coords(coords))
        .expect("grid construction is always valid")
}

/// Induced subgraph of Z^2 on an explicit set of cells, numbered in the order
/// given (duplicates ignored).
pub fn grid_from_cells(cells: &[(i64, i64)]) -> Graph {
    let mut id = HashMap::new();
    let mut coords = Vec::new();
    for &c in cells {
        if let std::collections::hash_map::Entry::Vacant(e) = id.entry(c) {
            e.insert(coords.len());
            coords.push(c);
        }
    }
    let mut edges = Vec::new();
    for (u, &(x, y)) in coords.iter().enumerate() {
        for nb in [(x + 1, y), (x, y + 1)] {
            if let Some(&v) = id.get(&nb) {
                edges.push((u, v));
            }
        }
    }
    Graph::from_edges(coords.len(), &edges)
        .and_then(|g| g.with_coords(coords))
        .expect("cell set induces a valid grid graph")
}

/// A grid-embedded graph whose sphere of radius `n` around the start vertex
/// has Θ(n²) vertices, together with that start vertex.
///
/// Construction: an H-tree with power-of-two arm length `a` drawn on a coarse
/// lattice (every leaf at coarse distance `4a - 2` from the centre, `4^(L+1)`
/// leaves for `a = 2^L`), a straight stem hanging below the centre, and then
/// every coarse edge split in two so the result is an induced subgraph of Z².
/// In final units the leaves sit at distance `8a - 4` from the centre, which
/// gives the recursion `f(n) = 4 f(n/2 - 2)`; `a` is the largest power of two
/// with `8a - 4 <= n` and the stem makes up the remaining `n - (8a - 4)`.
/// The smallest gadget (`a = 1`) is a single H with 4 leaves.
pub fn gen_quad_boundary(n: usize) -> Result<(Graph, Vertex)> {
    if n < 16 || !n.is_multiple_of(2) {
        return Err(Error::arg(format!(
            "quad-boundary graph needs even n >= 16, got {n}"
        )));
    }
    let mut a: i64 = 1;
    while 8 * (2 * a) - 4 <= n as i64 {
        a *= 2;
    }
    let stem = (n as i64 - (8 * a - 4)) / 2;

    let mut coarse: Vec<(i64, i64)> = Vec::new();
    let mut index: HashMap<(i64, i64), usize> = HashMap::new();
    let mut coarse_edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut node = |p: (i64, i64), coarse: &mut Vec<(i64, i64)>| -> usize {
        *index.entry(p).or_insert_with(|| {
            coarse.push(p);
            coarse.len() - 1
        })
    };
    let mut segment = |from: (i64, i64), to: (i64, i64), coarse: &mut Vec<(i64, i64)>| {
        let (dx, dy) = ((to.0 - from.0).signum(), (to.1 - from.1).signum());
        let mut p = from;
        while p != to {
            let q = (p.0 + dx, p.1 + dy);
            let (u, v) = (node(p, coarse), node(q, coarse));
            coarse_edges.insert((u.min(v), u.max(v)));
            p = q;
        }
    };

    // The start vertex is created first so it gets id 0.
    let start = (0, -stem);
    if stem > 0 {
        segment(start, (0, 0), &mut coarse);
    }
    let mut stack = vec![((0i64, 0i64), a)];
    while let Some((c, arm)) = stack.pop() {
        for sx in [-1, 1] {
            let end = (c.0 + sx * arm, c.1);
            segment(c, end, &mut coarse);
            for sy in [-1, 1] {
                let leaf = (end.0, end.1 + sy * arm);
                segment(end, leaf, &mut coarse);
                if arm > 1 {
                    stack.push((leaf, arm / 2));
                }
            }
        }
    }

    // Subdivide: coarse point p -> 2p, each coarse edge gets a midpoint.
    let mut cells: Vec<(i64, i64)> = coarse.iter().map(|&(x, y)| (2 * x, 2 * y)).collect();
    for &(u, v) in &coarse_edges {
        let (p, q) = (coarse[u], coarse[v]);
        cells.push((p.0 + q.0, p.1 + q.1));
    }
    let g = grid_from_cells(&cells);
    debug_assert_eq!(g.edge_count(), 2 * coarse_edges.len());
    Ok((g, 0))
}

/// Finite truncation of the infinite Δ-regular tree: the root has Δ
/// children, every other internal node Δ−1, leaves at `depth`. Vertices are
/// numbered in BFS order with the root at 0.
pub fn gen_regular_tree(delta: usize, depth: usize) -> Graph {
    let mut edges = Vec::new();
    let mut level = vec![0usize];
    let mut next_id = 1usize;
    for d in 0..depth {
        let children = if d == 0 { delta } else { delta.saturating_sub(1) };
        let mut next = Vec::with_capacity(level.len() * children);
        for &p in &level {
            for _ in 0..children {
                edges.push((p, next_id));
                next.push(next_id);
                next_id += 1;
            }
        }
        level = next;
    }
    Graph::from_edges(next_id, &edges).expect("tree construction is always valid")
}

/// Seeded random simple graph with maximum degree at most `delta`: a random
/// spanning tree first (connected whenever the degree bound permits), then
/// random extra edges.
pub fn gen_random_bounded(n: usize, delta: usize, seed: u64) -> Graph {
    let mut rng = RngStream::new(seed, RngStream::stream_for("gen_random_bounded", 0)).into_rng();
    let mut degree = vec![0usize; n];
    let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    for v in 1..n {
        let open: Vec<usize> = (0..v).filter(|&u| degree[u] < delta).collect();
        if open.is_empty() || delta == 0 {
            continue;
        }
        let u = open[rng.gen_range(0..open.len())];
        edges.insert((u, v));
        degree[u] += 1;
        degree[v] += 1;
    }
    if n >= 2 {
        let attempts = 2 * n * delta;
        for _ in 0..attempts {
            let u = rng.gen_range(0..n);
            let v = rng.gen_range(0..n);
            if u == v || degree[u] >= delta || degree[v] >= delta {
                continue;
            }
            let e = (u.min(v), u.max(v));
            if edges.insert(e) {
                degree[u] += 1;
                degree[v] += 1;
            }
        }
    }
    let edges: Vec<_> = edges.into_iter().collect();
    Graph::from_edges(n, &edges).expect("random construction is always valid")
}

/// One representative of every isomorphism class of connected graphs on `n`
/// vertices (`n <= 7`): 1, 1, 2, 6, 21, 112, 853 graphs for n = 1..=7.
pub fn connected_catalog(n: usize) -> Vec<Graph> {
    assert!((1..=7).contains(&n), "catalog supports 1 <= n <= 7");
    // Grow all graphs one vertex at a time, deduplicating by canonical form.
    let mut level: Vec<Vec<u64>> = vec![vec![0]];
    for k in 2..=n {
        let mut seen: HashSet<Vec<u64>> = HashSet::new();
        for rows in &level {
            for mask in 0u64..(1 << (k - 1)) {
                let mut grown = rows.clone();
                for (u, row) in grown.iter_mut().enumerate() {
                    if mask >> u & 1 == 1 {
                        *row |= 1 << (k - 1);
                    }
                }
                grown.push(mask);
                seen.insert(canonical_form(&grown));
            }
        }
        level = seen.into_iter().collect();
        level.sort();
    }
    level
        .iter()
        .map(|rows| {
            let edges: Vec<_> = (0..n)
                .flat_map(|u| (u + 1..n).filter(move |&v| rows[u] >> v & 1 == 1).map(move |v| (u, v)))
                .collect();
            Graph::from_edges(n, &edges).unwrap()
        })
        .filter(Graph::is_connected)
        .collect()
}

/// Lexicographically smallest adjacency-row vector over all relabellings
/// that respect a degree-based vertex partition.
fn canonical_form(rows: &[u64]) -> Vec<u64> {
    let n = rows.len();
    let degree = |u: usize| rows[u].count_ones();
    let invariant: Vec<(u32, Vec<u32>)> = (0..n)
        .map(|u| {
            let mut nd: Vec<u32> = (0..n).filter(|&v| rows[u] >> v & 1 == 1).map(degree).collect();
            nd.sort_unstable();
            (degree(u), nd)
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| invariant[a].cmp(&invariant[b]));
    // Class boundaries in `order`.
    let mut classes: Vec<(usize, usize)> = Vec::new();
    let mut s = 0;
    for i in 1..=n {
        if i == n || invariant[order[i]] != invariant[order[s]] {
            classes.push((s, i));
            s = i;
        }
    }
    let mut best: Option<Vec<u64>> = None;
    let mut slots = order.clone();
    loop {
        // slots[position] = original vertex
        let mut label = vec![0usize; n];
        for (pos, &u) in slots.iter().enumerate() {
            label[u] = pos;
        }
        let mut out = vec![0u64; n];
        for u in 0..n {
            for v in 0..n {
                if rows[u] >> v & 1 == 1 {
                    out[label[u]] |= 1 << label[v];
                }
            }
        }
        if best.as_ref().is_none_or(|b| out < *b) {
            best = Some(out);
        }
        // Advance the product of per-class permutations.
        let mut advanced = false;
        for &(a, b) in classes.iter().rev() {
            if next_permutation(&mut slots[a..b]) {
                advanced = true;
                break;
            }
            slots[a..b].sort_unstable();
        }
        if !advanced {
            break;
        }
    }
    best.unwrap()
}

fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) else {
        return false;
    };
    let j = (i..p.len()).rev().find(|&j| p[j] > p[i - 1]).unwrap();
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}
