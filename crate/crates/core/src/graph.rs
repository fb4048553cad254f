//! Bounded-degree undirected graphs, BFS balls and spheres, and the
//! thin-sphere search used by the lattice counter.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vertex = usize;

/// Immutable simple undirected graph with sorted adjacency lists.
///
/// The ascending adjacency order is the fixed local ordering used by the
/// self-avoiding-walk tree construction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    adjacency: Vec<Vec<Vertex>>,
    coords: Option<Vec<(i64, i64)>>,
    max_degree: usize,
}

impl Graph {
    /// Builds a graph from an edge list. Rejects self-loops, duplicate edges
    /// and out-of-range endpoints.
    pub fn from_edges(n: usize, edges: &[(Vertex, Vertex)]) -> Result<Graph> {
        let mut adjacency = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::arg(format!("edge ({u},{v}) out of range for n={n}")));
            }
            if u == v {
                return Err(Error::arg(format!("self-loop at {u}")));
            }
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for (u, list) in adjacency.iter_mut().enumerate() {
            list.sort_unstable();
            if list.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::arg(format!("duplicate edge at vertex {u}")));
            }
        }
        let max_degree = adjacency.iter().map(Vec::len).max().unwrap_or(0);
        Ok(Graph {
            adjacency,
            coords: None,
            max_degree,
        })
    }

    /// Attaches planar grid coordinates. Every edge must join points at
    /// Euclidean distance exactly one.
    pub fn with_coords(mut self, coords: Vec<(i64, i64)>) -> Result<Graph> {
        if coords.len() != self.n() {
            return Err(Error::arg(format!(
                "{} coordinates for {} vertices",
                coords.len(),
                self.n()
            )));
        }
        for (u, v) in self.edges() {
            let (a, b) = (coords[u], coords[v]);
            if (a.0 - b.0).abs() + (a.1 - b.1).abs() != 1 {
                return Err(Error::arg(format!("edge ({u},{v}) is not a unit grid edge")));
            }
        }
        let mut seen = std::collections::HashSet::with_capacity(coords.len());
        if !coords.iter().all(|c| seen.insert(*c)) {
            return Err(Error::arg("duplicate grid coordinates"));
        }
        self.coords = Some(coords);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn degree(&self, v: Vertex) -> usize {
        self.adjacency[v].len()
    }

    pub fn neighbors(&self, v: Vertex) -> &[Vertex] {
        &self.adjacency[v]
    }

    pub fn coords(&self) -> Option<&[(i64, i64)]> {
        self.coords.as_deref()
    }

    pub fn has_edge(&self, u: Vertex, v: Vertex) -> bool {
        self.adjacency[u].binary_search(&v).is_ok()
    }

    /// Edges `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (Vertex, Vertex)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(u, list)| list.iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
    }

    pub(crate) fn check_vertex(&self, v: Vertex) -> Result<()> {
        if v < self.n() {
            Ok(())
        } else {
            Err(Error::arg(format!("vertex {v} out of range for n={}", self.n())))
        }
    }

    /// Connected components, each sorted ascending, ordered by smallest vertex.
    pub fn components(&self) -> Vec<Vec<Vertex>> {
        let mut label = vec![usize::MAX; self.n()];
        let mut out = Vec::new();
        for s in 0..self.n() {
            if label[s] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut comp = vec![s];
            label[s] = id;
            let mut i = 0;
            while i < comp.len() {
                let u = comp[i];
                i += 1;
                for &w in &self.adjacency[u] {
                    if label[w] == usize::MAX {
                        label[w] = id;
                        comp.push(w);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.components().len() <= 1
    }

    /// `copies` disjoint copies; vertex `u` of copy `c` becomes `c * n + u`.
    /// Coordinates, when present, are shifted so the copies stay disjoint.
    pub fn disjoint_copies(&self, copies: usize) -> Graph {
        let n = self.n();
        let mut adjacency = Vec::with_capacity(n * copies);
        for c in 0..copies {
            for list in &self.adjacency {
                adjacency.push(list.iter().map(|&v| v + c * n).collect());
            }
        }
        let coords = self.coords.as_ref().map(|cs| {
            let width = cs.iter().map(|c| c.0).max().unwrap_or(0)
                - cs.iter().map(|c| c.0).min().unwrap_or(0)
                + 2;
            (0..copies)
                .flat_map(|c| cs.iter().map(move |&(x, y)| (x + c as i64 * width, y)))
                .collect()
        });
        Graph {
            adjacency,
            coords,
            max_degree: if copies == 0 { 0 } else { self.max_degree },
        }
    }

    /// Disjoint union `self ⊔ other`; `other`'s vertices are shifted by `self.n()`.
    pub fn disjoint_union(&self, other: &Graph) -> Graph {
        let shift = self.n();
        let mut adjacency = self.adjacency.clone();
        adjacency.extend(
            other
                .adjacency
                .iter()
                .map(|list| list.iter().map(|&v| v + shift).collect()),
        );
        let coords = match (&self.coords, &other.coords) {
            (Some(a), Some(b)) => {
                let dx = a.iter().map(|c| c.0).max().unwrap_or(0)
                    - b.iter().map(|c| c.0).min().unwrap_or(0)
                    + 2;
                Some(a.iter().copied().chain(b.iter().map(|&(x, y)| (x + dx, y))).collect())
            }
            _ => None,
        };
        Graph {
            adjacency,
            coords,
            max_degree: self.max_degree.max(other.max_degree),
        }
    }

    /// Single-source BFS distances, truncated at `max_depth` (`usize::MAX` beyond).
    pub fn bfs_distances(&self, v: Vertex, max_depth: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.n()];
        dist[v] = 0;
        let mut queue = VecDeque::from([v]);
        while let Some(u) = queue.pop_front() {
            if dist[u] == max_depth {
                continue;
            }
            for &w in &self.adjacency[u] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// Canonical text edge-list form: `"n m"` then one `"u v"` line per edge.
    pub fn to_edge_list(&self) -> String {
        let mut s = format!("{} {}\n", self.n(), self.edge_count());
        for (u, v) in self.edges() {
            s.push_str(&format!("{u} {v}\n"));
        }
        s
    }

    pub fn to_json(&self) -> String {
        let file = GraphFile {
            n: self.n(),
            edges: self.edges().map(|(u, v)| [u, v]).collect(),
            coords: self.coords.as_ref().map(|cs| cs.iter().map(|&(x, y)| [x, y]).collect()),
        };
        serde_json::to_string(&file).expect("graph serialization")
    }

    /// Parses either supported format; JSON is recognised by a leading `{`.
    pub fn parse(text: &str) -> Result<Graph> {
        if text.trim_start().starts_with('{') {
            let file: GraphFile =
                serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
            let edges: Vec<_> = file.edges.iter().map(|e| (e[0], e[1])).collect();
            let g = Graph::from_edges(file.n, &edges)?;
            match file.coords {
                Some(cs) => g.with_coords(cs.iter().map(|c| (c[0], c[1])).collect()),
                None => Ok(g),
            }
        } else {
            parse_edge_list(text)
        }
    }
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    n: usize,
    edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    coords: Option<Vec<[i64; 2]>>,
}

fn parse_edge_list(text: &str) -> Result<Graph> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let header = lines.next().ok_or_else(|| Error::Parse("empty graph file".into()))?;
    let nums = |line: &str| -> Result<Vec<usize>> {
        line.split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|e| Error::Parse(format!("{line:?}: {e}"))))
            .collect()
    };
    let h = nums(header)?;
    if h.len() != 2 {
        return Err(Error::Parse(format!("bad header {header:?}")));
    }
    let (n, m) = (h[0], h[1]);
    let mut edges = Vec::with_capacity(m);
    for line in lines {
        let e = nums(line)?;
        if e.len() != 2 {
            return Err(Error::Parse(format!("bad edge line {line:?}")));
        }
        edges.push((e[0], e[1]));
    }
    if edges.len() != m {
        return Err(Error::Parse(format!("header says {m} edges, found {}", edges.len())));
    }
    Graph::from_edges(n, &edges)
}

/// BFS ball `B_v(radius)` with exact distances, and its outer sphere.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DistanceShell {
    pub center: Vertex,
    pub radius: usize,
    /// Ball members ordered by ascending distance, then vertex id.
    pub ball: Vec<(Vertex, usize)>,
    pub sphere: Vec<Vertex>,
}

impl DistanceShell {
    pub fn ball_vertices(&self) -> impl Iterator<Item = Vertex> + '_ {
        self.ball.iter().map(|&(u, _)| u)
    }

    /// Vertices at distance exactly `r <= radius`.
    pub fn sphere_at(&self, r: usize) -> Vec<Vertex> {
        self.ball.iter().filter(|&&(_, d)| d == r).map(|&(u, _)| u).collect()
    }
}

pub fn ball(g: &Graph, v: Vertex, radius: usize) -> Result<DistanceShell> {
    g.check_vertex(v)?;
    let dist = g.bfs_distances(v, radius);
    let mut members: Vec<(Vertex, usize)> = dist
        .iter()
        .enumerate()
        .filter(|&(_, &d)| d <= radius)
        .map(|(u, &d)| (u, d))
        .collect();
    members.sort_unstable_by_key(|&(u, d)| (d, u));
    let sphere = members
        .iter()
        .filter(|&&(_, d)| d == radius)
        .map(|&(u, _)| u)
        .collect();
    Ok(DistanceShell {
        center: v,
        radius,
        ball: members,
        sphere,
    })
}

/// Smallest `l' in [ceil(l/2), l]` whose sphere has at most `2 * c0 * l`
/// vertices, found with a single BFS to depth `l`.
pub fn find_thin_sphere(g: &Graph, v: Vertex, l: usize, c0: f64) -> Result<(usize, Vec<Vertex>)> {
    if l < 2 {
        return Err(Error::arg(format!("thin-sphere search needs l >= 2, got {l}")));
    }
    let shell = ball(g, v, l)?;
    let mut sizes = vec![0usize; l + 1];
    for &(_, d) in &shell.ball {
        sizes[d] += 1;
    }
    let limit = 2.0 * c0 * l as f64;
    let lo = l.div_ceil(2);
    let chosen = (lo..=l).find(|&r| sizes[r] as f64 <= limit).ok_or(
        Error::GrowthAssumptionViolated {
            vertex: v,
            radius: l,
            c0,
        },
    )?;
    Ok((chosen, shell.sphere_at(chosen)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{gen_grid, gen_regular_tree};

    fn path(n: usize) -> Graph {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Graph::from_edges(n, &edges).unwrap()
    }

    #[test]
    fn rejects_bad_edges() {
        assert!(Graph::from_edges(2, &[(0, 0)]).is_err());
        assert!(Graph::from_edges(2, &[(0, 1), (1, 0)]).is_err());
        assert!(Graph::from_edges(2, &[(0, 2)]).is_err());
    }

    #[test]
    fn ball_radius_zero_is_center() {
        let g = path(4);
        let b = ball(&g, 2, 0).unwrap();
        assert_eq!(b.ball, vec![(2, 0)]);
        assert_eq!(b.sphere, vec![2]);
    }

    #[test]
    fn ball_on_grid_and_path() {
        let g = gen_grid(5, 5, &[]);
        let center = 2 * 5 + 2;
        let b = ball(&g, center, 1).unwrap();
        assert_eq!(b.ball.len(), 5);
        assert_eq!(b.sphere.len(), 4);

        let p = path(3);
        let b = ball(&p, 0, 2).unwrap();
        assert_eq!(b.ball.len(), 3);
        assert_eq!(b.sphere, vec![2]);
    }

    #[test]
    fn ball_rejects_invalid_vertex() {
        assert!(matches!(ball(&path(3), 3, 1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn thin_sphere_examples() {
        let g = gen_grid(17, 17, &[]);
        let center = 8 * 17 + 8;
        let (lp, sphere) = find_thin_sphere(&g, center, 4, 5.0).unwrap();
        assert_eq!(lp, 2);
        assert_eq!(sphere.len(), 8);

        let star = Graph::from_edges(4, &[(0, 1), (0, 2), (0, 3)]).unwrap();
        let (lp, sphere) = find_thin_sphere(&star, 0, 2, 5.0).unwrap();
        assert_eq!(lp, 1);
        assert_eq!(sphere.len(), 3);

        // Root with three children, two below each: spheres grow like 3 * 2^(l-1).
        let tree = gen_regular_tree(3, 12);
        assert!(matches!(
            find_thin_sphere(&tree, 0, 12, 1.0),
            Err(Error::GrowthAssumptionViolated { .. })
        ));
    }

    #[test]
    fn both_formats_round_trip() {
        let g = gen_grid(3, 2, &[]);
        assert_eq!(Graph::parse(&g.to_json()).unwrap(), g);
        let plain = Graph::from_edges(4, &[(0, 1), (2, 3), (1, 2)]).unwrap();
        assert_eq!(Graph::parse(&plain.to_edge_list()).unwrap(), plain);
        assert!(Graph::parse("3 2\n0 1\n").is_err());
    }

    #[test]
    fn copies_and_unions_are_disjoint() {
        let g = path(3);
        let gg = g.disjoint_copies(3);
        assert_eq!(gg.n(), 9);
        assert_eq!(gg.components().len(), 3);
        let u = g.disjoint_union(&gen_grid(2, 2, &[]));
        assert_eq!(u.n(), 7);
        assert_eq!(u.edge_count(), 2 + 4);
        let grid_copies = gen_grid(2, 2, &[]).disjoint_copies(2);
        assert!(grid_copies.coords().is_some());
        assert!(Graph::parse(&grid_copies.to_json()).is_ok());
    }
}
