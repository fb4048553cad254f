//! Weitz's self-avoiding-walk tree, built to a fixed depth and extendable
//! node by node.
//!
//! Each node is a self-avoiding walk from the root. A walk that steps back
//! onto one of its own vertices closes a cycle; that node becomes a leaf with
//! a forced spin: occupied (1) if the walk's penultimate vertex comes after
//! the first vertex of the cycle in the closing vertex's (ascending)
//! adjacency list, unoccupied (0) otherwise. Vertices pinned in the source
//! graph become leaves carrying their pinned spin.

use std::ops::Range;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{Graph, Vertex};
use crate::model::{PartialConfiguration, Spin, TwoSpinParams};
use crate::oracle::{Pair, PairProduct};

pub type NodeId = usize;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SawNode {
    pub vertex: Vertex,
    pub parent: Option<NodeId>,
    pub depth: usize,
    /// Set on cycle-closing leaves.
    pub forced_spin: Option<Spin>,
    /// Set on leaves whose vertex is pinned in the source graph.
    pub pinned_spin: Option<Spin>,
    #[serde(skip)]
    children: Option<Range<NodeId>>,
}

impl SawNode {
    /// The spin this node is fixed to, if any. Fixed nodes are never expanded.
    pub fn fixed_spin(&self) -> Option<Spin> {
        self.forced_spin.or(self.pinned_spin)
    }

    pub fn is_expanded(&self) -> bool {
        self.children.is_some()
    }
}

/// Arena-backed SAW tree. Children of a node occupy a contiguous id range.
#[derive(Clone, Debug)]
pub struct SawTree<'a> {
    g: &'a Graph,
    pin: Option<&'a PartialConfiguration>,
    nodes: Vec<SawNode>,
    truncation_depth: usize,
    path: Vec<Vertex>,
}

/// Full expansion of the SAW tree of `g` at `v` to depth `l`.
pub fn build_saw(g: &Graph, v: Vertex, l: usize) -> Result<SawTree<'_>> {
    let mut t = SawTree::new(g, None, v)?;
    t.expand_to(l)?;
    Ok(t)
}

impl<'a> SawTree<'a> {
    /// Root-only tree. `pin` fixes source-graph vertices; the root must be free.
    pub fn new(g: &'a Graph, pin: Option<&'a PartialConfiguration>, v: Vertex) -> Result<Self> {
        g.check_vertex(v)?;
        if let Some(p) = pin {
            p.validate(g, 2)?;
            if p.is_pinned(v) {
                return Err(Error::arg(format!("root {v} is pinned")));
            }
        }
        Ok(SawTree {
            g,
            pin,
            nodes: vec![SawNode {
                vertex: v,
                parent: None,
                depth: 0,
                forced_spin: None,
                pinned_spin: None,
                children: None,
            }],
            truncation_depth: 0,
            path: Vec::new(),
        })
    }

    pub const ROOT: NodeId = 0;

    pub fn graph(&self) -> &'a Graph {
        self.g
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &SawNode {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[SawNode] {
        &self.nodes
    }

    pub fn truncation_depth(&self) -> usize {
        self.truncation_depth
    }

    pub fn children(&self, id: NodeId) -> Option<Range<NodeId>> {
        self.nodes[id].children.clone()
    }

    /// Source-graph vertices on the path from the root to `id`, root first,
    /// excluding `id` itself.
    pub fn ancestors(&self, id: NodeId) -> Vec<Vertex> {
        let mut out = Vec::with_capacity(self.nodes[id].depth);
        let mut cur = self.nodes[id].parent;
        while let Some(p) = cur {
            out.push(self.nodes[p].vertex);
            cur = self.nodes[p].parent;
        }
        out.reverse();
        out
    }

    /// Unexpanded nodes that are not fixed.
    pub fn frontier(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).filter(|&i| !self.nodes[i].is_expanded() && self.nodes[i].fixed_spin().is_none())
    }

    /// Free (not fixed) nodes at exactly `depth`.
    pub fn free_at_depth(&self, depth: usize) -> Vec<NodeId> {
        (0..self.nodes.len())
            .filter(|&i| self.nodes[i].depth == depth && self.nodes[i].fixed_spin().is_none())
            .collect()
    }

    /// Creates the children of a frontier node. Cost is `O(deg + depth)`.
    pub fn expand_node(&mut self, id: NodeId) -> Result<Range<NodeId>> {
        let node = &self.nodes[id];
        if node.fixed_spin().is_some() {
            return Err(Error::arg(format!("node {id} is a fixed leaf")));
        }
        if node.is_expanded() {
            return Err(Error::arg(format!("node {id} already expanded")));
        }
        let u = node.vertex;
        let depth = node.depth;
        let parent_vertex = node.parent.map(|p| self.nodes[p].vertex);

        // Root path including u, root first.
        let mut path = std::mem::take(&mut self.path);
        path.clear();
        let mut cur = Some(id);
        while let Some(c) = cur {
            path.push(self.nodes[c].vertex);
            cur = self.nodes[c].parent;
        }
        path.reverse();

        let start = self.nodes.len();
        for &w in self.g.neighbors(u) {
            if Some(w) == parent_vertex {
                continue;
            }
            let mut child = SawNode {
                vertex: w,
                parent: Some(id),
                depth: depth + 1,
                forced_spin: None,
                pinned_spin: None,
                children: None,
            };
            if let Some(i) = path.iter().position(|&x| x == w) {
                // Cycle w = path[i], path[i+1], ..., u, w.
                let first = path[i + 1];
                child.forced_spin = Some(if u > first { 1 } else { 0 });
            } else if let Some(s) = self.pin.and_then(|p| p.get(w)) {
                child.pinned_spin = Some(s);
            }
            self.nodes.push(child);
        }
        self.path = path;
        let range = start..self.nodes.len();
        self.nodes[id].children = Some(range.clone());
        Ok(range)
    }

    /// Children of `id`, expanding it first if needed. Fixed nodes have none.
    pub fn ensure_children(&mut self, id: NodeId) -> Range<NodeId> {
        if self.nodes[id].fixed_spin().is_some() {
            return 0..0;
        }
        match &self.nodes[id].children {
            Some(r) => r.clone(),
            None => self.expand_node(id).expect("free unexpanded node"),
        }
    }

    /// Expands every free node above depth `l`.
    pub fn expand_to(&mut self, l: usize) -> Result<()> {
        let mut i = 0;
        while i < self.nodes.len() {
            let n = &self.nodes[i];
            if n.depth < l && !n.is_expanded() && n.fixed_spin().is_none() {
                self.expand_node(i)?;
            }
            i += 1;
        }
        self.truncation_depth = self.truncation_depth.max(l);
        Ok(())
    }

    /// Expands until no free node remains; the resulting tree is finite
    /// because walks are self-avoiding.
    pub fn expand_all(&mut self) -> Result<()> {
        self.expand_to(self.g.n())
    }

    /// `mu_root(0)` by the two-spin recursion on the depth-`l` truncation.
    /// Free nodes at depth `l` take their spin from `boundary`; fixed nodes
    /// use their fixed spin. Nodes deeper than `l` are ignored.
    pub fn marginal_zero(
        &self,
        p: &TwoSpinParams,
        l: usize,
        boundary: impl Fn(NodeId) -> Option<Spin>,
    ) -> Result<f64> {
        Ok(self.evaluate(p, l, boundary)?.0)
    }

    fn evaluate(&self, p: &TwoSpinParams, l: usize, boundary: impl Fn(NodeId) -> Option<Spin>) -> Result<Pair> {
        let mut value = vec![Pair::ZERO_SPIN; self.nodes.len()];
        // Children always have larger ids than their parent.
        for id in (0..self.nodes.len()).rev() {
            let node = &self.nodes[id];
            if node.depth > l {
                continue;
            }
            value[id] = if let Some(s) = node.fixed_spin() {
                Pair::pinned(s)
            } else if node.depth == l {
                let s = boundary(id)
                    .ok_or_else(|| Error::arg(format!("boundary node {id} (vertex {}) unassigned", node.vertex)))?;
                if s > 1 {
                    return Err(Error::arg(format!("spin {s} invalid for a two-spin system")));
                }
                Pair::pinned(s)
            } else {
                let children = node
                    .children
                    .clone()
                    .ok_or_else(|| Error::arg(format!("node {id} above depth {l} not expanded")))?;
                let mut acc = PairProduct::new(p);
                for c in children {
                    acc.push(p, value[c]);
                }
                acc.finish()?
            };
        }
        Ok(value[Self::ROOT])
    }

    /// JSON dump of the tree for debugging and golden tests.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Dump<'n> {
            truncation_depth: usize,
            nodes: &'n [SawNode],
        }
        serde_json::to_string(&Dump {
            truncation_depth: self.truncation_depth,
            nodes: &self.nodes,
        })
        .expect("tree serialization")
    }
}

/// `mu_root(0)` of the depth-`l` tree under a boundary on its free depth-`l`
/// nodes, given as `(node, spin)` pairs.
pub fn saw_marginal(t: &SawTree<'_>, p: &TwoSpinParams, boundary: &[(NodeId, Spin)]) -> Result<f64> {
    let mut assign = vec![None; t.len()];
    for &(id, s) in boundary {
        if id >= t.len() {
            return Err(Error::arg(format!("unknown node {id}")));
        }
        assign[id] = Some(s);
    }
    t.marginal_zero(p, t.truncation_depth(), |id| assign[id])
}

/// Upper bound `1 + D((D-1)^l - 1)/(D-2)` on the node count at depth `<= l`.
pub fn node_count_bound(delta: usize, l: usize) -> f64 {
    let d = delta as f64;
    match delta {
        0 => 1.0,
        1 => 2.0,
        2 => 1.0 + 2.0 * l as f64,
        _ => 1.0 + d * ((d - 1.0).powi(l as i32) - 1.0) / (d - 2.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{gen_grid, gen_regular_tree};

    #[test]
    fn tree_input_gives_isomorphic_tree() {
        let g = gen_regular_tree(3, 3);
        let t = build_saw(&g, 0, 10).unwrap();
        assert_eq!(t.len(), g.n());
        assert!(t.nodes().iter().all(|n| n.forced_spin.is_none()));
        let t = build_saw(&g, 5, 10).unwrap();
        assert_eq!(t.len(), g.n());
    }

    #[test]
    fn triangle_has_two_closing_leaves() {
        let g = Graph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let t = build_saw(&g, 0, 3).unwrap();
        let forced: Vec<&SawNode> = t.nodes().iter().filter(|n| n.forced_spin.is_some()).collect();
        assert_eq!(forced.len(), 2);
        assert!(forced.iter().all(|n| n.depth == 3 && n.vertex == 0));
        let mut spins: Vec<Spin> = forced.iter().map(|n| n.forced_spin.unwrap()).collect();
        spins.sort();
        assert_eq!(spins, vec![0, 1]);
    }

    #[test]
    fn four_cycle_closes_on_both_branches() {
        let g = gen_grid(2, 2, &[]);
        let t = build_saw(&g, 0, 4).unwrap();
        let forced: Vec<&SawNode> = t.nodes().iter().filter(|n| n.forced_spin.is_some()).collect();
        assert_eq!(forced.len(), 2);
        assert!(forced.iter().all(|n| n.depth == 4));
        assert_ne!(forced[0].forced_spin, forced[1].forced_spin);
    }

    #[test]
    fn expand_contract() {
        let g = gen_grid(3, 1, &[]);
        let mut t = SawTree::new(&g, None, 1).unwrap();
        let kids = t.expand_node(0).unwrap();
        assert_eq!(kids.len(), 2);
        assert!(t.expand_node(0).is_err());
        let leaf = kids.start;
        assert_eq!(t.expand_node(leaf).unwrap().len(), 0);
        assert_eq!(t.ancestors(leaf), vec![1]);
    }

    #[test]
    fn containment_and_bound() {
        let g = gen_grid(4, 4, &[]);
        for l in 0..6 {
            let a = build_saw(&g, 5, l).unwrap();
            let b = build_saw(&g, 5, l + 1).unwrap();
            let shallow: Vec<(Vertex, usize, Option<Spin>)> =
                b.nodes().iter().filter(|n| n.depth <= l).map(|n| (n.vertex, n.depth, n.forced_spin)).collect();
            let all: Vec<(Vertex, usize, Option<Spin>)> =
                a.nodes().iter().map(|n| (n.vertex, n.depth, n.forced_spin)).collect();
            assert_eq!(shallow, all);
            assert!(a.len() as f64 <= node_count_bound(4, l));
        }
    }

    #[test]
    fn star_with_pinned_leaves() {
        let g = gen_regular_tree(3, 1);
        let t = build_saw(&g, 0, 1).unwrap();
        let p = TwoSpinParams::hardcore(1.0).unwrap();
        let boundary: Vec<(NodeId, Spin)> = t.free_at_depth(1).into_iter().map(|i| (i, 0)).collect();
        assert_eq!(saw_marginal(&t, &p, &boundary).unwrap(), 0.5);
        assert!(saw_marginal(&t, &p, &boundary[..2]).is_err());
        let root_only = build_saw(&g, 0, 0).unwrap();
        assert_eq!(saw_marginal(&root_only, &p, &[(0, 0)]).unwrap(), 1.0);
    }

    #[test]
    fn graph_pins_become_leaves() {
        let g = gen_grid(3, 1, &[]);
        let pin = PartialConfiguration::from_pairs(3, &[(2, 1)]);
        let mut t = SawTree::new(&g, Some(&pin), 0).unwrap();
        t.expand_all().unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.node(2).pinned_spin, Some(1));
        let p = TwoSpinParams::hardcore(1.0).unwrap();
        // Vertex 1 is blocked, so vertex 0 is free: mu(0) = 1/2.
        assert!((t.marginal_zero(&p, 3, |_| None).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn untruncated_tree_matches_brute_force() {
        use crate::generators::connected_catalog;
        use crate::oracle::exact_marginal;
        let p = TwoSpinParams::hardcore(0.8).unwrap();
        for n in 3..=5 {
            for g in connected_catalog(n) {
                let mut t = SawTree::new(&g, None, 0).unwrap();
                t.expand_all().unwrap();
                let saw = t.marginal_zero(&p, n, |_| None).unwrap();
                let exact = exact_marginal(&g, &p.into(), &PartialConfiguration::empty(n), 0).unwrap()[0];
                assert!((saw - exact).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dump_is_deterministic() {
        let g = gen_grid(3, 3, &[]);
        let a = build_saw(&g, 4, 5).unwrap().to_json();
        let b = build_saw(&g, 4, 5).unwrap().to_json();
        assert_eq!(a, b);
        assert!(a.contains("\"forced_spin\":1"));
    }
}
