//! Exact reference computations: brute-force partition functions and
//! marginals, the two-spin tree recursion, and a frontier sweep DP for
//! grid-embedded balls.
//!
//! Everything here is exact up to floating-point accumulation; when an input
//! is too large the functions fail with [`Error::OracleTooLarge`] rather than
//! approximate.

use serde::Serialize;
use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::graph::{DistanceShell, Graph, Vertex};
use crate::model::{LogWeight, PartialConfiguration, QSpinParams, Spin, SpinModel, TwoSpinParams};

pub const DEFAULT_FREE_CAP: usize = 25;
pub const DEFAULT_WIDTH_CAP: usize = 22;
/// Hard ceiling on the number of DP states regardless of the width cap.
const MAX_STATES: usize = 1 << 26;

/// Size limits for the exact engines.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct OracleCaps {
    /// Largest connected block of unpinned vertices that brute force will enumerate.
    pub free_vertices: usize,
    /// Largest frontier the sweep DP will carry.
    pub grid_width: usize,
}

impl Default for OracleCaps {
    fn default() -> Self {
        OracleCaps {
            free_vertices: DEFAULT_FREE_CAP,
            grid_width: DEFAULT_WIDTH_CAP,
        }
    }
}

impl OracleCaps {
    /// Defaults overridden by `SUBQUAD_ORACLE_FREE_CAP` / `SUBQUAD_GRID_WIDTH_CAP`.
    pub fn from_env() -> Result<Self> {
        let mut caps = Self::default();
        for (name, slot) in [
            ("SUBQUAD_ORACLE_FREE_CAP", &mut caps.free_vertices),
            ("SUBQUAD_GRID_WIDTH_CAP", &mut caps.grid_width),
        ] {
            if let Ok(text) = std::env::var(name) {
                *slot = text
                    .trim()
                    .parse()
                    .map_err(|_| Error::arg(format!("{name} must be a nonnegative integer, got {text:?}")))?;
            }
        }
        Ok(caps)
    }
}

/// Log of the total weight of all extensions of `pin`.
///
/// Unpinned vertices split into connected blocks that are independent given
/// the pinning; each block is enumerated separately and must respect the cap.
pub fn exact_partition(g: &Graph, model: &SpinModel, pin: &PartialConfiguration) -> Result<LogWeight> {
    exact_partition_with(g, model, pin, OracleCaps::default())
}

pub fn exact_partition_with(
    g: &Graph,
    model: &SpinModel,
    pin: &PartialConfiguration,
    caps: OracleCaps,
) -> Result<LogWeight> {
    let m = model.to_q_spin();
    pin.validate(g, m.q)?;
    let blocks = free_blocks(g, pin, None);
    for block in &blocks {
        check_block(block.len(), m.q, caps)?;
    }
    let mut total = pinned_log_weight(g, &m, pin);
    if total == f64::NEG_INFINITY {
        return Ok(LogWeight::ZERO);
    }
    for block in blocks {
        let e = Enumerator::new(g, &m, pin, block);
        let (scale, sums) = e.root_sums();
        let s: f64 = sums.iter().sum();
        if s == 0.0 {
            return Ok(LogWeight::ZERO);
        }
        total += scale + s.ln();
    }
    Ok(LogWeight(total))
}

/// Exact conditional distribution of the spin at `v` given `pin`.
pub fn exact_marginal(g: &Graph, model: &SpinModel, pin: &PartialConfiguration, v: Vertex) -> Result<Vec<f64>> {
    exact_marginal_with(g, model, pin, v, OracleCaps::default())
}

pub fn exact_marginal_with(
    g: &Graph,
    model: &SpinModel,
    pin: &PartialConfiguration,
    v: Vertex,
    caps: OracleCaps,
) -> Result<Vec<f64>> {
    let m = model.to_q_spin();
    g.check_vertex(v)?;
    pin.validate(g, m.q)?;
    if pin.is_pinned(v) {
        return Err(Error::arg(format!("vertex {v} is pinned")));
    }
    if !pin.is_feasible(g, &m) {
        return Err(Error::InfeasibleConditioning);
    }
    // Blocks not containing v only rescale both numerator and denominator,
    // but a block with zero total weight makes the whole conditioning
    // infeasible, so each is checked.
    let blocks = free_blocks(g, pin, Some(v));
    for block in &blocks {
        check_block(block.len(), m.q, caps)?;
    }
    let mut marginal = None;
    for block in blocks {
        let is_target = block[0] == v;
        let (_, sums) = Enumerator::new(g, &m, pin, block).root_sums();
        let total: f64 = sums.iter().sum();
        if total == 0.0 {
            return Err(Error::InfeasibleConditioning);
        }
        if is_target {
            marginal = Some(sums.iter().map(|s| s / total).collect());
        }
    }
    marginal.ok_or_else(|| Error::Internal("target block missing".into()))
}

fn check_block(size: usize, q: usize, caps: OracleCaps) -> Result<()> {
    if size > caps.free_vertices {
        return Err(Error::OracleTooLarge {
            what: "free vertices",
            size,
            cap: caps.free_vertices,
        });
    }
    if (size as f64) * (q as f64).log2() > 40.0 {
        return Err(Error::OracleTooLarge {
            what: "enumerated configurations (log2)",
            size: ((size as f64) * (q as f64).log2()).ceil() as usize,
            cap: 40,
        });
    }
    Ok(())
}

/// Log weight of the factors that involve only pinned vertices.
fn pinned_log_weight(g: &Graph, m: &QSpinParams, pin: &PartialConfiguration) -> f64 {
    let mut total = 0.0;
    for (v, s) in pin.pinned() {
        total += m.b[s as usize].ln();
        for &u in g.neighbors(v) {
            if u > v {
                if let Some(t) = pin.get(u) {
                    total += m.interaction(s, t).ln();
                }
            }
        }
    }
    if total.is_nan() { f64::NEG_INFINITY } else { total }
}

/// Connected blocks of unpinned vertices, each in BFS order. If `first` is
/// given its block comes first and starts at it.
fn free_blocks(g: &Graph, pin: &PartialConfiguration, first: Option<Vertex>) -> Vec<Vec<Vertex>> {
    let mut seen = vec![false; g.n()];
    let mut blocks = Vec::new();
    let starts = first.into_iter().chain(0..g.n());
    for s in starts {
        if seen[s] || pin.is_pinned(s) {
            continue;
        }
        seen[s] = true;
        let mut block = vec![s];
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &w in g.neighbors(u) {
                if !seen[w] && !pin.is_pinned(w) {
                    seen[w] = true;
                    block.push(w);
                    queue.push_back(w);
                }
            }
        }
        blocks.push(block);
    }
    blocks
}

/// Depth-first enumeration over one block of unpinned vertices.
///
/// Factors are rescaled so that each is at most one, with the scale carried
/// separately in log space; the recursion sums subtrees before adding them,
/// which keeps accumulated rounding proportional to the block size rather
/// than to the number of configurations.
struct Enumerator {
    q: usize,
    /// Rescaled interaction matrix, row-major.
    a: Vec<f64>,
    unary: Vec<Vec<f64>>,
    earlier: Vec<Vec<usize>>,
    log_scale: f64,
}

impl Enumerator {
    fn new(g: &Graph, m: &QSpinParams, pin: &PartialConfiguration, block: Vec<Vertex>) -> Self {
        let q = m.q;
        let amax = m.a.iter().cloned().fold(0.0, f64::max);
        let a: Vec<f64> = m.a.iter().map(|x| if amax > 0.0 { x / amax } else { 0.0 }).collect();
        let mut position = vec![usize::MAX; g.n()];
        for (i, &v) in block.iter().enumerate() {
            position[v] = i;
        }
        let mut log_scale = 0.0;
        let mut unary = Vec::with_capacity(block.len());
        let mut earlier = Vec::with_capacity(block.len());
        for (i, &v) in block.iter().enumerate() {
            let mut u: Vec<f64> = (0..q)
                .map(|s| {
                    g.neighbors(v)
                        .iter()
                        .filter_map(|&w| pin.get(w))
                        .fold(m.b[s], |acc, t| acc * m.interaction(s as Spin, t))
                })
                .collect();
            let umax = u.iter().cloned().fold(0.0, f64::max);
            if umax > 0.0 {
                u.iter_mut().for_each(|x| *x /= umax);
                log_scale += umax.ln();
            }
            unary.push(u);
            let prev: Vec<usize> = g
                .neighbors(v)
                .iter()
                .map(|&w| position[w])
                .filter(|&j| j < i)
                .collect();
            if amax > 0.0 {
                log_scale += prev.len() as f64 * amax.ln();
            }
            earlier.push(prev);
        }
        Enumerator {
            q,
            a,
            unary,
            earlier,
            log_scale,
        }
    }

    /// Rescaled total weight split by the spin of the block's first vertex,
    /// together with the log scale to add back.
    fn root_sums(&self) -> (f64, Vec<f64>) {
        let mut spins = vec![0 as Spin; self.unary.len()];
        let sums = (0..self.q)
            .map(|s| {
                let f = self.unary[0][s];
                if f == 0.0 {
                    return 0.0;
                }
                spins[0] = s as Spin;
                f * self.sum_from(1, &mut spins)
            })
            .collect();
        (self.log_scale, sums)
    }

    fn sum_from(&self, i: usize, spins: &mut [Spin]) -> f64 {
        if i == spins.len() {
            return 1.0;
        }
        let mut total = 0.0;
        for s in 0..self.q {
            let mut f = self.unary[i][s];
            for &j in &self.earlier[i] {
                if f == 0.0 {
                    break;
                }
                f *= self.a[s * self.q + spins[j] as usize];
            }
            if f == 0.0 {
                continue;
            }
            spins[i] = s as Spin;
            total += f * self.sum_from(i + 1, spins);
        }
        total
    }
}

/// Marginal ratio `R = mu(1) / mu(0)` with an explicit infinity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Ratio {
    Finite(f64),
    Infinite,
}

impl Ratio {
    /// From unnormalised weights of spin 0 and spin 1.
    pub fn from_weights(z0: f64, z1: f64) -> Result<Ratio> {
        if z0 == 0.0 && z1 == 0.0 {
            return Err(Error::InfeasibleConditioning);
        }
        Ok(if z0 == 0.0 { Ratio::Infinite } else { Ratio::Finite(z1 / z0) })
    }

    /// `mu(0) = 1 / (1 + R)`.
    pub fn marginal_zero(self) -> f64 {
        match self {
            Ratio::Finite(r) => 1.0 / (1.0 + r),
            Ratio::Infinite => 0.0,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Ratio::Infinite)
    }
}

/// Normalised `(mu(0), mu(1))` of a subtree root, the form in which the
/// two-spin recursion is evaluated. Working with probabilities instead of the
/// raw ratio gives the limits at `R = 0` and `R = inf` for free.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Pair(pub f64, pub f64);

impl Pair {
    pub const ZERO_SPIN: Pair = Pair(1.0, 0.0);
    pub const ONE_SPIN: Pair = Pair(0.0, 1.0);

    pub fn pinned(s: Spin) -> Pair {
        if s == 0 { Pair::ZERO_SPIN } else { Pair::ONE_SPIN }
    }

    pub fn ratio(self) -> Result<Ratio> {
        Ratio::from_weights(self.0, self.1)
    }
}

/// Accumulates the children of one node:
/// `z0 = prod (beta a0 + a1)`, `z1 = lambda prod (a0 + gamma a1)`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct PairProduct {
    z0: f64,
    z1: f64,
}

impl PairProduct {
    pub fn new(p: &TwoSpinParams) -> Self {
        PairProduct { z0: 1.0, z1: p.lambda }
    }

    pub fn push(&mut self, p: &TwoSpinParams, child: Pair) {
        self.z0 *= p.beta * child.0 + child.1;
        self.z1 *= child.0 + p.gamma * child.1;
        let s = self.z0 + self.z1;
        if s > 0.0 && !(1e-100..=1e100).contains(&s) {
            self.z0 /= s;
            self.z1 /= s;
        }
    }

    pub fn finish(self) -> Result<Pair> {
        let s = self.z0 + self.z1;
        if s == 0.0 {
            return Err(Error::InfeasibleConditioning);
        }
        Ok(Pair(self.z0 / s, self.z1 / s))
    }
}

/// Evaluates the two-spin tree recursion `R = lambda prod (gamma R_i + 1) / (R_i + beta)`
/// on the component of `root`, which must be a tree. Pinned vertices cut the
/// recursion with their fixed spin.
pub fn tree_ratio(g: &Graph, p: &TwoSpinParams, pin: &PartialConfiguration, root: Vertex) -> Result<Ratio> {
    g.check_vertex(root)?;
    pin.validate(g, 2)?;
    let order = g.bfs_distances(root, usize::MAX);
    let comp: Vec<Vertex> = (0..g.n()).filter(|&u| order[u] != usize::MAX).collect();
    let edges: usize = comp.iter().map(|&u| g.degree(u)).sum::<usize>() / 2;
    if edges + 1 != comp.len() {
        return Err(Error::arg("tree_ratio needs the root's component to be a tree"));
    }
    if let Some(s) = pin.get(root) {
        return Pair::pinned(s).ratio();
    }
    // Iterative post-order over the rooted tree.
    let mut parent = vec![usize::MAX; g.n()];
    let mut stack = vec![root];
    let mut post = Vec::with_capacity(comp.len());
    while let Some(u) = stack.pop() {
        post.push(u);
        if pin.is_pinned(u) {
            continue;
        }
        for &w in g.neighbors(u) {
            if w != parent[u] {
                parent[w] = u;
                stack.push(w);
            }
        }
    }
    let mut value = vec![Pair::ZERO_SPIN; g.n()];
    for &u in post.iter().rev() {
        value[u] = match pin.get(u) {
            Some(s) => Pair::pinned(s),
            None => {
                let mut acc = PairProduct::new(p);
                for &w in g.neighbors(u) {
                    if w != parent[u] {
                        acc.push(p, value[w]);
                    }
                }
                acc.finish()?
            }
        };
    }
    value[root].ratio()
}

/// Exact marginal at `v` in the subgraph induced by `window`'s ball, with
/// `pin` applied inside it. When every sphere vertex is pinned this is the
/// true conditional marginal in `g`, since the sphere separates the interior
/// from the rest of the graph.
///
/// Grid-embedded graphs use the sweep DP (cap on frontier width); graphs
/// without coordinates fall back to brute-force enumeration.
pub fn grid_marginal(
    g: &Graph,
    model: &SpinModel,
    pin: &PartialConfiguration,
    v: Vertex,
    window: &DistanceShell,
) -> Result<Vec<f64>> {
    grid_marginal_with(g, model, pin, v, window, OracleCaps::default())
}

pub fn grid_marginal_with(
    g: &Graph,
    model: &SpinModel,
    pin: &PartialConfiguration,
    v: Vertex,
    window: &DistanceShell,
    caps: OracleCaps,
) -> Result<Vec<f64>> {
    let m = model.to_q_spin();
    pin.validate(g, m.q)?;
    if pin.is_pinned(v) {
        return Err(Error::arg(format!("vertex {v} is pinned")));
    }
    if window.center != v && !window.ball_vertices().any(|u| u == v) {
        return Err(Error::arg("vertex not inside the window"));
    }
    let vertices: Vec<Vertex> = window.ball_vertices().collect();
    if g.coords().is_none() {
        let (sub, map) = induced(g, &vertices);
        let sub_pin = restrict(pin, &vertices);
        let sub_model: SpinModel = m.into();
        return exact_marginal_with(&sub, &sub_model, &sub_pin, map(v), caps);
    }
    let sweep = Sweep::plan(g, &m, pin, &vertices, &[v], caps)?;
    let (_, table) = sweep.run()?;
    normalize(table)
}

/// Log partition function of the subgraph induced by `vertices` under `pin`,
/// by the sweep DP. Useful as a reference beyond brute-force range.
pub fn sweep_partition(
    g: &Graph,
    model: &SpinModel,
    pin: &PartialConfiguration,
    vertices: &[Vertex],
    caps: OracleCaps,
) -> Result<LogWeight> {
    let m = model.to_q_spin();
    pin.validate(g, m.q)?;
    let sweep = Sweep::plan(g, &m, pin, vertices, &[], caps)?;
    match sweep.run() {
        Ok((scale, table)) => Ok(LogWeight(scale + table[0].ln())),
        Err(Error::InfeasibleConditioning) => Ok(LogWeight::ZERO),
        Err(e) => Err(e),
    }
}

/// Joint weights of the spins at `keep` (mixed radix, first vertex is the
/// least significant digit), in the subgraph induced by `vertices`.
pub(crate) fn sweep_joint(
    g: &Graph,
    m: &QSpinParams,
    pin: &PartialConfiguration,
    vertices: &[Vertex],
    keep: &[Vertex],
    caps: OracleCaps,
) -> Result<Vec<f64>> {
    let sweep = Sweep::plan(g, m, pin, vertices, keep, caps)?;
    Ok(sweep.run()?.1)
}

/// Conditional marginals of a centre vertex for every configuration of a set
/// of free boundary vertices, computed in one sweep over `region`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionalTable {
    pub center: Vertex,
    pub q: usize,
    /// Mixed-radix order of boundary configurations: the first vertex is the
    /// least significant digit.
    pub free_boundary: Vec<Vertex>,
    /// `None` marks a boundary configuration of zero weight.
    pub entries: Vec<Option<Vec<f64>>>,
}

impl ConditionalTable {
    pub fn index_of(&self, spin_of: impl Fn(Vertex) -> Spin) -> usize {
        self.free_boundary
            .iter()
            .rev()
            .fold(0, |acc, &u| acc * self.q + spin_of(u) as usize)
    }

    pub fn configuration(&self, mut index: usize) -> Vec<Spin> {
        self.free_boundary
            .iter()
            .map(|_| {
                let s = (index % self.q) as Spin;
                index /= self.q;
                s
            })
            .collect()
    }

    pub fn feasible_count(&self) -> usize {
        self.entries.iter().filter(|e| e.is_some()).count()
    }
}

/// Builds the [`ConditionalTable`] of `v` inside the subgraph induced by
/// `region`, with `pin` applied and `free_boundary` left open.
pub fn conditional_table(
    g: &Graph,
    m: &QSpinParams,
    pin: &PartialConfiguration,
    v: Vertex,
    region: &[Vertex],
    free_boundary: &[Vertex],
    caps: OracleCaps,
) -> Result<ConditionalTable> {
    let q = m.q;
    let mut keep = Vec::with_capacity(free_boundary.len() + 1);
    keep.push(v);
    keep.extend_from_slice(free_boundary);
    let joint = match sweep_joint(g, m, pin, region, &keep, caps) {
        Ok(t) => t,
        Err(Error::InfeasibleConditioning) => vec![0.0; q.pow(keep.len() as u32)],
        Err(e) => return Err(e),
    };
    let entries = joint
        .chunks(q)
        .map(|col| {
            let s: f64 = col.iter().sum();
            (s > 0.0).then(|| col.iter().map(|x| x / s).collect())
        })
        .collect();
    Ok(ConditionalTable {
        center: v,
        q,
        free_boundary: free_boundary.to_vec(),
        entries,
    })
}

fn normalize(mut table: Vec<f64>) -> Result<Vec<f64>> {
    let s: f64 = table.iter().sum();
    if !(s > 0.0) {
        return Err(Error::InfeasibleConditioning);
    }
    table.iter_mut().for_each(|x| *x /= s);
    Ok(table)
}

fn induced(g: &Graph, vertices: &[Vertex]) -> (Graph, impl Fn(Vertex) -> Vertex) {
    let mut index = vec![usize::MAX; g.n()];
    for (i, &u) in vertices.iter().enumerate() {
        index[u] = i;
    }
    let mut edges = Vec::new();
    for (i, &u) in vertices.iter().enumerate() {
        for &w in g.neighbors(u) {
            if index[w] != usize::MAX && index[w] > i {
                edges.push((i, index[w]));
            }
        }
    }
    let sub = Graph::from_edges(vertices.len(), &edges).expect("induced subgraph");
    (sub, move |u| index[u])
}

fn restrict(pin: &PartialConfiguration, vertices: &[Vertex]) -> PartialConfiguration {
    let mut out = PartialConfiguration::empty(vertices.len());
    for (i, &u) in vertices.iter().enumerate() {
        if let Some(s) = pin.get(u) {
            out.set(i, s);
        }
    }
    out
}

/// Vertex-at-a-time transfer matrix over an elimination order.
///
/// The state is the joint weight of the spins on the current frontier:
/// processed free vertices that still have an unprocessed free neighbour,
/// plus the `keep` vertices, which are never summed out. Pinned vertices are
/// folded into the unary factors of their free neighbours.
struct Sweep<'a> {
    m: &'a QSpinParams,
    order: Vec<Vertex>,
    /// For each vertex in `order`: earlier free neighbours.
    earlier: Vec<Vec<Vertex>>,
    unary: Vec<Vec<f64>>,
    /// For each step, the vertices that leave the frontier after it.
    retire: Vec<Vec<Vertex>>,
    keep: Vec<Vertex>,
    base_log: f64,
}

/// The sweep order (by x or by y when coordinates exist) with the smaller
/// frontier, its width and the retirement schedule.
fn best_order(
    g: &Graph,
    inside: &[bool],
    pin: &PartialConfiguration,
    free: &[Vertex],
    keep: &[Vertex],
) -> (usize, Vec<Vertex>, Vec<Vec<Vertex>>) {
    let orders: Vec<Vec<Vertex>> = match g.coords() {
        Some(c) => {
            let mut by_x = free.to_vec();
            by_x.sort_by_key(|&u| (c[u].0, c[u].1, u));
            let mut by_y = free.to_vec();
            by_y.sort_by_key(|&u| (c[u].1, c[u].0, u));
            vec![by_x, by_y]
        }
        None => vec![free.to_vec()],
    };
    let mut best: Option<(usize, Vec<Vertex>, Vec<Vec<Vertex>>)> = None;
    for order in orders {
        let (width, retire) = simulate(g, inside, pin, &order, keep);
        if best.as_ref().is_none_or(|b| width < b.0) {
            best = Some((width, order, retire));
        }
    }
    best.expect("at least one order")
}

/// Whether a sweep over `vertices` keeping `keep` fits within `caps`.
pub(crate) fn sweep_fits(
    g: &Graph,
    q: usize,
    pin: &PartialConfiguration,
    vertices: &[Vertex],
    keep: &[Vertex],
    caps: OracleCaps,
) -> bool {
    let mut inside = vec![false; g.n()];
    for &u in vertices {
        inside[u] = true;
    }
    let free: Vec<Vertex> = vertices.iter().copied().filter(|&u| !pin.is_pinned(u)).collect();
    let (width, _, _) = best_order(g, &inside, pin, &free, keep);
    width <= caps.grid_width && (q as f64).powi(width as i32) <= MAX_STATES as f64
}

impl<'a> Sweep<'a> {
    fn plan(
        g: &Graph,
        m: &'a QSpinParams,
        pin: &PartialConfiguration,
        vertices: &[Vertex],
        keep: &[Vertex],
        caps: OracleCaps,
    ) -> Result<Self> {
        let mut inside = vec![false; g.n()];
        for &u in vertices {
            inside[u] = true;
        }
        if let Some(&u) = keep.iter().find(|&&u| !inside[u] || pin.is_pinned(u)) {
            return Err(Error::arg(format!("kept vertex {u} must be free and inside the region")));
        }
        let free: Vec<Vertex> = vertices.iter().copied().filter(|&u| !pin.is_pinned(u)).collect();

        // Pinned-only factors inside the region.
        let mut base_log = 0.0;
        for &u in vertices {
            if let Some(s) = pin.get(u) {
                base_log += m.b[s as usize].ln();
                for &w in g.neighbors(u) {
                    if w > u && inside[w] {
                        if let Some(t) = pin.get(w) {
                            base_log += m.interaction(s, t).ln();
                        }
                    }
                }
            }
        }
        if base_log.is_nan() || base_log == f64::NEG_INFINITY {
            return Err(Error::InfeasibleConditioning);
        }

        let (width, order, retire) = best_order(g, &inside, pin, &free, keep);
        let states = (m.q as f64).powi(width as i32);
        if width > caps.grid_width || states > MAX_STATES as f64 {
            return Err(Error::OracleTooLarge {
                what: "sweep frontier width",
                size: width,
                cap: caps.grid_width,
            });
        }

        let mut processed = vec![false; g.n()];
        let mut earlier = Vec::with_capacity(order.len());
        let mut unary = Vec::with_capacity(order.len());
        for &u in &order {
            earlier.push(
                g.neighbors(u)
                    .iter()
                    .copied()
                    .filter(|&w| processed[w])
                    .collect(),
            );
            processed[u] = true;
            unary.push(
                (0..m.q)
                    .map(|s| {
                        g.neighbors(u)
                            .iter()
                            .filter(|&&w| inside[w])
                            .filter_map(|&w| pin.get(w))
                            .fold(m.b[s], |acc, t| acc * m.interaction(s as Spin, t))
                    })
                    .collect(),
            );
        }
        Ok(Sweep {
            m,
            order,
            earlier,
            unary,
            retire,
            keep: keep.to_vec(),
            base_log,
        })
    }

    /// Returns the log scale and the joint table over `keep` (in `keep` order).
    fn run(&self) -> Result<(f64, Vec<f64>)> {
        let q = self.m.q;
        let mut frontier: Vec<Vertex> = Vec::new();
        let mut table = vec![1.0f64];
        let mut log_scale = self.base_log;
        let mut digit = Vec::new();
        for (step, &u) in self.order.iter().enumerate() {
            let positions: Vec<usize> = self.earlier[step]
                .iter()
                .map(|w| frontier.iter().position(|x| x == w).expect("neighbour on frontier"))
                .collect();
            let len = table.len();
            let mut next = vec![0.0; len * q];
            let stride: Vec<usize> = positions.iter().map(|&p| q.pow(p as u32)).collect();
            for (idx, &w) in table.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                digit.clear();
                digit.extend(stride.iter().map(|&st| (idx / st) % q));
                for s in 0..q {
                    let mut f = self.unary[step][s];
                    for &t in &digit {
                        f *= self.m.a[s * q + t];
                    }
                    next[idx + s * len] = w * f;
                }
            }
            table = next;
            frontier.push(u);
            for w in &self.retire[step] {
                let p = frontier.iter().position(|x| x == w).expect("retiring vertex on frontier");
                table = sum_out(&table, q, p);
                frontier.remove(p);
            }
            let max = table.iter().cloned().fold(0.0, f64::max);
            if max == 0.0 {
                return Err(Error::InfeasibleConditioning);
            }
            table.iter_mut().for_each(|x| *x /= max);
            log_scale += max.ln();
        }
        // Reorder remaining digits to match `keep`.
        debug_assert_eq!(frontier.len(), self.keep.len());
        let digits = self.keep.len();
        let mut out = vec![0.0; table.len()];
        let src_pos: Vec<usize> = self
            .keep
            .iter()
            .map(|k| frontier.iter().position(|x| x == k).expect("kept vertex"))
            .collect();
        for (idx, &w) in table.iter().enumerate() {
            let mut dst = 0;
            let mut place = 1;
            for &p in src_pos.iter().take(digits) {
                dst += ((idx / q.pow(p as u32)) % q) * place;
                place *= q;
            }
            out[dst] = w;
        }
        Ok((log_scale, out))
    }
}

/// Frontier width and retirement schedule for an elimination order.
fn simulate(
    g: &Graph,
    inside: &[bool],
    pin: &PartialConfiguration,
    order: &[Vertex],
    keep: &[Vertex],
) -> (usize, Vec<Vec<Vertex>>) {
    let free_nbrs = |u: Vertex| {
        g.neighbors(u)
            .iter()
            .copied()
            .filter(move |&w| inside[w] && !pin.is_pinned(w))
    };
    let mut pending: Vec<usize> = vec![0; g.n()];
    for &u in order {
        pending[u] = free_nbrs(u).count();
    }
    let mut frontier: Vec<Vertex> = Vec::new();
    let mut width = 0;
    let mut retire = Vec::with_capacity(order.len());
    for &u in order {
        frontier.push(u);
        width = width.max(frontier.len());
        for w in free_nbrs(u) {
            pending[w] -= 1;
        }
        // `pending` counts unprocessed free neighbours, decremented from the
        // processed side, so it is exact for every frontier vertex.
        let out: Vec<Vertex> = frontier
            .iter()
            .copied()
            .filter(|&w| pending[w] == 0 && !keep.contains(&w))
            .collect();
        frontier.retain(|w| !out.contains(w));
        retire.push(out);
    }
    (width, retire)
}

fn sum_out(table: &[f64], q: usize, p: usize) -> Vec<f64> {
    let low = q.pow(p as u32);
    let len = table.len() / q;
    (0..len)
        .map(|idx| {
            let base = idx % low + (idx / low) * low * q;
            (0..q).map(|s| table[base + s * low]).sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{connected_catalog, gen_grid, gen_regular_tree};
    use crate::graph::ball;

    fn hc(lambda: f64) -> SpinModel {
        TwoSpinParams::hardcore(lambda).unwrap().into()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn closed_forms() {
        let k1 = Graph::from_edges(1, &[]).unwrap();
        let p2 = Graph::from_edges(2, &[(0, 1)]).unwrap();
        let c4 = gen_grid(2, 2, &[]);
        let none = |g: &Graph| PartialConfiguration::empty(g.n());
        for lambda in [0.1, 1.0, 7.5] {
            let z = exact_partition(&k1, &hc(lambda), &none(&k1)).unwrap().value();
            assert!(close(z, 1.0 + lambda, 1e-12));
            let z = exact_partition(&p2, &hc(lambda), &none(&p2)).unwrap().value();
            assert!(close(z, 1.0 + 2.0 * lambda, 1e-12));
        }
        let z = exact_partition(&c4, &hc(0.5), &none(&c4)).unwrap().value();
        assert!(close(z, 3.5, 1e-12));
    }

    #[test]
    fn marginal_examples() {
        let k1 = Graph::from_edges(1, &[]).unwrap();
        let mu = exact_marginal(&k1, &hc(0.4), &PartialConfiguration::empty(1), 0).unwrap();
        assert!(close(mu[1], 0.4 / 1.4, 1e-14));

        let p2 = Graph::from_edges(2, &[(0, 1)]).unwrap();
        let mu = exact_marginal(&p2, &hc(1.0), &PartialConfiguration::from_pairs(2, &[(1, 1)]), 0).unwrap();
        assert_eq!(mu[1], 0.0);

        let c4 = gen_grid(2, 2, &[]);
        let mu = exact_marginal(&c4, &hc(1.0), &PartialConfiguration::empty(4), 0).unwrap();
        assert!(close(mu[1], 2.0 / 7.0, 1e-14));
        assert!(close(mu[0] + mu[1], 1.0, 1e-12));
    }

    #[test]
    fn infeasible_pins() {
        let p3 = gen_grid(3, 1, &[]);
        let bad = PartialConfiguration::from_pairs(3, &[(0, 1), (1, 1)]);
        assert!(exact_partition(&p3, &hc(1.0), &bad).unwrap().is_zero());
        let zero_field: SpinModel = QSpinParams::new(vec![vec![1.0, 1.0], vec![1.0, 0.0]], vec![1.0, 0.0])
            .unwrap()
            .into();
        let pin = PartialConfiguration::from_pairs(3, &[(0, 1)]);
        assert_eq!(exact_marginal(&p3, &zero_field, &pin, 1), Err(Error::InfeasibleConditioning));
    }

    #[test]
    fn cap_is_enforced() {
        let g = gen_grid(6, 5, &[]);
        let err = exact_partition(&g, &hc(1.0), &PartialConfiguration::empty(30)).unwrap_err();
        assert!(matches!(err, Error::OracleTooLarge { .. }));
        // Pinning a column splits the free part into blocks under the cap.
        let pin = PartialConfiguration::from_pairs(30, &(0..5).map(|y| (y * 6 + 3, 0)).collect::<Vec<_>>());
        assert!(exact_partition(&g, &hc(1.0), &pin).is_ok());
    }

    #[test]
    fn partition_multiplies_over_components() {
        let a = gen_grid(3, 2, &[]);
        let b = gen_regular_tree(3, 1);
        let u = a.disjoint_union(&b);
        let m = hc(0.7);
        let za = exact_partition(&a, &m, &PartialConfiguration::empty(a.n())).unwrap().ln();
        let zb = exact_partition(&b, &m, &PartialConfiguration::empty(b.n())).unwrap().ln();
        let zu = exact_partition(&u, &m, &PartialConfiguration::empty(u.n())).unwrap().ln();
        assert!((za + zb - zu).abs() < 1e-12);
    }

    #[test]
    fn tree_ratio_matches_brute_force_on_trees() {
        for n in 1..=7 {
            for g in connected_catalog(n) {
                if g.edge_count() + 1 != g.n() {
                    continue;
                }
                for lambda in [0.1, 0.5, 1.0] {
                    let p = TwoSpinParams::hardcore(lambda).unwrap();
                    let pin = PartialConfiguration::empty(n);
                    for v in 0..n {
                        let r = tree_ratio(&g, &p, &pin, v).unwrap();
                        let mu = exact_marginal(&g, &p.into(), &pin, v).unwrap();
                        assert!((r.marginal_zero() - mu[0]).abs() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn tree_ratio_examples() {
        let leaf = Graph::from_edges(1, &[]).unwrap();
        let p = TwoSpinParams::hardcore(0.3).unwrap();
        assert_eq!(tree_ratio(&leaf, &p, &PartialConfiguration::empty(1), 0).unwrap(), Ratio::Finite(0.3));
        let star = gen_regular_tree(4, 1);
        match tree_ratio(&star, &p, &PartialConfiguration::empty(5), 0).unwrap() {
            Ratio::Finite(r) => assert!((r - 0.3 / 1.3f64.powi(4)).abs() < 1e-15),
            Ratio::Infinite => panic!(),
        }
        let pin = PartialConfiguration::from_pairs(5, &[(1, 1)]);
        assert_eq!(tree_ratio(&star, &p, &pin, 0).unwrap(), Ratio::Finite(0.0));
        let cycle = gen_grid(2, 2, &[]);
        assert!(tree_ratio(&cycle, &p, &PartialConfiguration::empty(4), 0).is_err());
        // Soft system with a pinned-1 child under beta = 0 forces the root to 1.
        let p = TwoSpinParams::new(0.0, 2.0, 1.0).unwrap();
        let pin = PartialConfiguration::from_pairs(5, &[(1, 0)]);
        assert_eq!(tree_ratio(&star, &p, &pin, 0).unwrap(), Ratio::Infinite);
    }

    #[test]
    fn sweep_matches_enumeration_on_grid_balls() {
        let g = gen_grid(5, 5, &[]);
        let v = 12;
        for (lambda, radius) in [(1.0, 2), (0.3, 1), (2.5, 2), (1.0, 0)] {
            let shell = ball(&g, v, radius).unwrap();
            let mut pin = PartialConfiguration::empty(25);
            for &u in &shell.sphere {
                if u != v {
                    pin.set(u, 0);
                }
            }
            if radius == 0 {
                let mu = grid_marginal(&g, &hc(lambda), &pin, v, &shell).unwrap();
                assert!((mu[1] - lambda / (1.0 + lambda)).abs() < 1e-12);
                continue;
            }
            let fast = grid_marginal(&g, &hc(lambda), &pin, v, &shell).unwrap();
            // Outside the ball is irrelevant once the sphere is pinned; pin it too for brute force.
            let mut full = pin.clone();
            for u in 0..25 {
                if shell.ball_vertices().all(|w| w != u) {
                    full.set(u, 0);
                }
            }
            let slow = exact_marginal(&g, &hc(lambda), &full, v).unwrap();
            assert!((fast[1] - slow[1]).abs() < 1e-12, "{lambda} {radius}");
        }
    }

    #[test]
    fn sweep_handles_mixed_pins_and_q_spin() {
        let g = gen_grid(4, 4, &[(2, 1)]);
        let potts: SpinModel = QSpinParams::new(
            vec![vec![2.0, 1.0, 0.5], vec![1.0, 1.5, 1.0], vec![0.5, 1.0, 1.0]],
            vec![1.0, 0.7, 1.3],
        )
        .unwrap()
        .into();
        let pin = PartialConfiguration::from_pairs(g.n(), &[(0, 2), (7, 1), (14, 0)]);
        let all: Vec<Vertex> = (0..g.n()).collect();
        let z_sweep = sweep_partition(&g, &potts, &pin, &all, OracleCaps::default()).unwrap();
        let z_enum = exact_partition(&g, &potts, &pin).unwrap();
        assert!((z_sweep.ln() - z_enum.ln()).abs() < 1e-11);
        let shell = ball(&g, 5, 10).unwrap();
        let fast = grid_marginal(&g, &potts, &pin, 5, &shell).unwrap();
        let slow = exact_marginal(&g, &potts, &pin, 5).unwrap();
        for s in 0..3 {
            assert!((fast[s] - slow[s]).abs() < 1e-12);
        }
    }

    #[test]
    fn sweep_joint_orders_digits_like_keep() {
        let g = gen_grid(3, 1, &[]);
        let m = hc(1.0).to_q_spin();
        let table = sweep_joint(&g, &m, &PartialConfiguration::empty(3), &[0, 1, 2], &[2, 1], OracleCaps::default()).unwrap();
        // digits: vertex 2 least significant; (2=1,1=1) impossible.
        assert_eq!(table[3], 0.0);
        assert!(table[1] > 0.0 && table[2] > 0.0);
        assert!((table[1] / table[2] - 2.0).abs() < 1e-12); // v2 occupied: v0 free; v1 occupied: v0,v2 empty
    }

    #[test]
    fn width_cap_is_enforced() {
        let g = gen_grid(30, 30, &[]);
        let shell = ball(&g, 465, 29).unwrap();
        let caps = OracleCaps { free_vertices: 25, grid_width: 10 };
        let err = grid_marginal_with(&g, &hc(1.0), &PartialConfiguration::empty(900), 465, &shell, caps).unwrap_err();
        assert!(matches!(err, Error::OracleTooLarge { .. }));
    }

    #[test]
    fn env_caps_parse() {
        // Only checks the default path; the env-var path is covered by the CLI tests.
        assert_eq!(OracleCaps::default().free_vertices, DEFAULT_FREE_CAP);
    }
}
