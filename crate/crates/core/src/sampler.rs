//! The hard-core recursive marginal sampler, its step budget, and the
//! branching process that dominates its running time.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{Graph, Vertex};
use crate::model::{PartialConfiguration, Spin};
use crate::par::{Execution, map_indexed};
use crate::rng::RngStream;
use crate::saw::{NodeId, SawTree};

/// Global step timer shared by one top-level draw and all its recursive calls.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Budget {
    pub remaining: u64,
    pub consumed: u64,
}

impl Budget {
    pub fn new(steps: u64) -> Self {
        Budget {
            remaining: steps,
            consumed: 0,
        }
    }

    pub fn unlimited() -> Self {
        Self::new(u64::MAX)
    }

    /// One sampler invocation.
    pub fn tick(&mut self) -> Result<()> {
        if self.remaining == 0 {
            return Err(Error::BudgetExhausted {
                consumed: self.consumed,
            });
        }
        self.remaining -= 1;
        self.consumed += 1;
        Ok(())
    }
}

/// The step budget `T = ceil(2 D^2 / (p D - 1)^2 * ln(1/eps))`, `p = lambda/(1+lambda)`,
/// beyond which the dominating branching process survives with probability
/// at most `eps`. Floored at one step so that a draw can always start.
pub fn budget_for(delta: usize, lambda: f64, eps: f64) -> Result<u64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::arg(format!("need 0 < eps < 1, got {eps}")));
    }
    if !(lambda > 0.0) {
        return Err(Error::arg(format!("need lambda > 0, got {lambda}")));
    }
    if delta >= 2 && lambda >= 1.0 / (delta as f64 - 1.0) {
        return Err(Error::OutOfRegime(format!(
            "budget needs lambda < 1/(D-1) = {}, got {lambda}",
            1.0 / (delta as f64 - 1.0)
        )));
    }
    let d = delta as f64;
    let p = lambda / (1.0 + lambda);
    let drift = p * d - 1.0;
    let t = 2.0 * d * d / (drift * drift) * (1.0 / eps).ln();
    Ok((t.ceil() as u64).max(1))
}

/// A graph-like structure the hard-core sampler can walk, with its own
/// mutable pinning.
pub trait SamplerState {
    type Site: Copy + PartialEq;

    fn spin(&self, x: Self::Site) -> Option<Spin>;
    fn set_spin(&mut self, x: Self::Site, s: Option<Spin>);
    fn neighbors(&mut self, x: Self::Site, out: &mut Vec<Self::Site>);
}

/// A source graph together with a pinning.
#[derive(Clone, Debug)]
pub struct GraphState<'a> {
    pub g: &'a Graph,
    pub pin: PartialConfiguration,
}

impl<'a> GraphState<'a> {
    pub fn new(g: &'a Graph, pin: PartialConfiguration) -> Self {
        GraphState { g, pin }
    }
}

impl SamplerState for GraphState<'_> {
    type Site = Vertex;

    fn spin(&self, x: Vertex) -> Option<Spin> {
        self.pin.get(x)
    }

    fn set_spin(&mut self, x: Vertex, s: Option<Spin>) {
        match s {
            Some(s) => self.pin.set(x, s),
            None => self.pin.unset(x),
        }
    }

    fn neighbors(&mut self, x: Vertex, out: &mut Vec<Vertex>) {
        out.extend_from_slice(self.g.neighbors(x));
    }
}

/// A SAW tree viewed as a graph (parent plus children), expanded on demand.
/// Fixed nodes behave as pinned; further pins live in `spins`.
#[derive(Debug)]
pub struct TreeState<'t, 'a> {
    pub tree: &'t mut SawTree<'a>,
    spins: Vec<Option<Spin>>,
}

impl<'t, 'a> TreeState<'t, 'a> {
    pub fn new(tree: &'t mut SawTree<'a>) -> Self {
        TreeState { tree, spins: Vec::new() }
    }

    pub fn pinned_nodes(&self) -> impl Iterator<Item = (NodeId, Spin)> + '_ {
        self.spins.iter().enumerate().filter_map(|(i, s)| s.map(|s| (i, s)))
    }
}

impl SamplerState for TreeState<'_, '_> {
    type Site = NodeId;

    fn spin(&self, x: NodeId) -> Option<Spin> {
        self.tree
            .node(x)
            .fixed_spin()
            .or_else(|| self.spins.get(x).copied().flatten())
    }

    fn set_spin(&mut self, x: NodeId, s: Option<Spin>) {
        if self.spins.len() <= x {
            self.spins.resize(x + 1, None);
        }
        self.spins[x] = s;
    }

    fn neighbors(&mut self, x: NodeId, out: &mut Vec<NodeId>) {
        out.extend(self.tree.node(x).parent);
        out.extend(self.tree.ensure_children(x));
    }
}

struct Frame<S> {
    pending: Vec<S>,
    next: usize,
    occupied_neighbor: bool,
}

/// Draws the spin of `v` from the hard-core Gibbs marginal given the state's
/// pinning, by the recursive single-site sampler: with probability
/// `1/(1+lambda)` answer 0; otherwise sample every unpinned neighbour
/// recursively (each conditioned on the earlier ones) and answer 1 iff none
/// of them is occupied. A pinned-occupied neighbour answers 0 immediately.
///
/// Every invocation, including recursive ones, costs one budget step. On
/// exhaustion the state's pinning is restored and `BudgetExhausted` returned.
/// Neighbours are visited in the state's adjacency order.
pub fn hardcore_sample<S: SamplerState, R: Rng + ?Sized>(
    state: &mut S,
    lambda: f64,
    v: S::Site,
    budget: &mut Budget,
    rng: &mut R,
) -> Result<Spin> {
    if state.spin(v).is_some() {
        return Err(Error::arg("sampled site is pinned"));
    }
    let p_branch = lambda / (1.0 + lambda);
    let mut stack: Vec<Frame<S::Site>> = Vec::new();
    let mut scratch = Vec::new();
    // `call` is the site whose fresh invocation is about to start;
    // `result` is the answer just returned to the frame on top of the stack.
    let mut call = Some(v);
    let mut result: Option<Spin> = None;
    loop {
        if let Some(x) = call.take() {
            if let Err(e) = budget.tick() {
                for f in stack.iter().rev() {
                    for &u in &f.pending[..f.next] {
                        state.set_spin(u, None);
                    }
                }
                return Err(e);
            }
            scratch.clear();
            state.neighbors(x, &mut scratch);
            if scratch.iter().any(|&u| state.spin(u) == Some(1)) {
                result = Some(0);
            } else if rng.gen_bool(p_branch) {
                let pending: Vec<S::Site> = scratch.iter().copied().filter(|&u| state.spin(u).is_none()).collect();
                stack.push(Frame {
                    pending,
                    next: 0,
                    occupied_neighbor: false,
                });
            } else {
                result = Some(0);
            }
        }
        let Some(top) = stack.last_mut() else {
            return Ok(result.expect("top-level answer"));
        };
        if let Some(r) = result.take() {
            // Answer for top.pending[top.next - 1].
            let u = top.pending[top.next - 1];
            state.set_spin(u, Some(r));
            if r == 1 {
                top.occupied_neighbor = true;
            }
        }
        if top.next < top.pending.len() {
            call = Some(top.pending[top.next]);
            top.next += 1;
        } else {
            let done = stack.pop().expect("frame");
            for &u in &done.pending {
                state.set_spin(u, None);
            }
            result = Some(if done.occupied_neighbor { 0 } else { 1 });
            if stack.is_empty() {
                return Ok(result.unwrap());
            }
        }
    }
}

/// Outcome of a draw with retries on fresh streams.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Draw {
    pub spin: Spin,
    pub steps: u64,
    pub retries: u32,
}

/// Runs `hardcore_sample` with a fresh budget of `steps`, retrying on a
/// fresh derived stream after each exhaustion, up to `max_retries` retries.
pub fn hardcore_sample_retrying<S: SamplerState>(
    state: &mut S,
    lambda: f64,
    v: S::Site,
    steps: u64,
    stream: RngStream,
    max_retries: u32,
    label_vertex: usize,
) -> Result<Draw> {
    let mut total = 0;
    for attempt in 0..=max_retries {
        let mut rng = stream.derive("retry", attempt as u64).into_rng();
        let mut budget = Budget::new(steps);
        match hardcore_sample(state, lambda, v, &mut budget, &mut rng) {
            Ok(spin) => {
                return Ok(Draw {
                    spin,
                    steps: total + budget.consumed,
                    retries: attempt,
                });
            }
            Err(Error::BudgetExhausted { consumed }) => total += consumed,
            Err(e) => return Err(e),
        }
    }
    Err(Error::SamplerStuck {
        vertex: label_vertex,
        retries: max_retries,
    })
}

/// Parameters of the dominating branching process: an active instance
/// either spawns `delta` replacements (probability `p`) or dies.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BranchingParams {
    pub delta: usize,
    pub p: f64,
}

impl BranchingParams {
    pub fn new(delta: usize, p: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::arg(format!("need 0 <= p < 1, got {p}")));
        }
        Ok(BranchingParams { delta, p })
    }

    pub fn hardcore(delta: usize, lambda: f64) -> Result<Self> {
        Self::new(delta, lambda / (1.0 + lambda))
    }
}

/// Steps until absorption of `X_{t+1} = X_t + D - 1` (prob `p`) or `X_t - 1`,
/// from `X_0 = 1`, or `None` if still alive after `t_max` steps.
pub fn branching_run<R: Rng + ?Sized>(params: BranchingParams, t_max: u64, rng: &mut R) -> Option<u64> {
    let mut x: u64 = 1;
    for t in 1..=t_max {
        if rng.gen_bool(params.p) {
            x += params.delta as u64 - 1;
        } else {
            x -= 1;
        }
        if x == 0 {
            return Some(t);
        }
    }
    None
}

/// Fraction of `trials` runs still alive after `t` steps.
pub fn branching_tail(params: BranchingParams, t: u64, trials: usize, seed: u64, exec: Execution) -> Result<f64> {
    if trials == 0 {
        return Err(Error::arg("need at least one trial"));
    }
    const CHUNK: usize = 4096;
    let chunks = trials.div_ceil(CHUNK);
    let alive: usize = map_indexed(exec, chunks, |c| {
        let mut rng = RngStream::new(seed, RngStream::stream_for("branching_tail", c as u64)).into_rng();
        let count = CHUNK.min(trials - c * CHUNK);
        (0..count).filter(|_| branching_run(params, t, &mut rng).is_none()).count()
    })
    .into_iter()
    .sum();
    Ok(alive as f64 / trials as f64)
}
