//! The generic distance-`r` lazy marginal sampler for `q`-spin systems.
//!
//! To draw the spin of `v`, first compute for every spin `i` the worst-case
//! conditional probability `p_i` over all configurations of the unpinned
//! part of the sphere at distance `r`. With probability `p_i` answer `i`
//! directly. With the leftover probability `p_0 = 1 - sum p_i`, sample the
//! whole unpinned sphere recursively (each vertex by the same procedure,
//! conditioned on the earlier ones), read off the conditional marginal
//! `mu(i)` given that sphere, and answer from `rho_i = (mu(i) - p_i) / p_0`.

use std::collections::HashMap;
use std::rc::Rc;

use rand::Rng;
use rand::distributions::{Distribution, WeightedIndex};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{Graph, Vertex, ball};
use crate::model::{PartialConfiguration, QSpinParams, Spin, SpinModel};
use crate::oracle::{ConditionalTable, OracleCaps, conditional_table};
use crate::sampler::Budget;

/// Largest number of sphere configurations enumerated for one minimum.
pub const ENUMERATION_CAP: usize = 1 << 20;

/// Per-vertex local data: the ball of radius `r` and the sphere.
struct Neighbourhood {
    ball: Vec<Vertex>,
    sphere: Vec<Vertex>,
}

/// Marginal table at `v` for the current pinning of its ball, plus the
/// worst-case spin probabilities derived from it.
#[derive(Debug)]
struct Local {
    table: ConditionalTable,
    /// `p[i] = min_tau mu(i)`.
    p: Vec<f64>,
    slack: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct LazyStats {
    pub calls: u64,
    pub tables_built: u64,
    pub table_hits: u64,
    pub boundary_splits: u64,
    /// Sum over built tables of entries times region size.
    pub table_cells: u64,
    /// Smallest `rho` entry seen before clamping; `>= -1e-9` in a sound run.
    pub min_rho: f64,
}

/// Sampler with caches that persist across draws on the same graph.
pub struct LazySampler<'a> {
    g: &'a Graph,
    m: QSpinParams,
    r: usize,
    caps: OracleCaps,
    shells: HashMap<Vertex, Rc<Neighbourhood>>,
    tables: HashMap<(Vertex, Vec<Option<Spin>>), Rc<Local>>,
    pub stats: LazyStats,
}

struct Frame {
    v: Vertex,
    local: Rc<Local>,
    next: usize,
}

impl<'a> LazySampler<'a> {
    pub fn new(g: &'a Graph, model: &SpinModel, r: usize, caps: OracleCaps) -> Result<Self> {
        if r == 0 {
            return Err(Error::arg("sampler radius must be at least 1"));
        }
        Ok(LazySampler {
            g,
            m: model.to_q_spin(),
            r,
            caps,
            shells: HashMap::new(),
            tables: HashMap::new(),
            stats: LazyStats {
                min_rho: f64::INFINITY,
                ..LazyStats::default()
            },
        })
    }

    pub fn radius(&self) -> usize {
        self.r
    }

    fn shell(&mut self, v: Vertex) -> Result<Rc<Neighbourhood>> {
        if let Some(s) = self.shells.get(&v) {
            return Ok(s.clone());
        }
        let shell = ball(self.g, v, self.r)?;
        let nb = Rc::new(Neighbourhood {
            ball: shell.ball_vertices().collect(),
            sphere: shell.sphere,
        });
        self.shells.insert(v, nb.clone());
        Ok(nb)
    }

    fn local(&mut self, v: Vertex, pin: &PartialConfiguration) -> Result<Rc<Local>> {
        let nb = self.shell(v)?;
        let key = (v, nb.ball.iter().map(|&u| pin.get(u)).collect::<Vec<_>>());
        if let Some(l) = self.tables.get(&key) {
            self.stats.table_hits += 1;
            return Ok(l.clone());
        }
        let free: Vec<Vertex> = nb.sphere.iter().copied().filter(|&u| u != v && !pin.is_pinned(u)).collect();
        let configs = (self.m.q as f64).powi(free.len() as i32);
        if configs > ENUMERATION_CAP as f64 {
            return Err(Error::OracleTooLarge {
                what: "sphere configurations",
                size: configs as usize,
                cap: ENUMERATION_CAP,
            });
        }
        let table = conditional_table(self.g, &self.m, pin, v, &nb.ball, &free, self.caps)?;
        let mut p = vec![f64::INFINITY; self.m.q];
        for entry in table.entries.iter().flatten() {
            for (pi, &mu) in p.iter_mut().zip(entry) {
                *pi = pi.min(mu);
            }
        }
        if p[0] == f64::INFINITY {
            return Err(Error::InfeasibleConditioning);
        }
        let slack = (1.0 - p.iter().sum::<f64>()).max(0.0);
        self.stats.tables_built += 1;
        self.stats.table_cells += (table.entries.len() * nb.ball.len()) as u64;
        let local = Rc::new(Local { table, p, slack });
        self.tables.insert(key, local.clone());
        Ok(local)
    }

    /// Draws the spin of unpinned `v` given `pin`. The pinning is restored
    /// before returning, also on error.
    pub fn sample<R: Rng + ?Sized>(
        &mut self,
        pin: &mut PartialConfiguration,
        v: Vertex,
        budget: &mut Budget,
        rng: &mut R,
    ) -> Result<Spin> {
        self.g.check_vertex(v)?;
        if pin.is_pinned(v) {
            return Err(Error::arg(format!("vertex {v} is pinned")));
        }
        let mut stack: Vec<Frame> = Vec::new();
        let mut call = Some(v);
        let mut result: Option<Spin> = None;
        let out = (|| -> Result<Spin> {
            loop {
                if let Some(x) = call.take() {
                    budget.tick()?;
                    self.stats.calls += 1;
                    let local = self.local(x, pin)?;
                    // X in {slack, 0, .., q-1}.
                    let u: f64 = rng.gen();
                    let mut acc = 0.0;
                    let mut direct = None;
                    for (i, &pi) in local.p.iter().enumerate() {
                        acc += pi;
                        if u < acc {
                            direct = Some(i as Spin);
                            break;
                        }
                    }
                    match direct {
                        Some(s) => result = Some(s),
                        None if local.slack <= 0.0 || local.table.free_boundary.is_empty() => {
                            // Rounding put u past the direct mass; all
                            // boundary conditions agree, so p is the marginal.
                            result = Some(draw(&local.p, rng)?);
                        }
                        None => {
                            self.stats.boundary_splits += 1;
                            stack.push(Frame { v: x, local, next: 0 });
                        }
                    }
                }
                let Some(top) = stack.last_mut() else {
                    return Ok(result.expect("top-level answer"));
                };
                if let Some(r) = result.take() {
                    let w = top.local.table.free_boundary[top.next - 1];
                    pin.set(w, r);
                }
                if top.next < top.local.table.free_boundary.len() {
                    call = Some(top.local.table.free_boundary[top.next]);
                    top.next += 1;
                    continue;
                }
                let done = stack.pop().expect("frame");
                let index = done.local.table.index_of(|u| pin.get(u).expect("sampled boundary"));
                for &w in &done.local.table.free_boundary {
                    pin.unset(w);
                }
                let mu = done.local.table.entries[index].as_ref().ok_or_else(|| {
                    Error::Internal(format!("sampled sphere around {} has zero weight", done.v))
                })?;
                let mut rho: Vec<f64> = mu
                    .iter()
                    .zip(&done.local.p)
                    .map(|(m, p)| (m - p) / done.local.slack)
                    .collect();
                let low = rho.iter().cloned().fold(f64::INFINITY, f64::min);
                self.stats.min_rho = self.stats.min_rho.min(low);
                if low < -1e-9 {
                    return Err(Error::Internal(format!("negative split probability {low} at {}", done.v)));
                }
                rho.iter_mut().for_each(|x| *x = x.max(0.0));
                result = Some(draw(&rho, rng)?);
                if stack.is_empty() {
                    return Ok(result.unwrap());
                }
            }
        })();
        if out.is_err() {
            for f in &stack {
                for &w in &f.local.table.free_boundary[..f.next] {
                    pin.unset(w);
                }
            }
        }
        out
    }
}

fn draw<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Result<Spin> {
    let dist = WeightedIndex::new(weights).map_err(|e| Error::Internal(format!("bad distribution {weights:?}: {e}")))?;
    Ok(dist.sample(rng) as Spin)
}

/// One-shot form of [`LazySampler::sample`].
pub fn lazy_sample<R: Rng + ?Sized>(
    model: &SpinModel,
    g: &Graph,
    pin: &mut PartialConfiguration,
    v: Vertex,
    r: usize,
    budget: &mut Budget,
    rng: &mut R,
) -> Result<Spin> {
    LazySampler::new(g, model, r, OracleCaps::default())?.sample(pin, v, budget, rng)
}
