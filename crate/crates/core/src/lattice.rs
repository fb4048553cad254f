//! Counting on graphs of polynomial growth: exact boundary tables on thin
//! spheres, a table-lookup marginal estimator fed by the lazy sampler, a
//! greedy pinning whose conditional marginals stay large, and the product
//! estimator built from them.

use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::{BOOSTED_ACCURACY, CountEstimate, boost_copies};
use crate::graph::{Graph, Vertex, ball, find_thin_sphere};
use crate::lazy::{ENUMERATION_CAP, LazySampler, LazyStats};
use crate::model::{PartialConfiguration, QSpinParams, Spin, SpinModel, weight};
use crate::oracle::{ConditionalTable, OracleCaps, conditional_table, sweep_fits};
use crate::par::{Execution, map_indexed};
use crate::rng::RngStream;
use crate::sampler::Budget;
use crate::stats::log_mean_exp;

/// Growth and decay constants: `|B_v(l)| <= c0 l^d` and influence at
/// distance `l` at most `c r^(-l)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GrowthParams {
    pub c0: f64,
    pub d: u32,
    pub c: f64,
    pub r: f64,
}

impl GrowthParams {
    pub fn new(c0: f64, d: u32, c: f64, r: f64) -> Result<Self> {
        if !(c0 > 0.0) || d < 1 || !(c > 0.0) || !(r > 1.0) {
            return Err(Error::arg(format!("need c0 > 0, d >= 1, C > 0, r > 1; got c0={c0} d={d} C={c} r={r}")));
        }
        Ok(GrowthParams { c0, d, c, r })
    }

    /// Quadratic growth with the square-lattice constant `c0 = 5`.
    pub fn grid(c: f64, r: f64) -> Result<Self> {
        Self::new(5.0, 2, c, r)
    }

    fn check_graph(&self, g: &Graph) -> Result<()> {
        if g.max_degree() as f64 > self.c0 {
            return Err(Error::arg(format!(
                "max degree {} exceeds growth constant c0 = {}",
                g.max_degree(),
                self.c0
            )));
        }
        Ok(())
    }
}

/// Exact conditional marginals of `center` inside the ball of radius
/// `radius`, one entry per configuration of the unpinned sphere.
#[derive(Clone, Debug, Serialize)]
pub struct BoundaryTable {
    pub radius: usize,
    pub ball: Vec<Vertex>,
    pub table: ConditionalTable,
}

impl BoundaryTable {
    pub fn center(&self) -> Vertex {
        self.table.center
    }

    pub fn free_boundary(&self) -> &[Vertex] {
        &self.table.free_boundary
    }

    pub fn len(&self) -> usize {
        self.table.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.entries.is_empty()
    }

    /// Entry for the boundary spins read from `pin`, `None` if infeasible.
    /// Every free boundary vertex must be pinned.
    pub fn lookup(&self, pin: &PartialConfiguration) -> Result<Option<&[f64]>> {
        for &w in self.free_boundary() {
            if !pin.is_pinned(w) {
                return Err(Error::arg(format!("boundary vertex {w} is not pinned")));
            }
        }
        let i = self.table.index_of(|u| pin.get(u).expect("checked"));
        Ok(self.table.entries[i].as_deref())
    }

    /// Work proxy: entries times ball size.
    pub fn cells(&self) -> u64 {
        (self.len() * self.ball.len()) as u64
    }
}

/// Radius and sphere used for a table at `v`: a thin sphere for quadratic
/// growth, the plain distance-`l` sphere in higher dimension.
fn table_sphere(g: &Graph, v: Vertex, l: usize, gp: &GrowthParams) -> Result<(usize, Vec<Vertex>)> {
    if gp.d == 2 {
        find_thin_sphere(g, v, l, gp.c0)
    } else {
        Ok((l, ball(g, v, l)?.sphere))
    }
}

pub fn build_boundary_table(
    g: &Graph,
    model: &SpinModel,
    pin: &PartialConfiguration,
    v: Vertex,
    l: usize,
    gp: &GrowthParams,
    caps: OracleCaps,
) -> Result<BoundaryTable> {
    build_table_q(g, &model.to_q_spin(), pin, v, l, gp, caps)
}

fn build_table_q(
    g: &Graph,
    m: &QSpinParams,
    pin: &PartialConfiguration,
    v: Vertex,
    l: usize,
    gp: &GrowthParams,
    caps: OracleCaps,
) -> Result<BoundaryTable> {
    g.check_vertex(v)?;
    if pin.len() != g.n() {
        return Err(Error::arg("pinning length differs from vertex count"));
    }
    if pin.is_pinned(v) {
        return Err(Error::arg(format!("vertex {v} is pinned")));
    }
    let (radius, sphere) = table_sphere(g, v, l, gp)?;
    let free: Vec<Vertex> = sphere.into_iter().filter(|&u| !pin.is_pinned(u)).collect();
    let size = (m.q as f64).powi(free.len() as i32);
    if size > ENUMERATION_CAP as f64 {
        return Err(Error::OracleTooLarge {
            what: "boundary table entries (try a smaller depth)",
            size: size as usize,
            cap: ENUMERATION_CAP,
        });
    }
    let region: Vec<Vertex> = ball(g, v, radius)?.ball_vertices().collect();
    let table = conditional_table(g, m, pin, v, &region, &free, caps)?;
    Ok(BoundaryTable {
        radius,
        ball: region,
        table,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LatticeMarginalEstimate {
    pub value: f64,
    pub radius: usize,
    pub boundary_size: usize,
    pub draws: usize,
    pub table_entries: usize,
    pub steps_consumed: u64,
    pub retries: u32,
}

/// Boundary draws per estimate: `ceil(n C^2 r^(-l'))`, at least one.
pub fn lookup_draws(n: usize, gp: &GrowthParams, radius: usize) -> usize {
    let m = n as f64 * gp.c * gp.c * gp.r.powi(-(radius as i32));
    (m.ceil() as usize).max(1)
}

/// Lazy-sampler settings shared by the lattice estimator and counter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LazySettings {
    pub radius: usize,
    /// Step budget of one draw before a retry on a fresh stream.
    pub steps: u64,
    pub max_retries: u32,
    pub caps: OracleCaps,
}

impl Default for LazySettings {
    fn default() -> Self {
        LazySettings {
            radius: 2,
            steps: 1_000_000,
            max_retries: 16,
            caps: OracleCaps::default(),
        }
    }
}

fn lazy_retrying(
    sampler: &mut LazySampler<'_>,
    pin: &mut PartialConfiguration,
    w: Vertex,
    lazy: &LazySettings,
    stream: RngStream,
) -> Result<(Spin, u32)> {
    for attempt in 0..=lazy.max_retries {
        let mut rng = stream.derive("retry", attempt as u64).into_rng();
        match sampler.sample(pin, w, &mut Budget::new(lazy.steps), &mut rng) {
            Ok(s) => return Ok((s, attempt)),
            Err(Error::BudgetExhausted { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Err(Error::SamplerStuck {
        vertex: w,
        retries: lazy.max_retries,
    })
}

/// Draws the free boundary of `table` conditionally vertex by vertex and
/// returns the table entry for spin `k`. `pin` is left unchanged.
fn one_lookup(
    table: &BoundaryTable,
    sampler: &mut LazySampler<'_>,
    pin: &mut PartialConfiguration,
    k: Spin,
    lazy: &LazySettings,
    stream: RngStream,
) -> Result<(f64, u32)> {
    let mut retries = 0;
    let mut set = 0;
    let res = (|| {
        for (j, &w) in table.free_boundary().iter().enumerate() {
            let (s, r) = lazy_retrying(sampler, pin, w, lazy, stream.derive("boundary", j as u64))?;
            retries += r;
            pin.set(w, s);
            set += 1;
        }
        let entry = table
            .lookup(pin)?
            .ok_or_else(|| Error::Internal(format!("sampled boundary around {} has zero weight", table.center())))?;
        Ok(entry[k as usize])
    })();
    for &w in &table.free_boundary()[..set] {
        pin.unset(w);
    }
    res.map(|v| (v, retries))
}

/// Unbiased estimate of `mu_v(k)` under `pin`: mean of `m` table lookups at
/// boundary configurations drawn from the Gibbs distribution.
#[allow(clippy::too_many_arguments)]
pub fn lattice_marginal_estimator(
    g: &Graph,
    model: &SpinModel,
    pin: &PartialConfiguration,
    v: Vertex,
    k: Spin,
    l: usize,
    gp: &GrowthParams,
    lazy: &LazySettings,
    stream: RngStream,
) -> Result<LatticeMarginalEstimate> {
    gp.check_graph(g)?;
    let m = model.to_q_spin();
    if k as usize >= m.q {
        return Err(Error::arg(format!("spin {k} out of range for q = {}", m.q)));
    }
    let table = build_table_q(g, &m, pin, v, l, gp, lazy.caps)?;
    let draws = lookup_draws(g.n(), gp, table.radius);
    let mut sampler = LazySampler::new(g, model, lazy.radius, lazy.caps)?;
    let mut work = pin.clone();
    let mut sum = 0.0;
    let mut retries = 0;
    for j in 0..draws {
        let (z, r) = one_lookup(&table, &mut sampler, &mut work, k, lazy, stream.derive("draw", j as u64))?;
        sum += z;
        retries += r;
    }
    Ok(LatticeMarginalEstimate {
        value: sum / draws as f64,
        radius: table.radius,
        boundary_size: table.free_boundary().len(),
        draws,
        table_entries: table.len(),
        steps_consumed: sampler.stats.calls,
        retries,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdaptivePinning {
    pub order: Vec<Vertex>,
    pub sigma: Vec<Spin>,
    /// Marginal of the chosen spin computed with the fixed far boundary.
    pub computed: Vec<f64>,
    /// `computed - C r^(-t)`, a lower bound on the true conditional marginal.
    pub guaranteed: Vec<f64>,
    /// Radius of the fixed boundary.
    pub t: usize,
}

/// `t = ceil(ln(2 q C) / ln r)`, at least 1.
pub fn pinning_radius(q: usize, gp: &GrowthParams) -> usize {
    let t = (2.0 * q as f64 * gp.c).ln() / gp.r.ln();
    (t.ceil() as i64).max(1) as usize
}

/// Greedy configuration: each vertex in `order` takes the spin with the
/// largest conditional marginal given the earlier ones and a fixed spin-0
/// boundary at distance `t` (or the first feasible boundary by table index).
pub fn adaptive_pinning(
    g: &Graph,
    model: &SpinModel,
    gp: &GrowthParams,
    order: &[Vertex],
    caps: OracleCaps,
) -> Result<AdaptivePinning> {
    let n = g.n();
    let mut seen = vec![false; n];
    if order.len() != n || !order.iter().all(|&v| v < n && !std::mem::replace(&mut seen[v], true)) {
        return Err(Error::arg("order must be a permutation of the vertices"));
    }
    let m = model.to_q_spin();
    let t = pinning_radius(m.q, gp);
    let slack = gp.c * gp.r.powi(-(t as i32));
    let mut pin = PartialConfiguration::empty(n);
    let mut out = AdaptivePinning {
        order: order.to_vec(),
        sigma: vec![0; n],
        computed: vec![0.0; n],
        guaranteed: vec![0.0; n],
        t,
    };
    for &v in order {
        let shell = ball(g, v, t)?;
        let region: Vec<Vertex> = shell.ball_vertices().collect();
        let free: Vec<Vertex> = shell.sphere.iter().copied().filter(|&u| !pin.is_pinned(u)).collect();
        let mut trial = pin.clone();
        for &u in &free {
            trial.set(u, 0);
        }
        let direct = conditional_table(g, &m, &trial, v, &region, &[], caps)?;
        let mu = match direct.entries.into_iter().next().flatten() {
            Some(mu) => mu,
            None => {
                let all = conditional_table(g, &m, &pin, v, &region, &free, caps)?;
                all.entries.into_iter().flatten().next().ok_or(Error::InfeasibleConditioning)?
            }
        };
        let mut best = 0;
        for (i, &x) in mu.iter().enumerate() {
            if x > mu[best] {
                best = i;
            }
        }
        out.sigma[v] = best as Spin;
        out.computed[v] = mu[best];
        out.guaranteed[v] = mu[best] - slack;
        pin.set(v, best as Spin);
    }
    Ok(out)
}

/// `ceil(0.99 (ln n)^(1/d) / (2 c0 ln q))`, at least 1.
pub fn poly_growth_depth(n: usize, gp: &GrowthParams, q: usize) -> usize {
    let n = n.max(2) as f64;
    let l = 0.99 * n.ln().powf(1.0 / gp.d as f64) / (2.0 * gp.c0 * (q.max(2) as f64).ln());
    (l.ceil() as i64).max(1) as usize
}

/// `N = ceil(10 e^(4 q^2) / eps0^2)` with `eps0 = eps/2`.
pub fn lattice_sample_count(q: usize, eps: f64) -> f64 {
    let eps0 = eps / 2.0;
    (10.0 * (4.0 * (q * q) as f64).exp() / (eps0 * eps0)).ceil()
}

/// How the table depth is chosen per vertex.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum LatticeDepth {
    Fixed(usize),
    /// Per vertex, the depth minimizing table work plus expected lookup
    /// work; grows like `log n`.
    Balanced,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LatticeConfig {
    pub depth: LatticeDepth,
    pub lazy: LazySettings,
    pub seed: u64,
    pub samples_override: Option<usize>,
    pub step_cap: Option<u64>,
    pub execution: Execution,
    /// Cost of one lazy-sampler call relative to one table cell, used by
    /// [`LatticeDepth::Balanced`].
    pub call_weight: f64,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        LatticeConfig {
            depth: LatticeDepth::Balanced,
            lazy: LazySettings::default(),
            seed: 0,
            samples_override: None,
            step_cap: None,
            execution: Execution::default(),
            call_weight: 256.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LatticeCountEstimate {
    #[serde(flatten)]
    pub count: CountEstimate,
    pub log_weight: f64,
    pub pinning_radius: usize,
    pub min_guaranteed_mass: f64,
    pub radius_min: usize,
    pub radius_max: usize,
    pub radius_mean: f64,
    pub max_free_boundary: usize,
    pub table_entries: u64,
    pub draws_per_sample: u64,
    pub lazy: LazyStats,
    /// Vertices whose factor fell back to the pinning-time marginal after
    /// the step cap was hit.
    pub fallback_vertices: usize,
    pub warnings: Vec<String>,
}

/// Depth choice for `v` given the current pinning.
fn choose_depth(
    g: &Graph,
    m: &QSpinParams,
    pin: &PartialConfiguration,
    v: Vertex,
    gp: &GrowthParams,
    samples: usize,
    depth: LatticeDepth,
    call_weight: f64,
    caps: OracleCaps,
) -> Result<usize> {
    let n = g.n();
    match depth {
        LatticeDepth::Fixed(l) if gp.d == 2 && l < 2 => Err(Error::arg("quadratic-growth depth must be at least 2")),
        LatticeDepth::Fixed(l) => Ok(l),
        LatticeDepth::Balanced if gp.d != 2 => Ok(poly_growth_depth(n, gp, m.q)),
        LatticeDepth::Balanced => {
            let mut best: Option<(f64, usize)> = None;
            for l in 2.. {
                let shell = ball(g, v, l)?;
                let (radius, sphere) = find_thin_sphere(g, v, l, gp.c0)?;
                let free = sphere.iter().filter(|&&u| !pin.is_pinned(u)).count();
                let entries = (m.q as f64).powi(free as i32);
                if entries > ENUMERATION_CAP as f64 {
                    break;
                }
                let region: Vec<Vertex> = shell.ball.iter().filter(|&&(_, d)| d <= radius).map(|&(u, _)| u).collect();
                let mut keep = vec![v];
                keep.extend(sphere.iter().copied().filter(|&u| !pin.is_pinned(u)));
                if !sweep_fits(g, m.q, pin, &region, &keep, caps) {
                    break;
                }
                let region = region.len() as f64;
                let lookups = samples as f64 * lookup_draws(n, gp, radius) as f64 * free as f64 * call_weight;
                let cost = entries * region + lookups;
                if best.is_none_or(|(c, _)| cost < c) {
                    best = Some((cost, l));
                }
                // The whole component fits: deeper tables change nothing.
                if shell.sphere_at(l).is_empty() {
                    break;
                }
            }
            best.map(|(_, l)| l).ok_or(Error::OracleTooLarge {
                what: "boundary table entries at depth 2",
                size: usize::MAX,
                cap: ENUMERATION_CAP,
            })
        }
    }
}

struct VertexRun {
    logs: Vec<f64>,
    radius: usize,
    free: usize,
    entries: u64,
    work: u64,
    draws: u64,
    retries: u64,
    lazy: LazyStats,
}

fn add_stats(a: &mut LazyStats, b: &LazyStats) {
    a.calls += b.calls;
    a.tables_built += b.tables_built;
    a.table_hits += b.table_hits;
    a.boundary_splits += b.boundary_splits;
    a.table_cells += b.table_cells;
    a.min_rho = a.min_rho.min(b.min_rho);
}

/// Vertices per chunk between step-cap checks.
const VERTEX_CHUNK: usize = 64;

/// Randomized approximation of `ln Z` on a graph of polynomial growth.
///
/// On `t = ceil(2/eps)` disjoint copies `G'`, fixes a greedy pinning
/// `sigma`, estimates `mu(sigma)` as the mean over `N` samples of products
/// of per-vertex table-lookup estimates, and returns
/// `(ln w(sigma) - ln X~) / t`.
pub fn fpras_lattice(
    g: &Graph,
    model: &SpinModel,
    eps: f64,
    gp: &GrowthParams,
    cfg: &LatticeConfig,
) -> Result<LatticeCountEstimate> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::arg(format!("need 0 < eps < 1, got {eps}")));
    }
    gp.check_graph(g)?;
    let start = Instant::now();
    let m = model.to_q_spin();
    let copies = boost_copies(eps);
    let big = g.disjoint_copies(copies);
    let n = big.n();
    let n_samples = match cfg.samples_override {
        Some(0) => return Err(Error::arg("need at least one sample")),
        Some(s) => s,
        None => {
            let s = lattice_sample_count(m.q, BOOSTED_ACCURACY);
            if s > 1e7 {
                return Err(Error::arg(format!(
                    "the analysis asks for {s:.3e} samples; pass a sample override"
                )));
            }
            s as usize
        }
    };
    let mut warnings = Vec::new();
    let sphere_max = (0..n)
        .map(|v| ball(&big, v, cfg.lazy.radius).map(|s| s.sphere.len()))
        .try_fold(0, |a, s| s.map(|s| a.max(s)))?;
    let decay = gp.c * gp.r.powi(-(cfg.lazy.radius as i32));
    let lhs = 2.0 * std::f64::consts::E * m.q as f64 * (1.0 + sphere_max as f64) * decay;
    if lhs > 1.0 {
        warnings.push(format!(
            "lazy sampler termination condition 2eq(1+s(r))f(r) <= 1 fails with f from (C, r): {lhs:.3}"
        ));
    }

    let order: Vec<Vertex> = (0..n).collect();
    let pinning = adaptive_pinning(&big, model, gp, &order, cfg.lazy.caps)?;
    let log_weight = weight(&big, model, &PartialConfiguration::full(&pinning.sigma))?.ln();
    if !log_weight.is_finite() {
        return Err(Error::InfeasibleConditioning);
    }
    let min_guaranteed = pinning.guaranteed.iter().cloned().fold(f64::INFINITY, f64::min);
    let half_q = 1.0 / (2.0 * m.q as f64);
    if min_guaranteed < half_q {
        warnings.push(format!(
            "certified pinning mass {min_guaranteed:.4} is below 1/(2q) = {half_q:.4}; (C, r) may be too optimistic"
        ));
    }

    let run_vertex = |i: usize| -> Result<VertexRun> {
        let v = order[i];
        let pin = PartialConfiguration::from_pairs(n, &order[..i].iter().map(|&u| (u, pinning.sigma[u])).collect::<Vec<_>>());
        let l = choose_depth(&big, &m, &pin, v, gp, n_samples, cfg.depth, cfg.call_weight, cfg.lazy.caps)?;
        let table = build_table_q(&big, &m, &pin, v, l, gp, cfg.lazy.caps)?;
        let draws = lookup_draws(n, gp, table.radius);
        let mut sampler = LazySampler::new(&big, model, cfg.lazy.radius, cfg.lazy.caps)?;
        let mut work_pin = pin.clone();
        let stream = RngStream::new(cfg.seed, RngStream::stream_for("fpras_lattice", v as u64));
        let k = pinning.sigma[v];
        let mut logs = Vec::with_capacity(n_samples);
        let mut retries = 0;
        for s in 0..n_samples {
            let sample_stream = stream.derive("sample", s as u64);
            let mut sum = 0.0;
            for j in 0..draws {
                let (z, r) = one_lookup(&table, &mut sampler, &mut work_pin, k, &cfg.lazy, sample_stream.derive("draw", j as u64))?;
                sum += z;
                retries += r as u64;
            }
            let z = sum / draws as f64;
            if z <= 0.0 {
                return Err(Error::Internal(format!("zero marginal estimate at vertex {v}")));
            }
            logs.push(z.ln());
        }
        let stats = sampler.stats;
        Ok(VertexRun {
            logs,
            radius: table.radius,
            free: table.free_boundary().len(),
            entries: table.len() as u64,
            work: table.cells() + stats.calls + stats.table_cells,
            draws: draws as u64,
            retries,
            lazy: stats,
        })
    };

    let mut log_x = vec![0.0; n_samples];
    let mut lazy = LazyStats {
        min_rho: f64::INFINITY,
        ..LazyStats::default()
    };
    let (mut work, mut retries, mut entries, mut draws) = (0u64, 0u64, 0u64, 0u64);
    let (mut rmin, mut rmax, mut rsum, mut fmax) = (usize::MAX, 0usize, 0usize, 0usize);
    let mut done = 0;
    let mut truncated = false;
    while done < n {
        let size = VERTEX_CHUNK.min(n - done);
        for r in map_indexed(cfg.execution, size, |i| run_vertex(done + i)) {
            let r = r?;
            for (x, l) in log_x.iter_mut().zip(&r.logs) {
                *x += l;
            }
            work += r.work;
            retries += r.retries;
            entries += r.entries;
            draws += r.draws;
            rmin = rmin.min(r.radius);
            rmax = rmax.max(r.radius);
            rsum += r.radius;
            fmax = fmax.max(r.free);
            add_stats(&mut lazy, &r.lazy);
        }
        done += size;
        if cfg.step_cap.is_some_and(|cap| work > cap) && done < n {
            truncated = true;
            break;
        }
    }
    // After a cap the remaining factors use the pinning-time marginals,
    // which are within C r^(-t) of the truth.
    let fallback = n - done;
    let tail: f64 = order[done..].iter().map(|&v| pinning.computed[v].ln()).sum();
    for x in &mut log_x {
        *x += tail;
    }
    let log_mu = log_mean_exp(&log_x);
    let t = copies as f64;
    Ok(LatticeCountEstimate {
        count: CountEstimate {
            log_z: (log_weight - log_mu) / t,
            n_samples,
            eps,
            copies,
            depth: rmax,
            truncated,
            work,
            retries,
            wall_time_secs: start.elapsed().as_secs_f64(),
            seed: cfg.seed,
        },
        log_weight,
        pinning_radius: pinning.t,
        min_guaranteed_mass: min_guaranteed,
        radius_min: rmin,
        radius_max: rmax,
        radius_mean: rsum as f64 / done.max(1) as f64,
        max_free_boundary: fmax,
        table_entries: entries,
        draws_per_sample: draws,
        lazy,
        fallback_vertices: fallback,
        warnings,
    })
}
