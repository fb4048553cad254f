//! Hard-core partition function estimation by self-reduction over
//! randomized SAW-tree marginal estimates, plus the deterministic truncated
//! Weitz baseline.

use std::f64::consts::E;
use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{Graph, Vertex};
use crate::model::{PartialConfiguration, TwoSpinParams};
use crate::par::{Execution, map_indexed};
use crate::rng::RngStream;
use crate::sampler::{TreeState, budget_for, hardcore_sample_retrying};
use crate::saw::SawTree;
use crate::stats::log_mean_exp;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HardcoreEstimatorConfig {
    /// Decay exponent: SSM rate `C * D^(-k l)`.
    pub k: f64,
    /// SSM prefactor.
    pub c: f64,
    /// Failure budget for a standalone marginal estimate. The counting
    /// pipeline uses `1/(n' N)` instead.
    pub delta: f64,
    pub depth_override: Option<usize>,
    pub seed: u64,
    /// Fresh-stream retries per boundary vertex before `SamplerStuck`.
    pub max_retries: u32,
    /// Replaces the analysis-derived sample count `N`.
    pub samples_override: Option<usize>,
    /// Replaces the analysis-derived sampler step budget.
    pub budget_override: Option<u64>,
    /// Stop after this many sampler steps plus tree nodes and report a
    /// truncated estimate.
    pub step_cap: Option<u64>,
    pub execution: Execution,
}

impl Default for HardcoreEstimatorConfig {
    fn default() -> Self {
        HardcoreEstimatorConfig {
            k: 1.0,
            c: 1.0,
            delta: 0.01,
            depth_override: None,
            seed: 0,
            max_retries: 16,
            samples_override: None,
            budget_override: None,
            step_cap: None,
            execution: Execution::default(),
        }
    }
}

impl HardcoreEstimatorConfig {
    fn validate(&self) -> Result<()> {
        if !(self.k > 0.0 && self.c > 0.0) {
            return Err(Error::arg(format!("need k, C > 0, got k={} C={}", self.k, self.c)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::arg(format!("need 0 < delta < 1, got {}", self.delta)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MarginalEstimate {
    pub value: f64,
    pub depth: usize,
    pub boundary_size: usize,
    pub tree_nodes: usize,
    pub steps_consumed: u64,
    pub retries: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CountEstimate {
    pub log_z: f64,
    pub n_samples: usize,
    pub eps: f64,
    pub copies: usize,
    pub depth: usize,
    pub truncated: bool,
    /// Sampler steps plus tree nodes (or table work) summed over all samples.
    pub work: u64,
    pub retries: u64,
    pub wall_time_secs: f64,
    pub seed: u64,
}

/// `l = ceil((ln n / 2 - ln C) / (k ln D))`, at least 1.
pub fn truncation_depth(n: usize, delta: usize, k: f64, c: f64) -> Result<usize> {
    if n < 2 || delta < 2 || !(k > 0.0) || !(c > 0.0) {
        return Err(Error::arg(format!("need n, D >= 2 and k, C > 0, got n={n} D={delta} k={k} C={c}")));
    }
    let l = ((n as f64).ln() / 2.0 - c.ln()) / (k * (delta as f64).ln());
    Ok((l.ceil() as i64).max(1) as usize)
}

/// Depth for which the truncation error `C D^(-k l)` is at most `1/n`.
pub fn weitz_depth(n: usize, delta: usize, k: f64, c: f64) -> Result<usize> {
    if n < 2 || delta < 2 || !(k > 0.0) || !(c > 0.0) {
        return Err(Error::arg(format!("need n, D >= 2 and k, C > 0, got n={n} D={delta} k={k} C={c}")));
    }
    let l = ((n as f64).ln() + c.ln()) / (k * (delta as f64).ln());
    Ok((l.ceil() as i64).max(1) as usize)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegimeReport {
    pub delta: usize,
    pub lambda: f64,
    pub k: f64,
    /// `1 / (D^k (D - 1))`.
    pub decay_bound: f64,
    pub decay_regime: bool,
    /// `1 / (D - 1)`.
    pub sampler_bound: f64,
    pub sampler_regime: bool,
    /// `(D-1)^(D-1) / (D-2)^D`.
    pub lambda_c: f64,
    pub uniqueness: bool,
    pub warnings: Vec<String>,
}

/// Which parameter conditions hold. Never fails; callers decide.
pub fn check_regime(delta: usize, lambda: f64, k: f64) -> RegimeReport {
    let d = delta as f64;
    let sampler_bound = if delta <= 1 { f64::INFINITY } else { 1.0 / (d - 1.0) };
    let decay_bound = if delta <= 1 { f64::INFINITY } else { 1.0 / (d.powf(k) * (d - 1.0)) };
    let lambda_c = if delta <= 2 {
        f64::INFINITY
    } else {
        (d - 1.0).powf(d - 1.0) / (d - 2.0).powf(d)
    };
    let mut r = RegimeReport {
        delta,
        lambda,
        k,
        decay_bound,
        decay_regime: lambda <= decay_bound,
        sampler_bound,
        sampler_regime: lambda < sampler_bound,
        lambda_c,
        uniqueness: lambda < lambda_c,
        warnings: Vec::new(),
    };
    if !r.decay_regime {
        r.warnings.push(format!(
            "lambda = {lambda} exceeds 1/(D^k (D-1)) = {decay_bound:.6}; the decay rate D^(-k l) is not guaranteed"
        ));
    }
    if !r.sampler_regime {
        r.warnings.push(format!(
            "lambda = {lambda} >= 1/(D-1) = {sampler_bound:.6}; the boundary sampler has no termination bound"
        ));
    }
    if !r.uniqueness {
        r.warnings.push(format!("lambda = {lambda} >= lambda_c(D) = {lambda_c:.6}"));
    }
    r
}

/// One draw of the randomized marginal estimate `p~` of `mu_v(0)` in `g`
/// with `pin` applied: sample the free depth-`l` nodes of the SAW tree one
/// by one from the tree's Gibbs distribution, then evaluate the recursion
/// under that boundary.
#[allow(clippy::too_many_arguments)]
pub fn marginal_zero_draw(
    g: &Graph,
    pin: &PartialConfiguration,
    lambda: f64,
    v: Vertex,
    l: usize,
    failure: f64,
    budget_override: Option<u64>,
    max_retries: u32,
    stream: RngStream,
) -> Result<MarginalEstimate> {
    let p = TwoSpinParams::hardcore(lambda)?;
    let mut tree = SawTree::new(g, Some(pin), v)?;
    tree.expand_to(l)?;
    let boundary = tree.free_at_depth(l);
    let steps = match budget_override {
        Some(b) => b,
        None if boundary.is_empty() => 1,
        None => budget_for(g.max_degree().max(2), lambda, failure / (8.0 * boundary.len() as f64))?,
    };
    let mut consumed = 0;
    let mut retries = 0;
    let mut state = TreeState::new(&mut tree);
    for (j, &b) in boundary.iter().enumerate() {
        let draw = hardcore_sample_retrying(&mut state, lambda, b, steps, stream.derive("boundary", j as u64), max_retries, v)?;
        consumed += draw.steps;
        retries += draw.retries;
        crate::sampler::SamplerState::set_spin(&mut state, b, Some(draw.spin));
    }
    let mut assign = vec![None; state.tree.len()];
    for (id, s) in state.pinned_nodes() {
        assign[id] = Some(s);
    }
    drop(state);
    let value = tree.marginal_zero(&p, l, |id| assign[id])?;
    Ok(MarginalEstimate {
        value,
        depth: l,
        boundary_size: boundary.len(),
        tree_nodes: tree.len(),
        steps_consumed: consumed,
        retries,
    })
}

/// Randomized estimate of `mu_v(0)` with depth from [`truncation_depth`]
/// (or the override) and failure budget `cfg.delta`.
pub fn estimate_marginal_zero(
    g: &Graph,
    lambda: f64,
    v: Vertex,
    cfg: &HardcoreEstimatorConfig,
) -> Result<MarginalEstimate> {
    cfg.validate()?;
    g.check_vertex(v)?;
    let l = match cfg.depth_override {
        Some(l) => l,
        None => truncation_depth(g.n().max(2), g.max_degree().max(2), cfg.k, cfg.c)?,
    };
    marginal_zero_draw(
        g,
        &PartialConfiguration::empty(g.n()),
        lambda,
        v,
        l,
        cfg.delta,
        cfg.budget_override,
        cfg.max_retries,
        RngStream::new(cfg.seed, RngStream::stream_for("marginal", v as u64)),
    )
}

/// Number of disjoint copies used to boost accuracy: `ceil(2/eps)`.
pub fn boost_copies(eps: f64) -> usize {
    (2.0 / eps).ceil() as usize
}

/// Accuracy at which the boosted instance is estimated.
pub const BOOSTED_ACCURACY: f64 = 1.0 - 1.0 / E;

/// `N = ceil(8 e^((1+lambda)^2) / eps0^2)` with `eps0 = eps/2`.
pub fn hardcore_sample_count(lambda: f64, eps: f64) -> usize {
    let eps0 = eps / 2.0;
    (8.0 * ((1.0 + lambda) * (1.0 + lambda)).exp() / (eps0 * eps0)).ceil() as usize
}

/// Product samples are computed in chunks; the step cap is checked between chunks.
const CHUNK: usize = 16;

/// Randomized approximation of `ln Z` for the hard-core model.
///
/// Builds `t = ceil(2/eps)` disjoint copies of `g`, estimates `1/Z(G')` as
/// the mean of `N` products `prod_i p~_i`, where `p~_i` estimates
/// `mu_{v_i}(0)` with `v_1..v_{i-1}` pinned unoccupied, and returns
/// `-(1/t) ln` of that mean.
pub fn fpras_hardcore(g: &Graph, lambda: f64, eps: f64, cfg: &HardcoreEstimatorConfig) -> Result<CountEstimate> {
    cfg.validate()?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::arg(format!("need 0 < eps < 1, got {eps}")));
    }
    TwoSpinParams::hardcore(lambda)?;
    let start = Instant::now();
    let t = boost_copies(eps);
    let big = g.disjoint_copies(t);
    let n = big.n();
    let n_samples = cfg
        .samples_override
        .unwrap_or_else(|| hardcore_sample_count(lambda, BOOSTED_ACCURACY));
    if n_samples == 0 {
        return Err(Error::arg("need at least one sample"));
    }
    let l = match cfg.depth_override {
        Some(l) => l,
        None => truncation_depth(n.max(2), big.max_degree().max(2), cfg.k, cfg.c)?,
    };
    let failure = 1.0 / (n as f64 * n_samples as f64);

    let one_sample = |s: usize| -> Result<(f64, u64, u64)> {
        let stream = RngStream::new(cfg.seed, RngStream::stream_for("fpras_hardcore", s as u64));
        let mut pin = PartialConfiguration::empty(n);
        let mut log_x = 0.0;
        let mut work = 0;
        let mut retries = 0;
        for v in 0..n {
            let est = marginal_zero_draw(
                &big,
                &pin,
                lambda,
                v,
                l,
                failure,
                cfg.budget_override,
                cfg.max_retries,
                stream.derive("vertex", v as u64),
            )?;
            if est.value <= 0.0 {
                return Err(Error::Internal(format!("zero marginal estimate at vertex {v}")));
            }
            log_x += est.value.ln();
            work += est.steps_consumed + est.tree_nodes as u64;
            retries += est.retries as u64;
            pin.set(v, 0);
        }
        Ok((log_x, work, retries))
    };

    let mut logs = Vec::with_capacity(n_samples);
    let mut work = 0;
    let mut retries = 0;
    let mut truncated = false;
    let mut done = 0;
    while done < n_samples {
        let size = CHUNK.min(n_samples - done);
        for r in map_indexed(cfg.execution, size, |i| one_sample(done + i)) {
            let (lx, w, rt) = r?;
            logs.push(lx);
            work += w;
            retries += rt;
        }
        done += size;
        if cfg.step_cap.is_some_and(|cap| work > cap) && done < n_samples {
            truncated = true;
            break;
        }
    }
    let log_x = log_mean_exp(&logs);
    Ok(CountEstimate {
        log_z: -log_x / t as f64,
        n_samples: logs.len(),
        eps,
        copies: t,
        depth: l,
        truncated,
        work,
        retries,
        wall_time_secs: start.elapsed().as_secs_f64(),
        seed: cfg.seed,
    })
}

/// Truncated Weitz interval for `mu_v(0)`: the recursion evaluated under the
/// all-unoccupied and all-occupied depth-`l` boundaries, returned as
/// `(lo, hi)`.
pub fn weitz_baseline(g: &Graph, lambda: f64, v: Vertex, l: usize) -> Result<(f64, f64)> {
    Ok(weitz_interval(g, &PartialConfiguration::empty(g.n()), lambda, v, l)?.0)
}

/// Interval for `mu_v(0)` under `pin`, and the number of tree nodes built.
pub fn weitz_interval(
    g: &Graph,
    pin: &PartialConfiguration,
    lambda: f64,
    v: Vertex,
    l: usize,
) -> Result<((f64, f64), usize)> {
    if l == 0 {
        return Err(Error::arg("Weitz depth must be at least 1"));
    }
    let p = TwoSpinParams::hardcore(lambda)?;
    let mut tree = SawTree::new(g, Some(pin), v)?;
    tree.expand_to(l)?;
    let a = tree.marginal_zero(&p, l, |_| Some(0))?;
    let b = tree.marginal_zero(&p, l, |_| Some(1))?;
    Ok(((a.min(b), a.max(b)), tree.len()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeitzCount {
    pub log_z: f64,
    pub log_z_lower: f64,
    pub log_z_upper: f64,
    pub depth: usize,
    pub tree_nodes: u64,
}

/// Deterministic `ln Z` from the self-reduction with Weitz intervals; the
/// point estimate uses interval midpoints, the bounds the interval ends.
pub fn weitz_count(g: &Graph, lambda: f64, l: usize, exec: Execution) -> Result<WeitzCount> {
    let n = g.n();
    let rows = map_indexed(exec, n, |v| {
        let pin = PartialConfiguration::from_pairs(n, &(0..v).map(|u| (u, 0)).collect::<Vec<_>>());
        weitz_interval(g, &pin, lambda, v, l)
    });
    let mut out = WeitzCount {
        log_z: 0.0,
        log_z_lower: 0.0,
        log_z_upper: 0.0,
        depth: l,
        tree_nodes: 0,
    };
    for r in rows {
        let ((lo, hi), nodes) = r?;
        out.log_z -= (0.5 * (lo + hi)).ln();
        out.log_z_lower -= hi.ln();
        out.log_z_upper -= lo.ln();
        out.tree_nodes += nodes as u64;
    }
    Ok(out)
}
