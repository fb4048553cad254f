//! Scaling experiments on deterministic work counters.

use std::time::Instant;

use serde::Serialize;

use crate::error::Result;
use crate::estimator::{HardcoreEstimatorConfig, fpras_hardcore, weitz_count};
use crate::generators::{gen_grid, gen_random_bounded};
use crate::graph::Graph;
use crate::lattice::{GrowthParams, LatticeConfig, fpras_lattice};
use crate::model::SpinModel;
use crate::par::Execution;
use crate::stats::{LineFit, least_squares};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum Family {
    /// `gen_random_bounded(n, delta, seed)`.
    Random { delta: usize },
    /// A `2^a x 2^b` grid with `a = floor(log2(n)/2)`; `n` must be a power of two.
    Grid,
}

impl Family {
    pub fn generate(&self, n: usize, seed: u64) -> Graph {
        match *self {
            Family::Random { delta } => gen_random_bounded(n, delta, seed),
            Family::Grid => {
                let w = 1usize << (n.max(1).ilog2() / 2);
                gen_grid(w, n.div_ceil(w), &[])
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "algorithm")]
pub enum BenchAlgorithm {
    FastHardcore { lambda: f64, cfg: HardcoreEstimatorConfig },
    /// Deterministic self-reduction at depth `ceil((ln(n/eps) + ln C)/(k ln D))`,
    /// which makes every marginal accurate to `eps/n`.
    WeitzBaseline { lambda: f64, k: f64, c: f64 },
    Lattice { model: SpinModel, gp: GrowthParams, cfg: LatticeConfig },
}

impl BenchAlgorithm {
    pub fn tag(&self) -> &'static str {
        match self {
            BenchAlgorithm::FastHardcore { .. } => "fast-hardcore",
            BenchAlgorithm::WeitzBaseline { .. } => "weitz-baseline",
            BenchAlgorithm::Lattice { .. } => "lattice",
        }
    }
}

/// One measured configuration. `steps_consumed` is the deterministic work
/// counter: sampler steps plus tree nodes, or table cells plus sampler calls.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub algorithm: String,
    pub n: usize,
    pub eps: f64,
    pub wall_time: f64,
    pub steps_consumed: u64,
    pub estimate: f64,
    pub seed: u64,
    pub depth: usize,
    pub error: Option<String>,
}

impl BenchRow {
    pub const CSV_HEADER: &'static str = "algorithm,n,eps,wall_time,steps_consumed,estimate,seed";

    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{:.6},{},{},{}",
            self.algorithm, self.n, self.eps, self.wall_time, self.steps_consumed, self.estimate, self.seed
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingReport {
    pub rows: Vec<BenchRow>,
    /// Least-squares fit of `ln steps` against `ln n` over successful rows.
    pub fit: Option<LineFit>,
}

pub fn run_one(family: &Family, algorithm: &BenchAlgorithm, n: usize, eps: f64, seed: u64) -> BenchRow {
    let g = family.generate(n, seed);
    let start = Instant::now();
    let out: Result<(f64, u64, usize)> = match algorithm {
        BenchAlgorithm::FastHardcore { lambda, cfg } => {
            fpras_hardcore(&g, *lambda, eps, &HardcoreEstimatorConfig { seed, ..cfg.clone() })
                .map(|e| (e.log_z, e.work, e.depth))
        }
        BenchAlgorithm::WeitzBaseline { lambda, k, c } => {
            let delta = g.max_degree().max(2) as f64;
            let l = ((((n.max(2) as f64) / eps).ln() + c.ln()) / (k * delta.ln())).ceil().max(1.0) as usize;
            weitz_count(&g, *lambda, l, Execution::Sequential).map(|w| (w.log_z, w.tree_nodes, l))
        }
        BenchAlgorithm::Lattice { model, gp, cfg } => {
            fpras_lattice(&g, model, eps, gp, &LatticeConfig { seed, ..cfg.clone() })
                .map(|e| (e.count.log_z, e.count.work, e.radius_max))
        }
    };
    let wall_time = start.elapsed().as_secs_f64();
    let (estimate, steps, depth, error) = match out {
        Ok((z, s, d)) => (z, s, d, None),
        Err(e) => (f64::NAN, 0, 0, Some(e.to_string())),
    };
    BenchRow {
        algorithm: algorithm.tag().to_string(),
        n,
        eps,
        wall_time,
        steps_consumed: steps,
        estimate,
        seed,
        depth,
        error,
    }
}

/// Runs each size in turn (rows are sequential so counters stay
/// meaningful; parallelism, if any, lives inside the algorithm).
pub fn scaling_run(family: &Family, algorithm: &BenchAlgorithm, sizes: &[usize], eps: f64, seed: u64) -> ScalingReport {
    let rows: Vec<BenchRow> = sizes.iter().map(|&n| run_one(family, algorithm, n, eps, seed)).collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.error.is_none() && r.steps_consumed > 0)
        .map(|r| ((r.n as f64).ln(), (r.steps_consumed as f64).ln()))
        .unzip();
    ScalingReport {
        fit: least_squares(&xs, &ys),
        rows,
    }
}
