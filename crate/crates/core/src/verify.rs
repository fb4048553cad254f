//! Numerical checks of the analytical claims: the lower bound on decay in
//! regular trees, empirical decay rates, and growth constants.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{Graph, Vertex, ball};
use crate::model::SpinModel;
use crate::oracle::{OracleCaps, conditional_table};
use crate::par::{Execution, map_indexed};
use crate::stats::{LineFit, least_squares};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LowerBoundRow {
    pub depth: usize,
    pub tv: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LowerBoundReport {
    pub delta: usize,
    pub k: f64,
    pub lambda: f64,
    /// `|R0 - R1|` one level above the pinned level.
    pub base_gap: f64,
    pub rows: Vec<LowerBoundRow>,
}

impl LowerBoundReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}

/// Root disagreement in the infinite `delta`-regular tree at
/// `lambda = 2/((D-1) D^k)` between the all-unoccupied and all-occupied
/// pinnings of level `l`, for `l = 2..=l_max`, against `(1/2) D^(-k l)`.
pub fn weitz_lower_bound(delta: usize, k: f64, l_max: usize) -> Result<LowerBoundReport> {
    let d = delta as f64;
    if delta < 2 || !(k > 0.0) || d.powf(k) < 4.0 {
        return Err(Error::OutOfRegime(format!("need D >= 2 and D^k >= 4, got D={delta} k={k}")));
    }
    if l_max < 2 {
        return Err(Error::arg("need l_max >= 2"));
    }
    let lambda = 2.0 / ((d - 1.0) * d.powf(k));
    let f = |x: f64| lambda * (1.0 + x).powf(-(d - 1.0));
    let g = |x: f64| lambda * (1.0 + x).powf(-d);
    let rows = (2..=l_max)
        .map(|l| {
            // Ratios one level above the pinned level: unoccupied children
            // leave lambda, an occupied child forces 0.
            let (mut r0, mut r1) = (lambda, 0.0);
            for _ in 1..l - 1 {
                (r0, r1) = (f(r0), f(r1));
            }
            let (r0, r1) = (g(r0), g(r1));
            let tv = (r0 / (1.0 + r0) - r1 / (1.0 + r1)).abs();
            let bound = 0.5 * d.powf(-k * l as f64);
            LowerBoundRow {
                depth: l,
                tv,
                bound,
                pass: tv >= bound,
            }
        })
        .collect();
    Ok(LowerBoundReport {
        delta,
        k,
        lambda,
        base_gap: lambda,
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SsmFit {
    pub c: f64,
    pub r: f64,
    /// `(l, D(l))` for `l = 1..=l_max`.
    pub curve: Vec<(usize, f64)>,
    pub fit: LineFit,
}

/// Largest total-variation distance at `v` between two feasible
/// configurations of the whole distance-`l` sphere.
pub fn sphere_influence(g: &Graph, model: &SpinModel, v: Vertex, l: usize, caps: OracleCaps) -> Result<f64> {
    let m = model.to_q_spin();
    let shell = ball(g, v, l)?;
    let region: Vec<Vertex> = shell.ball_vertices().collect();
    let sphere = if l == 0 { Vec::new() } else { shell.sphere.clone() };
    let configs = (m.q as f64).powi(sphere.len() as i32);
    if configs > crate::lazy::ENUMERATION_CAP as f64 {
        return Err(Error::OracleTooLarge {
            what: "sphere configurations",
            size: configs as usize,
            cap: crate::lazy::ENUMERATION_CAP,
        });
    }
    let empty = crate::model::PartialConfiguration::empty(g.n());
    let table = conditional_table(g, &m, &empty, v, &region, &sphere, caps)?;
    let feasible: Vec<&Vec<f64>> = table.entries.iter().flatten().collect();
    if m.q == 2 {
        let (lo, hi) = feasible
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| (lo.min(e[0]), hi.max(e[0])));
        return Ok((hi - lo).max(0.0));
    }
    if feasible.len() > 4096 {
        return Err(Error::OracleTooLarge {
            what: "feasible sphere configurations for pairwise distances",
            size: feasible.len(),
            cap: 4096,
        });
    }
    let mut best: f64 = 0.0;
    for (i, a) in feasible.iter().enumerate() {
        for b in &feasible[i + 1..] {
            let tv = 0.5 * a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).sum::<f64>();
            best = best.max(tv);
        }
    }
    Ok(best)
}

/// Numerical floor below which decay points are left out of the fit.
pub const FIT_FLOOR: f64 = 1e-12;

/// Exact sphere influence `D(l)` for `l = 1..=l_max` and the least-squares
/// line `ln D(l) = ln C - l ln r` through the points above [`FIT_FLOOR`].
pub fn ssm_decay_fit(g: &Graph, model: &SpinModel, v: Vertex, l_max: usize, caps: OracleCaps) -> Result<SsmFit> {
    let curve = (1..=l_max)
        .map(|l| sphere_influence(g, model, v, l, caps).map(|d| (l, d)))
        .collect::<Result<Vec<_>>>()?;
    let (xs, ys): (Vec<f64>, Vec<f64>) = curve
        .iter()
        .filter(|&&(_, d)| d > FIT_FLOOR)
        .map(|&(l, d)| (l as f64, d.ln()))
        .unzip();
    let fit = least_squares(&xs, &ys)
        .ok_or_else(|| Error::arg("fewer than two decay points above the numerical floor; raise l_max"))?;
    Ok(SsmFit {
        c: fit.intercept.exp(),
        r: (-fit.slope).exp(),
        curve,
        fit,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GrowthProfile {
    pub d: u32,
    pub c0: f64,
    pub argmax_vertex: Vertex,
    pub argmax_radius: usize,
    pub vertices_profiled: usize,
    /// Only a subset of centres was profiled.
    pub sampled: bool,
}

/// Above this many vertices only an evenly spaced subset of centres is profiled.
pub const PROFILE_FULL_LIMIT: usize = 4096;

/// `max |B_v(l)| / l^d` over centres `v` and radii `l >= 1`.
pub fn growth_profile(g: &Graph, d: u32, exec: Execution) -> Result<GrowthProfile> {
    if d == 0 {
        return Err(Error::arg("need d >= 1"));
    }
    let n = g.n();
    if n == 0 {
        return Err(Error::arg("empty graph"));
    }
    let centres: Vec<Vertex> = if n <= PROFILE_FULL_LIMIT {
        (0..n).collect()
    } else {
        let step = n.div_ceil(PROFILE_FULL_LIMIT);
        (0..n).step_by(step).collect()
    };
    let per = map_indexed(exec, centres.len(), |i| {
        let v = centres[i];
        let dist = g.bfs_distances(v, usize::MAX);
        let ecc = dist.iter().filter(|&&x| x != usize::MAX).max().copied().unwrap_or(0);
        let mut count = vec![0usize; ecc + 2];
        for &x in dist.iter().filter(|&&x| x != usize::MAX) {
            count[x] += 1;
        }
        let mut ball = count[0];
        let mut best = (0.0, 1);
        for (l, &c) in count.iter().enumerate().take(ecc.max(1) + 1).skip(1) {
            ball += c;
            let ratio = ball as f64 / (l as f64).powi(d as i32);
            if ratio > best.0 {
                best = (ratio, l);
            }
        }
        (best.0, v, best.1)
    });
    let (c0, v, l) = per
        .into_iter()
        .fold((0.0, 0, 1), |acc, x| if x.0 > acc.0 { x } else { acc });
    Ok(GrowthProfile {
        d,
        c0,
        argmax_vertex: v,
        argmax_radius: l,
        vertices_profiled: centres.len(),
        sampled: centres.len() < n,
    })
}
