//! Command-line front end. Every command prints one JSON report on stdout
//! and a short human summary on stderr.

mod report;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{Value, json};
use subquad::bench::{BenchAlgorithm, Family, scaling_run};
use subquad::estimator::{
    HardcoreEstimatorConfig, check_regime, estimate_marginal_zero, fpras_hardcore, truncation_depth, weitz_baseline,
};
use subquad::generators::{gen_grid, gen_quad_boundary, gen_random_bounded, gen_regular_tree};
use subquad::lattice::{GrowthParams, LatticeConfig, LatticeDepth, LazySettings, fpras_lattice};
use subquad::lazy::LazySampler;
use subquad::oracle::{OracleCaps, exact_marginal_with, exact_partition_with};
use subquad::par::Execution;
use subquad::rng::RngStream;
use subquad::sampler::{Budget, GraphState, budget_for, hardcore_sample};
use subquad::stats::{mean, variance};
use subquad::verify::{growth_profile, ssm_decay_fit, weitz_lower_bound};
use subquad::{Error, Graph, PartialConfiguration, SpinModel, TwoSpinParams};

use report::{Failure, RunReport, Summary};

#[derive(Parser)]
#[command(name = "subquad", version, about = "Approximate counting for spin systems")]
struct Cli {
    /// Worker threads; 1 runs everything sequentially.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Randomized estimate of ln Z.
    #[command(subcommand)]
    Count(CountCommand),
    /// Exact ln Z, and a marginal if --vertex is given.
    Exact(ExactArgs),
    /// Repeated hard-core marginal estimates at one vertex.
    Marginal(MarginalArgs),
    /// Single-site sampler diagnostics.
    Sample(SampleArgs),
    #[command(subcommand)]
    Verify(VerifyCommand),
    /// Scaling runs written as CSV rows.
    Bench(BenchArgs),
    /// Write a generated graph.
    #[command(subcommand)]
    Gen(GenCommand),
}

#[derive(Subcommand)]
enum CountCommand {
    Hardcore(CountHardcoreArgs),
    Lattice(CountLatticeArgs),
}

#[derive(Args)]
struct CountHardcoreArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    lambda: f64,
    /// Decay exponent of the SSM rate C * D^(-k l).
    #[arg(long, default_value_t = 1.0)]
    k: f64,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 0.2)]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    depth: Option<usize>,
    /// Replace the analysis-derived sample count.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    step_cap: Option<u64>,
}

#[derive(Args)]
struct CountLatticeArgs {
    #[arg(long)]
    graph: PathBuf,
    /// Model as inline JSON or a path to a JSON file.
    #[arg(long)]
    model: String,
    #[arg(long, default_value_t = 0.2)]
    eps: f64,
    #[arg(long, default_value_t = 5.0)]
    c0: f64,
    #[arg(long)]
    ssm_c: f64,
    #[arg(long)]
    ssm_r: f64,
    #[arg(long, default_value_t = 2)]
    dim: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fixed table depth; by default chosen per vertex.
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    /// Radius of the lazy sampler's local tables.
    #[arg(long, default_value_t = 2)]
    lazy_radius: usize,
    #[arg(long)]
    step_cap: Option<u64>,
}

#[derive(Args)]
struct ExactArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    model: String,
    #[arg(long)]
    vertex: Option<usize>,
    /// Pinning as `v:s,v:s`.
    #[arg(long)]
    pin: Option<String>,
}

#[derive(Args)]
struct MarginalArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    lambda: f64,
    #[arg(long)]
    vertex: usize,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[arg(long, default_value_t = 1.0)]
    k: f64,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    model: String,
    #[arg(long)]
    vertex: usize,
    #[arg(long, default_value_t = 10_000)]
    draws: usize,
    /// Hard-core only: budget from the termination bound at this failure rate.
    #[arg(long, default_value_t = 1e-4)]
    eps: f64,
    /// Other models: lazy-sampler radius and per-draw step budget.
    #[arg(long, default_value_t = 2)]
    radius: usize,
    #[arg(long, default_value_t = 1_000_000)]
    steps: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum VerifyCommand {
    /// Decay lower bound on the regular tree.
    LowerBound {
        #[arg(long)]
        delta: usize,
        #[arg(long)]
        k: f64,
        #[arg(long, default_value_t = 10)]
        lmax: usize,
    },
    /// Exact sphere influence and a fitted (C, r).
    Ssm {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 0)]
        vertex: usize,
        #[arg(long, default_value_t = 3)]
        lmax: usize,
        /// Also write the decay curve as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Growth constant max |B_v(l)| / l^d.
    Growth {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value_t = 2)]
        dim: u32,
    },
}

#[derive(Args)]
struct BenchArgs {
    /// `hardcore` (fast vs Weitz on random graphs), `lattice` (grids) or `smoke`.
    #[arg(long)]
    suite: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Subcommand)]
enum GenCommand {
    Grid {
        #[arg(long)]
        w: usize,
        #[arg(long)]
        h: usize,
        #[arg(long)]
        out: PathBuf,
    },
    QuadBoundary {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    Random {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        delta: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    Tree {
        #[arg(long)]
        delta: usize,
        #[arg(long)]
        depth: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Inputs whose bytes feed the report digest.
#[derive(Default)]
struct Inputs {
    parts: Vec<String>,
}

impl Inputs {
    fn graph(&mut self, path: &Path) -> Result<Graph, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
        let g = Graph::parse(&text)?;
        self.parts.push(g.to_json());
        Ok(g)
    }

    /// Inline JSON, or a path to a file holding it.
    fn model(&mut self, spec: &str) -> Result<SpinModel, Failure> {
        let text = if spec.trim_start().starts_with('{') {
            spec.to_string()
        } else {
            std::fs::read_to_string(spec).map_err(|e| Failure::io(Path::new(spec), e))?
        };
        let m = SpinModel::from_json(&text)?;
        self.parts.push(m.to_json());
        Ok(m)
    }
}

struct Output {
    seed: Option<u64>,
    outputs: Value,
    warnings: Vec<String>,
    summary: String,
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("report values serialize")
}

fn parse_pin(n: usize, spec: &str) -> Result<PartialConfiguration, Failure> {
    let mut pin = PartialConfiguration::empty(n);
    for item in spec.split(',').filter(|s| !s.trim().is_empty()) {
        let (v, s) = item
            .split_once(':')
            .ok_or_else(|| Failure::usage(format!("pin entry {item:?} is not v:s")))?;
        let v: usize = v.trim().parse().map_err(|_| Failure::usage(format!("bad vertex in {item:?}")))?;
        let s: u8 = s.trim().parse().map_err(|_| Failure::usage(format!("bad spin in {item:?}")))?;
        if v >= n {
            return Err(Failure::usage(format!("pinned vertex {v} out of range")));
        }
        pin.set(v, s);
    }
    Ok(pin)
}

fn hardcore_lambda(model: &SpinModel) -> Option<f64> {
    model.two_spin().filter(TwoSpinParams::is_hardcore).map(|p| p.lambda)
}

fn run(cmd: Command, exec: Execution, inputs: &mut Inputs) -> Result<Output, Failure> {
    let caps = OracleCaps::from_env()?;
    match cmd {
        Command::Count(CountCommand::Hardcore(a)) => {
            let g = inputs.graph(&a.graph)?;
            let regime = check_regime(g.max_degree(), a.lambda, a.k);
            let cfg = HardcoreEstimatorConfig {
                k: a.k,
                c: a.c,
                depth_override: a.depth,
                seed: a.seed,
                samples_override: a.samples,
                step_cap: a.step_cap,
                execution: exec,
                ..Default::default()
            };
            let est = fpras_hardcore(&g, a.lambda, a.eps, &cfg)?;
            let summary = format!(
                "ln Z ~ {:.6} (eps {}, {} samples, depth {}, {} copies{})",
                est.log_z,
                a.eps,
                est.n_samples,
                est.depth,
                est.copies,
                if est.truncated { ", truncated by step cap" } else { "" }
            );
            Ok(Output {
                seed: Some(a.seed),
                outputs: json!({ "estimate": est, "regime": regime }),
                warnings: regime.warnings.clone(),
                summary,
            })
        }
        Command::Count(CountCommand::Lattice(a)) => {
            let g = inputs.graph(&a.graph)?;
            let model = inputs.model(&a.model)?;
            let gp = GrowthParams::new(a.c0, a.dim, a.ssm_c, a.ssm_r)?;
            let cfg = LatticeConfig {
                depth: a.depth.map_or(LatticeDepth::Balanced, LatticeDepth::Fixed),
                lazy: LazySettings {
                    radius: a.lazy_radius,
                    caps,
                    ..Default::default()
                },
                seed: a.seed,
                samples_override: a.samples,
                step_cap: a.step_cap,
                execution: exec,
                ..Default::default()
            };
            let est = fpras_lattice(&g, &model, a.eps, &gp, &cfg)?;
            let summary = format!(
                "ln Z ~ {:.6} (eps {}, {} samples, radius {}..{}, {} table entries)",
                est.count.log_z, a.eps, est.count.n_samples, est.radius_min, est.radius_max, est.table_entries
            );
            Ok(Output {
                seed: Some(a.seed),
                warnings: est.warnings.clone(),
                outputs: json!({ "estimate": est }),
                summary,
            })
        }
        Command::Exact(a) => {
            let g = inputs.graph(&a.graph)?;
            let model = inputs.model(&a.model)?;
            let pin = match &a.pin {
                Some(spec) => {
                    inputs.parts.push(spec.clone());
                    parse_pin(g.n(), spec)?
                }
                None => PartialConfiguration::empty(g.n()),
            };
            let z = exact_partition_with(&g, &model, &pin, caps)?;
            let marginal = match a.vertex {
                Some(v) => Some(exact_marginal_with(&g, &model, &pin, v, caps)?),
                None => None,
            };
            let summary = match &marginal {
                Some(m) => format!("ln Z = {:.12}, marginal at {} = {m:?}", z.ln(), a.vertex.unwrap()),
                None => format!("ln Z = {:.12}", z.ln()),
            };
            Ok(Output {
                seed: None,
                outputs: json!({ "log_z": z.ln(), "vertex": a.vertex, "marginal": marginal }),
                warnings: vec![],
                summary,
            })
        }
        Command::Marginal(a) => {
            let g = inputs.graph(&a.graph)?;
            if a.reps == 0 {
                return Err(Failure::usage("need --reps >= 1"));
            }
            let depth = match a.depth {
                Some(l) => l,
                None => truncation_depth(g.n().max(2), g.max_degree().max(2), a.k, a.c)?,
            };
            let regime = check_regime(g.max_degree(), a.lambda, a.k);
            let draws = subquad::par::map_indexed(exec, a.reps, |i| {
                let cfg = HardcoreEstimatorConfig {
                    k: a.k,
                    c: a.c,
                    depth_override: Some(depth),
                    seed: a.seed.wrapping_add(i as u64),
                    ..Default::default()
                };
                estimate_marginal_zero(&g, a.lambda, a.vertex, &cfg)
            });
            let draws = draws.into_iter().collect::<Result<Vec<_>, _>>()?;
            let values: Vec<f64> = draws.iter().map(|d| d.value).collect();
            let (mu, var) = (mean(&values), variance(&values));
            let weitz = weitz_baseline(&g, a.lambda, a.vertex, depth)?;
            let model: SpinModel = TwoSpinParams::hardcore(a.lambda)?.into();
            // The exact value is reported when the oracle can afford it.
            let exact = exact_marginal_with(&g, &model, &PartialConfiguration::empty(g.n()), a.vertex, caps)
                .ok()
                .map(|m| m[0]);
            let steps: u64 = draws.iter().map(|d| d.steps_consumed).sum();
            let retries: u64 = draws.iter().map(|d| d.retries as u64).sum();
            let summary = format!(
                "mu_{}(0) ~ {mu:.6} +- {:.6} over {} reps at depth {depth}",
                a.vertex,
                (var / a.reps as f64).sqrt(),
                a.reps
            );
            Ok(Output {
                seed: Some(a.seed),
                outputs: json!({
                    "vertex": a.vertex,
                    "depth": depth,
                    "reps": a.reps,
                    "mean": mu,
                    "variance": var,
                    "std_error": (var / a.reps as f64).sqrt(),
                    "min": values.iter().cloned().fold(f64::INFINITY, f64::min),
                    "max": values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                    "exact": exact,
                    "weitz_interval": [weitz.0, weitz.1],
                    "steps_consumed": steps,
                    "retries": retries,
                }),
                warnings: regime.warnings,
                summary,
            })
        }
        Command::Sample(a) => {
            let g = inputs.graph(&a.graph)?;
            let model = inputs.model(&a.model)?;
            sample(&g, &model, &a, caps)
        }
        Command::Verify(VerifyCommand::LowerBound { delta, k, lmax }) => {
            let rep = weitz_lower_bound(delta, k, lmax)?;
            let failures = rep.rows.iter().filter(|r| !r.pass).count();
            Ok(Output {
                seed: None,
                summary: format!("{} depths checked, {failures} below the bound", rep.rows.len()),
                outputs: json!({ "report": rep, "all_pass": failures == 0 }),
                warnings: vec![],
            })
        }
        Command::Verify(VerifyCommand::Ssm { graph, model, vertex, lmax, csv }) => {
            let g = inputs.graph(&graph)?;
            let m = inputs.model(&model)?;
            let fit = ssm_decay_fit(&g, &m, vertex, lmax, caps)?;
            if let Some(path) = csv {
                let mut text = String::from("l,influence\n");
                for (l, d) in &fit.curve {
                    text.push_str(&format!("{l},{d}\n"));
                }
                std::fs::write(&path, text).map_err(|e| Failure::io(&path, e))?;
            }
            Ok(Output {
                seed: None,
                summary: format!("C ~ {:.4}, r ~ {:.4} (R2 {:.4})", fit.c, fit.r, fit.fit.r2),
                outputs: to_value(&fit),
                warnings: vec![],
            })
        }
        Command::Verify(VerifyCommand::Growth { graph, dim }) => {
            let g = inputs.graph(&graph)?;
            let p = growth_profile(&g, dim, exec)?;
            Ok(Output {
                seed: None,
                summary: format!("C0 = {:.4} at vertex {} radius {}", p.c0, p.argmax_vertex, p.argmax_radius),
                outputs: to_value(&p),
                warnings: vec![],
            })
        }
        Command::Bench(a) => bench(&a, exec),
        Command::Gen(cmd) => {
            let (g, out, extra) = match cmd {
                GenCommand::Grid { w, h, out } => (gen_grid(w, h, &[]), out, json!({})),
                GenCommand::QuadBoundary { n, out } => {
                    let (g, start) = gen_quad_boundary(n)?;
                    (g, out, json!({ "start": start }))
                }
                GenCommand::Random { n, delta, seed, out } => (gen_random_bounded(n, delta, seed), out, json!({})),
                GenCommand::Tree { delta, depth, out } => (gen_regular_tree(delta, depth), out, json!({})),
            };
            let text = g.to_json();
            std::fs::write(&out, &text).map_err(|e| Failure::io(&out, e))?;
            inputs.parts.push(text);
            Ok(Output {
                seed: None,
                summary: format!("wrote {} vertices, {} edges to {}", g.n(), g.edge_count(), out.display()),
                outputs: json!({
                    "path": out,
                    "n": g.n(),
                    "edges": g.edge_count(),
                    "max_degree": g.max_degree(),
                    "extra": extra,
                }),
                warnings: vec![],
            })
        }
    }
}

fn sample(g: &Graph, model: &SpinModel, a: &SampleArgs, caps: OracleCaps) -> Result<Output, Failure> {
    if a.draws == 0 {
        return Err(Failure::usage("need --draws >= 1"));
    }
    let q = model.q();
    let mut counts = vec![0u64; q];
    let mut exhausted = 0u64;
    // Histogram of consumed steps in power-of-two buckets: bucket i holds [2^i, 2^(i+1)).
    let mut histogram: Vec<u64> = Vec::new();
    let mut rng = RngStream::new(a.seed, RngStream::stream_for("cli-sample", a.vertex as u64)).into_rng();
    let empty = PartialConfiguration::empty(g.n());
    let (sampler, budget_steps) = match hardcore_lambda(model) {
        Some(lambda) => ("hardcore", budget_for(g.max_degree().max(2), lambda, a.eps)?),
        None => ("lazy", a.steps),
    };
    let mut lazy = match sampler {
        "lazy" => Some(LazySampler::new(g, model, a.radius, caps)?),
        _ => None,
    };
    let mut state = GraphState::new(g, empty.clone());
    let mut pin = empty;
    for _ in 0..a.draws {
        let mut budget = Budget::new(budget_steps);
        let drawn = match (&mut lazy, hardcore_lambda(model)) {
            (Some(s), _) => s.sample(&mut pin, a.vertex, &mut budget, &mut rng),
            (None, Some(lambda)) => hardcore_sample(&mut state, lambda, a.vertex, &mut budget, &mut rng),
            (None, None) => unreachable!("non-hard-core models use the lazy sampler"),
        };
        match drawn {
            Ok(s) => counts[s as usize] += 1,
            Err(Error::BudgetExhausted { .. }) => exhausted += 1,
            Err(e) => return Err(e.into()),
        }
        let bucket = budget.consumed.max(1).ilog2() as usize;
        if histogram.len() <= bucket {
            histogram.resize(bucket + 1, 0);
        }
        histogram[bucket] += 1;
    }
    let finished = (a.draws as u64 - exhausted).max(1) as f64;
    let freq: Vec<f64> = counts.iter().map(|&c| c as f64 / finished).collect();
    let exact = exact_marginal_with(g, model, &PartialConfiguration::empty(g.n()), a.vertex, caps).ok();
    let lazy_stats = lazy.map(|s| s.stats);
    Ok(Output {
        seed: Some(a.seed),
        summary: format!("{} draws, {exhausted} exhausted, frequencies {freq:?}", a.draws),
        outputs: json!({
            "sampler": sampler,
            "vertex": a.vertex,
            "draws": a.draws,
            "budget": budget_steps,
            "exhausted": exhausted,
            "frequencies": freq,
            "exact": exact,
            "steps_histogram_log2": histogram,
            "lazy": lazy_stats,
        }),
        warnings: vec![],
    })
}

fn bench(a: &BenchArgs, exec: Execution) -> Result<Output, Failure> {
    let lambda = 1.0 / 12.0;
    let fast = BenchAlgorithm::FastHardcore {
        lambda,
        cfg: HardcoreEstimatorConfig {
            samples_override: Some(2),
            execution: exec,
            ..Default::default()
        },
    };
    let weitz = BenchAlgorithm::WeitzBaseline { lambda, k: 1.0, c: 1.0 };
    let lattice = BenchAlgorithm::Lattice {
        model: TwoSpinParams::ising(1.2, 1.0)?.into(),
        gp: GrowthParams::grid(1.7, 4.4)?,
        cfg: LatticeConfig {
            samples_override: Some(1),
            execution: exec,
            ..Default::default()
        },
    };
    let random = Family::Random { delta: 4 };
    let pow2 = |lo: u32, hi: u32| (lo..=hi).map(|k| 1usize << k).collect::<Vec<_>>();
    let plan: Vec<(Family, BenchAlgorithm, Vec<usize>, f64)> = match a.suite.as_str() {
        "hardcore" => vec![
            (random, fast, pow2(8, 13), 0.5),
            (random, weitz, pow2(8, 13), 0.5),
        ],
        "lattice" => vec![(Family::Grid, lattice, pow2(8, 12), 0.9)],
        "smoke" => vec![
            (random, fast, pow2(5, 7), 0.5),
            (random, weitz, pow2(5, 7), 0.5),
            (Family::Grid, lattice, pow2(4, 6), 0.9),
        ],
        other => return Err(Failure::usage(format!("unknown suite {other:?}; use hardcore, lattice or smoke"))),
    };
    let mut csv = format!("{}\n", subquad::bench::BenchRow::CSV_HEADER);
    let mut fits = Vec::new();
    let mut warnings = Vec::new();
    for (family, alg, sizes, eps) in plan {
        let rep = scaling_run(&family, &alg, &sizes, eps, a.seed);
        for row in &rep.rows {
            csv.push_str(&row.csv());
            csv.push('\n');
            if let Some(e) = &row.error {
                warnings.push(format!("{} n={}: {e}", row.algorithm, row.n));
            }
        }
        fits.push(json!({ "algorithm": alg.tag(), "family": family, "fit": rep.fit, "rows": rep.rows }));
    }
    std::fs::write(&a.out, csv).map_err(|e| Failure::io(&a.out, e))?;
    let slopes: Vec<String> = fits
        .iter()
        .map(|f| format!("{} {:.3}", f["algorithm"].as_str().unwrap_or("?"), f["fit"]["slope"].as_f64().unwrap_or(f64::NAN)))
        .collect();
    Ok(Output {
        seed: Some(a.seed),
        summary: format!("slopes: {}", slopes.join(", ")),
        outputs: json!({ "suite": a.suite, "csv": a.out, "series": fits }),
        warnings,
    })
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    if cli.threads == 0 {
        eprintln!("error: --threads must be at least 1");
        return ExitCode::from(2);
    }
    let exec = if cli.threads == 1 { Execution::Sequential } else { Execution::Parallel };
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        eprintln!("error: thread pool: {e}");
        return ExitCode::from(1);
    }
    let start = Instant::now();
    let mut inputs = Inputs::default();
    let result = run(cli.command, exec, &mut inputs);
    let elapsed = start.elapsed().as_secs_f64();
    let (report, code) = match result {
        Ok(out) => {
            eprintln!("{}", out.summary);
            for w in &out.warnings {
                eprintln!("warning: {w}");
            }
            let summary = Summary {
                seed: out.seed,
                outputs: out.outputs,
                warnings: out.warnings,
            };
            (RunReport::success(&argv, &inputs.parts, summary, elapsed), 0)
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            let code = f.exit_code;
            (RunReport::failure(&argv, &inputs.parts, f, elapsed), code)
        }
    };
    // A closed stdout (e.g. piped into `head`) is not worth a panic.
    let _ = writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    ExitCode::from(code)
}
