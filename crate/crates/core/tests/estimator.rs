use subquad::estimator::{
    HardcoreEstimatorConfig, check_regime, estimate_marginal_zero, fpras_hardcore, hardcore_sample_count,
    marginal_zero_draw, truncation_depth, weitz_count,
};
use subquad::generators::{gen_grid, gen_random_bounded};
use subquad::oracle::{exact_marginal, exact_partition};
use subquad::par::Execution;
use subquad::rng::RngStream;
use subquad::stats::{mean, variance};
use subquad::{Graph, PartialConfiguration, SpinModel, TwoSpinParams};

fn hardcore(lambda: f64) -> SpinModel {
    TwoSpinParams::hardcore(lambda).unwrap().into()
}

fn log_z(g: &Graph, lambda: f64) -> f64 {
    exact_partition(g, &hardcore(lambda), &PartialConfiguration::empty(g.n())).unwrap().ln()
}

#[test]
fn pinned_marginal_draws_are_unbiased() {
    const RUNS: usize = 20_000;
    let g = gen_grid(4, 4, &[]);
    let lambda = 0.2;
    let pin = PartialConfiguration::from_pairs(16, &[(0, 0), (1, 0), (2, 0), (3, 0), (4, 0)]);
    let exact = exact_marginal(&g, &hardcore(lambda), &pin, 5).unwrap()[0];
    let xs: Vec<f64> = (0..RUNS)
        .map(|i| marginal_zero_draw(&g, &pin, lambda, 5, 2, 0.01, None, 16, RngStream::new(1, i as u64)).unwrap().value)
        .collect();
    let se = (variance(&xs) / RUNS as f64).sqrt();
    assert!((mean(&xs) - exact).abs() < 4.0 * se + 1e-12, "{} vs {exact}", mean(&xs));
}

#[test]
fn deep_enough_trees_are_exact() {
    let g = gen_grid(3, 3, &[]);
    let cfg = HardcoreEstimatorConfig {
        depth_override: Some(30),
        ..Default::default()
    };
    let est = estimate_marginal_zero(&g, 0.25, 4, &cfg).unwrap();
    let exact = exact_marginal(&g, &hardcore(0.25), &PartialConfiguration::empty(9), 4).unwrap()[0];
    assert!((est.value - exact).abs() < 1e-12);
    assert_eq!(est.boundary_size, 0);
}

#[test]
fn count_with_few_samples_is_close() {
    let g = gen_grid(3, 4, &[]);
    let lambda = 0.1;
    let cfg = HardcoreEstimatorConfig {
        samples_override: Some(200),
        seed: 3,
        ..Default::default()
    };
    let est = fpras_hardcore(&g, lambda, 0.3, &cfg).unwrap();
    assert!(((est.log_z - log_z(&g, lambda)).exp() - 1.0).abs() < 0.3);
    assert_eq!(est.copies, 7);
    assert!(!est.truncated && est.n_samples == 200);
}

#[test]
fn sequential_and_parallel_runs_are_identical() {
    let g = gen_random_bounded(20, 4, 8);
    let run = |execution| {
        let cfg = HardcoreEstimatorConfig {
            samples_override: Some(40),
            execution,
            ..Default::default()
        };
        fpras_hardcore(&g, 0.08, 0.5, &cfg).unwrap()
    };
    let (a, b) = (run(Execution::Sequential), run(Execution::Parallel));
    assert_eq!((a.log_z.to_bits(), a.work), (b.log_z.to_bits(), b.work));
    let wa = weitz_count(&g, 0.08, 4, Execution::Sequential).unwrap();
    let wb = weitz_count(&g, 0.08, 4, Execution::Parallel).unwrap();
    assert_eq!(wa, wb);
}

#[test]
fn step_cap_truncates() {
    let g = gen_grid(3, 3, &[]);
    let cfg = HardcoreEstimatorConfig {
        samples_override: Some(100),
        step_cap: Some(1),
        ..Default::default()
    };
    let est = fpras_hardcore(&g, 0.1, 0.5, &cfg).unwrap();
    assert!(est.truncated && est.n_samples < 100 && est.n_samples > 0);
}

#[test]
fn weitz_bounds_bracket_the_truth() {
    let g = gen_grid(4, 4, &[]);
    for lambda in [0.08, 0.5] {
        let exact = log_z(&g, lambda);
        for l in [2, 4, 8] {
            let w = weitz_count(&g, lambda, l, Execution::default()).unwrap();
            assert!(w.log_z_lower <= exact + 1e-12 && exact <= w.log_z_upper + 1e-12, "l={l}");
        }
        let deep = weitz_count(&g, lambda, 16, Execution::default()).unwrap();
        assert!((deep.log_z - exact).abs() < 1e-6);
    }
}

#[test]
fn depth_and_sample_count_rules() {
    // (ln n / 2) / ln 4 crosses 3 at n = 4096.
    assert_eq!(truncation_depth(4000, 4, 1.0, 1.0).unwrap(), 3);
    assert_eq!(truncation_depth(5000, 4, 1.0, 1.0).unwrap(), 4);
    assert_eq!(truncation_depth(5000, 4, 2.0, 1.0).unwrap(), 2);
    assert_eq!(truncation_depth(16, 4, 1.0, 100.0).unwrap(), 1);
    assert!(hardcore_sample_count(0.1, 0.5) > hardcore_sample_count(0.1, 0.9));
}

#[test]
fn regime_report() {
    let ok = check_regime(4, 1.0 / 12.0, 1.0);
    assert!(ok.decay_regime && ok.sampler_regime && ok.uniqueness && ok.warnings.is_empty());
    let bad = check_regime(4, 0.5, 1.0);
    assert!(!bad.decay_regime && !bad.sampler_regime && bad.uniqueness);
    assert!(!bad.warnings.is_empty());
}
