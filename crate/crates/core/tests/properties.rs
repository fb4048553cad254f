use proptest::prelude::*;
use subquad::generators::grid_from_cells;
use subquad::model::weight;
use subquad::oracle::{OracleCaps, exact_marginal, exact_partition, sweep_partition};
use subquad::saw::SawTree;
use subquad::{Graph, PartialConfiguration, SpinModel, TwoSpinParams};

fn small_graph() -> impl Strategy<Value = Graph> {
    (2usize..=8).prop_flat_map(|n| {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
        proptest::collection::vec(any::<bool>(), pairs.len()).prop_map(move |keep| {
            let edges: Vec<_> = pairs.iter().zip(&keep).filter(|(_, k)| **k).map(|(e, _)| *e).collect();
            Graph::from_edges(n, &edges).unwrap()
        })
    })
}

fn two_spin() -> impl Strategy<Value = TwoSpinParams> {
    (0.0f64..2.0, 0.0f64..2.0, 0.05f64..3.0).prop_map(|(b, c, l)| TwoSpinParams::new(b, c, l).unwrap())
}

fn cells() -> impl Strategy<Value = Vec<(i64, i64)>> {
    proptest::collection::btree_set((0i64..5, 0i64..4), 1..16).prop_map(|s| s.into_iter().collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn saw_tree_equals_oracle(g in small_graph(), p in two_spin(), v in 0usize..8) {
        let v = v % g.n();
        let m: SpinModel = p.into();
        let pin = PartialConfiguration::empty(g.n());
        let exact = exact_marginal(&g, &m, &pin, v).unwrap()[0];
        let mut t = SawTree::new(&g, None, v).unwrap();
        t.expand_all().unwrap();
        prop_assert!((t.marginal_zero(&p, usize::MAX, |_| None).unwrap() - exact).abs() < 1e-10);
    }

    #[test]
    fn sweep_equals_enumeration(cells in cells(), p in two_spin()) {
        let g = grid_from_cells(&cells);
        let m: SpinModel = p.into();
        let pin = PartialConfiguration::empty(g.n());
        let all: Vec<usize> = (0..g.n()).collect();
        let a = exact_partition(&g, &m, &pin).unwrap().ln();
        let b = sweep_partition(&g, &m, &pin, &all, OracleCaps::default()).unwrap().ln();
        prop_assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn every_configuration_weighs_at_most_z(g in small_graph(), p in two_spin(), bits in any::<u8>()) {
        let m: SpinModel = p.into();
        let sigma: Vec<u8> = (0..g.n()).map(|i| bits >> i & 1).collect();
        let w = weight(&g, &m, &PartialConfiguration::full(&sigma)).unwrap();
        let z = exact_partition(&g, &m, &PartialConfiguration::empty(g.n())).unwrap();
        prop_assert!(w.is_zero() || w.ln() <= z.ln() + 1e-12);
    }

    #[test]
    fn graph_text_round_trip(g in small_graph()) {
        prop_assert_eq!(Graph::parse(&g.to_edge_list()).unwrap(), g.clone());
        prop_assert_eq!(Graph::parse(&g.to_json()).unwrap(), g);
    }
}
