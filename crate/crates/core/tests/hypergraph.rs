mod common;

use std::collections::BTreeMap;
use std::path::Path;

use proptest::prelude::*;

use hydy_core::hypergraph::{generate_er, load_hyperedge_file, parse_hyperedge_list, to_hyperedge_list, LoadOptions};
use hydy_core::{Error, Hypergraph};

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[test]
fn er_edge_counts_match_binomial_expectation() {
    let n = 12;
    let probs = BTreeMap::from([(2, 0.3), (3, 0.05), (4, 0.01)]);
    let runs = 300;
    let mut totals: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for r in 0..runs {
        let h = generate_er(n, &probs, 1000 + r).unwrap();
        for &d in probs.keys() {
            totals.entry(d).or_default().push(h.edges(d).len() as f64);
        }
    }
    for (&d, &p) in &probs {
        let subsets = binomial(n, d);
        let expected = subsets * p;
        let se = (subsets * p * (1.0 - p) / runs as f64).sqrt();
        let mean = totals[&d].iter().sum::<f64>() / runs as f64;
        assert!((mean - expected).abs() < 3.0 * se, "d={d}: mean {mean}, expected {expected} ± {se}");
    }
}

#[test]
fn er_is_a_pure_function_of_its_seed() {
    let probs = BTreeMap::from([(2, 0.2), (3, 0.05)]);
    assert_eq!(generate_er(15, &probs, 4).unwrap(), generate_er(15, &probs, 4).unwrap());
    assert_ne!(generate_er(15, &probs, 4).unwrap(), generate_er(15, &probs, 5).unwrap());
    assert!(matches!(
        generate_er(15, &BTreeMap::from([(2, 1.5)]), 0),
        Err(Error::InvalidProbability { size: 2, .. })
    ));
    assert!(matches!(generate_er(15, &BTreeMap::from([(6, 0.1)]), 0), Err(Error::ArityTooLarge { .. })));
}

#[test]
fn incidence_views_agree_with_edge_lists() {
    let probs = BTreeMap::from([(2, 0.2), (3, 0.05), (4, 0.02)]);
    let h = generate_er(14, &probs, 77).unwrap();
    for d in h.sizes() {
        let view = h.incidence_view(d);
        assert_eq!(view.size(), d);
        assert_eq!(view.degree_sum(), d * h.edges(d).len());
        for node in 0..h.n_nodes() {
            let expected: Vec<usize> =
                h.edges(d).iter().enumerate().filter(|(_, e)| e.contains(&node)).map(|(i, _)| i).collect();
            assert_eq!(view.edges_of(node), expected.as_slice(), "d={d} node={node}");
        }
    }
}

#[test]
fn clique_weights_match_dense_incidence_product() {
    let probs = BTreeMap::from([(2, 0.15), (3, 0.05), (4, 0.02)]);
    for s in 0..5 {
        let h = generate_er(12, &probs, s).unwrap();
        let dense = common::clique_matrix(&h);
        let w = h.clique_weights();
        for i in 0..12 {
            for j in 0..12 {
                if i != j {
                    assert_eq!(w.get(i, j) as f64, dense[i][j]);
                }
            }
        }
    }
}

#[test]
fn build_normalises_and_validates() {
    let built = Hypergraph::build(5, [vec![1, 0], vec![0, 1], vec![2, 4, 3], vec![3, 2, 4]]).unwrap();
    assert_eq!(built.duplicates, 2);
    let h = built.hypergraph;
    assert_eq!(h.edge_count(), 2);
    assert_eq!(h.edges(2), [vec![0, 1]]);
    assert_eq!(h.edges(3), [vec![2, 3, 4]]);
    assert_eq!(h.order(), 3);

    assert!(matches!(Hypergraph::build(3, [vec![0, 3]]), Err(Error::NodeOutOfRange { node: 3, .. })));
    assert!(matches!(Hypergraph::build(3, [vec![1]]), Err(Error::EdgeTooSmall { .. })));
    assert!(matches!(Hypergraph::build(3, [vec![1, 1]]), Err(Error::RepeatedNode { node: 1, .. })));
    assert!(matches!(Hypergraph::build(7, [vec![0, 1, 2, 3, 4, 5]]), Err(Error::ArityTooLarge { size: 6, max: 5 })));
}

#[test]
fn loader_remaps_ids_and_drops_oversized_edges() {
    let text = "# contacts\n10 30\n30 20 10\n40 50 10 20 30\n10 30\n";
    let strict = parse_hyperedge_list(text, Path::new("t.hg"), LoadOptions { max_arity: 4, drop_oversized: false });
    assert!(matches!(strict, Err(Error::Parse { line: 4, .. })));

    let loaded =
        parse_hyperedge_list(text, Path::new("t.hg"), LoadOptions { max_arity: 4, drop_oversized: true }).unwrap();
    assert_eq!(loaded.dropped_oversized, 1);
    assert_eq!(loaded.duplicates, 1);
    assert_eq!(loaded.node_ids, [10, 20, 30]);
    assert_eq!(loaded.hypergraph.edges(2), [vec![0, 2]]);
    assert_eq!(loaded.hypergraph.edges(3), [vec![0, 1, 2]]);

    let bad = parse_hyperedge_list("nodes 3\n0 5\n", Path::new("b.hg"), LoadOptions::default());
    assert!(matches!(bad, Err(Error::Parse { line: 2, .. })));
}

fn arb_hypergraph() -> impl Strategy<Value = Hypergraph> {
    (2usize..12).prop_flat_map(|n| {
        let edge = proptest::sample::subsequence((0..n).collect::<Vec<_>>(), 2..=n.min(5)).prop_shuffle();
        proptest::collection::vec(edge, 0..20)
            .prop_map(move |edges| Hypergraph::build(n, edges).unwrap().hypergraph)
    })
}

proptest! {
    #[test]
    fn hyperedge_list_round_trips(h in arb_hypergraph()) {
        let text = to_hyperedge_list(&h);
        let back = parse_hyperedge_list(&text, Path::new("p.hg"), LoadOptions::default()).unwrap();
        prop_assert_eq!(&back.hypergraph, &h);
        prop_assert_eq!(back.duplicates, 0);
        prop_assert_eq!(to_hyperedge_list(&back.hypergraph), text);
    }

    #[test]
    fn relabelling_preserves_size_profile(h in arb_hypergraph(), seed in any::<u64>()) {
        let n = h.n_nodes();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut state = seed;
        for i in (1..n).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (state >> 33) as usize % (i + 1));
        }
        let g = h.relabel(&perm).unwrap();
        for d in h.sizes() {
            prop_assert_eq!(g.edges(d).len(), h.edges(d).len());
            for e in h.edges(d) {
                let mut mapped: Vec<usize> = e.iter().map(|&v| perm[v]).collect();
                mapped.sort_unstable();
                prop_assert!(g.edges(d).contains(&mapped));
            }
        }
    }
}

/// Needs the preprocessed contact hyperedge list; point `HYDY_SOCIOPATTERNS` at it to run.
#[test]
fn sociopatterns_statistics() {
    let Ok(path) = std::env::var("HYDY_SOCIOPATTERNS") else {
        eprintln!("HYDY_SOCIOPATTERNS not set; skipping");
        return;
    };
    let loaded = load_hyperedge_file(&path, LoadOptions { max_arity: 4, drop_oversized: true }).unwrap();
    let h = &loaded.hypergraph;
    assert_eq!(h.n_nodes(), 327);
    assert_eq!(h.edges(2).len(), 5498);
    assert_eq!(h.edges(3).len(), 2091);
    assert_eq!(h.edges(4).len(), 222);
    assert_eq!(h.edge_count(), 7811);
}
