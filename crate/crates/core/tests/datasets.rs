mod common;

use hydy_core::datasets::{make_point_dataset, make_trajectory_dataset, Dataset, GenerationSpec, HypergraphSource, InitLaw, Scenario};
use hydy_core::dynamics::{Family, UpdateFamily};
use hydy_core::{Error, Hypergraph};

fn spec(family: Family, p: usize, seed: u64) -> GenerationSpec {
    GenerationSpec {
        source: HypergraphSource::default_er(),
        dynamics: UpdateFamily::new(family, p).unwrap(),
        init: None,
        seed,
    }
}

#[test]
fn point_labels_match_closed_form() {
    for family in Family::ALL {
        for p in 2..=4 {
            let data = make_point_dataset(&spec(family, p, 40 + p as u64), 30).unwrap();
            assert_eq!(data.len(), 30);
            for (i, s) in data.samples.iter().enumerate() {
                let want = common::monolithic_rhs(data.hypergraph(i), family, p, &s.state);
                for (a, b) in s.derivative.iter().zip(&want) {
                    assert!((a - b).abs() < 1e-12, "{family} p={p} sample {i}");
                }
            }
        }
    }
}

#[test]
fn initial_states_follow_family_laws() {
    use std::f64::consts::PI;
    let cases = [(Family::Kuramoto, -PI, PI), (Family::Si, 0.0, 1.0), (Family::Mcm, 0.0, 1.0), (Family::Diffusion, -1.0, 1.0)];
    for (family, lo, hi) in cases {
        let data = make_point_dataset(&spec(family, 2, 7), 100).unwrap();
        let values: Vec<f64> = data.samples.iter().flat_map(|s| s.state.iter().copied()).collect();
        assert!(values.iter().all(|v| (lo..=hi).contains(v)), "{family}");
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        // E[u²] = 1/3 for the skewed law, midpoint otherwise; 2000 draws.
        let expected = if family == Family::Mcm { 1.0 / 3.0 } else { (lo + hi) / 2.0 };
        assert!((mean - expected).abs() < 0.05 * (hi - lo), "{family}: {mean}");
    }
    assert_eq!(InitLaw::Power { exponent: 2.0 }, InitLaw::for_family(Family::Mcm));
}

#[test]
fn directory_form_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let data = make_trajectory_dataset(&spec(Family::Kuramoto, 3, 8), 3, 10, 0.01).unwrap();
    assert_eq!(data.manifest.scenario, Scenario::Trajectory);
    data.write_dir(dir.path()).unwrap();
    let back = Dataset::read_dir(dir.path()).unwrap();
    assert_eq!(back, data);
    assert_eq!(back.fingerprint(), data.fingerprint());
    assert_eq!(back.to_csv(), data.to_csv());
}

#[test]
fn trajectory_samples_group_by_trajectory() {
    let data = make_trajectory_dataset(&spec(Family::Si, 2, 9), 4, 5, 0.01).unwrap();
    assert_eq!(data.len(), 20);
    assert_eq!(data.manifest.count, 20);
    assert_eq!(data.graphs.len(), 4);
    let groups = data.groups();
    for (i, s) in data.samples.iter().enumerate() {
        assert_eq!(s.trajectory, Some(i / 5));
        assert_eq!(s.step, Some(i % 5));
        assert_eq!(groups[i], i / 5);
        assert_eq!(s.graph, i / 5);
    }
    // Consecutive samples of one trajectory chain through the Euler update.
    for t in 0..4 {
        let (a, b) = (&data.samples[t], &data.samples[t + 1]);
        for i in 0..a.state.len() {
            assert!((a.state[i] + 0.01 * a.derivative[i] - b.state[i]).abs() < 1e-12);
        }
    }
}

#[test]
fn fixed_source_shares_one_graph() {
    let h = Hypergraph::build(5, [vec![0, 1], vec![1, 2, 3], vec![0, 3, 4]]).unwrap().hypergraph;
    let spec = GenerationSpec {
        source: HypergraphSource::Fixed { name: "toy".into(), hypergraph: h.clone() },
        dynamics: UpdateFamily::new(Family::Mcm, 2).unwrap(),
        init: Some(InitLaw::Uniform { low: 0.2, high: 0.4 }),
        seed: 10,
    };
    let data = make_point_dataset(&spec, 12).unwrap();
    assert_eq!(data.graphs.len(), 1);
    assert_eq!(data.graphs[0].hypergraph, h);
    assert!(data.samples.iter().all(|s| s.graph == 0 && s.state.iter().all(|v| (0.2..=0.4).contains(v))));
    assert_eq!(data.sizes().into_iter().collect::<Vec<_>>(), [2, 3]);
}

#[test]
fn generation_is_seeded() {
    let a = make_point_dataset(&spec(Family::Diffusion, 3, 11), 10).unwrap();
    let b = make_point_dataset(&spec(Family::Diffusion, 3, 11), 10).unwrap();
    let c = make_point_dataset(&spec(Family::Diffusion, 3, 12), 10).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_ne!(a.fingerprint(), c.fingerprint());
    assert!(matches!(make_point_dataset(&spec(Family::Si, 2, 1), 0), Err(Error::Invalid(_))));
}
