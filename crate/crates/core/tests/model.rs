mod common;

use std::collections::BTreeMap;

use rand::Rng as _;

use hydy_core::dynamics::{evaluate_rhs, Family, UpdateFamily};
use hydy_core::hypergraph::generate_er;
use hydy_core::mlp::{Activation, MlpParams, MlpSpec};
use hydy_core::model::{loss, loss_and_gradient, train, Architecture, HyDyModel, Observation, Penalty, TrainConfig};
use hydy_core::{seed, Error, Hypergraph};

fn small_arch() -> Architecture {
    Architecture { hidden: vec![6, 5], activation: Activation::Tanh }
}

/// All ordered selections of `k` distinct entries of `items`.
fn arrangements(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for (i, &first) in items.iter().enumerate() {
        let rest: Vec<usize> = items.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &v)| v).collect();
        for mut tail in arrangements(&rest, k - 1) {
            tail.insert(0, first);
            out.push(tail);
        }
    }
    out
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|v| v as f64).product()
}

/// Σ over neighbour subsets of size `a − 1`, each averaged over its `(a − 1)!` orderings.
fn enumerated_update(model: &HyDyModel, x_edge: &[f64], center: usize) -> f64 {
    let d = x_edge.len();
    let a = d.min(model.p_model());
    let net = model.network(d).unwrap();
    let others: Vec<usize> = (0..d).filter(|&j| j != center).collect();
    let total: f64 = arrangements(&others, a - 1)
        .iter()
        .map(|order| {
            let mut row = vec![x_edge[center]];
            row.extend(order.iter().map(|&j| x_edge[j]));
            net.forward(&row).unwrap()
        })
        .sum();
    total / factorial(a - 1)
}

#[test]
fn edge_update_matches_enumeration() {
    let mut rng = seed::rng(31);
    for p_model in 2..=5 {
        let model = HyDyModel::new(p_model, 2..=5, &small_arch(), 100 + p_model as u64).unwrap();
        for d in 2..=5 {
            assert_eq!(model.network(d).unwrap().arity(), d.min(p_model));
            for _ in 0..10 {
                let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
                let center = rng.random_range(0..d);
                let got = model.edge_update(&x, center).unwrap();
                let want = enumerated_update(&model, &x, center);
                assert!((got - want).abs() < 1e-12 * want.abs().max(1.0), "p={p_model} d={d}");
            }
        }
    }
}

#[test]
fn edge_update_ignores_neighbour_order() {
    let mut rng = seed::rng(32);
    let model = HyDyModel::new(3, [4, 5], &small_arch(), 7).unwrap();
    for d in [4, 5] {
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let base = model.edge_update(&x, 0).unwrap();
        let mut y = x.clone();
        y[1..].reverse();
        assert!((model.edge_update(&y, 0).unwrap() - base).abs() < 1e-12);
    }
}

fn er(n: usize, s: u64) -> Hypergraph {
    generate_er(n, &BTreeMap::from([(2, 0.2), (3, 0.06), (4, 0.02)]), s).unwrap()
}

#[test]
fn prediction_sums_edge_updates_and_is_equivariant() {
    let mut rng = seed::rng(33);
    let model = HyDyModel::new(3, 2..=4, &small_arch(), 8).unwrap();
    let h = er(9, 1);
    let x: Vec<f64> = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();
    let got = model.predict_rhs(&h, &x).unwrap();
    let mut want = vec![0.0; 9];
    for e in h.iter_edges() {
        let block: Vec<f64> = e.iter().map(|&v| x[v]).collect();
        for (pos, &node) in e.iter().enumerate() {
            want[node] += enumerated_update(&model, &block, pos);
        }
    }
    assert!(common::relative_error(&got, &want, 1.0) < 1e-12);

    let mut perm: Vec<usize> = (0..9).collect();
    for i in (1..9).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    let g = h.relabel(&perm).unwrap();
    let mut y = vec![0.0; 9];
    for i in 0..9 {
        y[perm[i]] = x[i];
    }
    let fy = model.predict_rhs(&g, &y).unwrap();
    for i in 0..9 {
        assert!((got[i] - fy[perm[i]]).abs() < 1e-12);
    }
}

#[test]
fn missing_network_is_reported() {
    let model = HyDyModel::new(2, [2], &small_arch(), 1).unwrap();
    let h = Hypergraph::build(3, [[0, 1, 2]]).unwrap().hypergraph;
    assert!(matches!(model.predict_rhs(&h, &[0.0; 3]), Err(Error::MissingNetwork(3))));
    assert!(HyDyModel::new(1, [2], &small_arch(), 1).is_err());
}

fn point_data(family: Family, p: usize, n_graphs: usize, seed_: u64) -> Vec<(Hypergraph, Vec<f64>, Vec<f64>)> {
    let mut rng = seed::rng(seed_);
    let dyn_ = UpdateFamily::new(family, p).unwrap();
    (0..n_graphs)
        .map(|g| {
            let h = er(7, seed_ * 100 + g as u64);
            let x: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
            let dx = evaluate_rhs(&h, &dyn_, &x).unwrap();
            (h, x, dx)
        })
        .collect()
}

fn observations(data: &[(Hypergraph, Vec<f64>, Vec<f64>)]) -> Vec<Observation<'_>> {
    data.iter().map(|(h, x, dx)| Observation { hypergraph: h, state: x, derivative: dx }).collect()
}

#[test]
fn squared_penalty_adds_twice_lambda_theta() {
    let data = point_data(Family::Diffusion, 2, 4, 34);
    let obs = observations(&data);
    let model = HyDyModel::new(3, 2..=4, &small_arch(), 9).unwrap();
    let lambda = 0.37;
    let (_, plain) = loss_and_gradient(&model, &obs, 0.0, Penalty::SquaredNorm).unwrap();
    let (_, reg) = loss_and_gradient(&model, &obs, lambda, Penalty::SquaredNorm).unwrap();
    for d in 2..=4 {
        let theta = model.network(d).unwrap().as_slice();
        for (i, &t) in theta.iter().enumerate() {
            let diff = reg.per_size[&d][i] - plain.per_size[&d][i];
            assert!((diff - 2.0 * lambda * t).abs() < 1e-12);
        }
    }
    let l0 = loss(&model, &obs, 0.0, Penalty::SquaredNorm).unwrap();
    let l1 = loss(&model, &obs, lambda, Penalty::SquaredNorm).unwrap();
    assert!((l1 - l0 - lambda * model.theta_norm().powi(2)).abs() < 1e-10);
}

#[test]
fn l1_loss_matches_direct_sum() {
    let data = point_data(Family::Kuramoto, 3, 5, 35);
    let obs = observations(&data);
    let model = HyDyModel::new(3, 2..=4, &small_arch(), 10).unwrap();
    let direct: f64 = data
        .iter()
        .map(|(h, x, dx)| model.predict_rhs(h, x).unwrap().iter().zip(dx).map(|(a, b)| (a - b).abs()).sum::<f64>())
        .sum();
    let got = loss(&model, &obs, 0.5, Penalty::Norm).unwrap();
    assert!((got - direct - 0.5 * model.theta_norm()).abs() < 1e-10);
}

#[test]
fn full_batch_training_decreases_loss_at_small_rate() {
    let data = point_data(Family::Si, 2, 6, 36);
    let obs = observations(&data);
    let model = HyDyModel::new(2, 2..=4, &small_arch(), 11).unwrap();
    let cfg = TrainConfig {
        lambda: 0.0,
        learning_rate: 1e-4,
        final_learning_rate: 1e-4,
        epochs: 40,
        batch_size: obs.len(),
        seed: 1,
        ..TrainConfig::default()
    };
    let out = train(model, &obs, &cfg).unwrap();
    for w in out.epoch_losses.windows(2) {
        assert!(w[1] <= w[0], "{:?}", out.epoch_losses);
    }
}

#[test]
fn memorises_a_single_sample() {
    let data = point_data(Family::Diffusion, 2, 1, 37);
    let obs = observations(&data);
    let model = HyDyModel::new(2, 2..=4, &Architecture { hidden: vec![8], activation: Activation::Tanh }, 12).unwrap();
    let cfg = TrainConfig {
        lambda: 0.0,
        learning_rate: 3e-2,
        final_learning_rate: 1e-6,
        epochs: 2000,
        batch_size: 1,
        seed: 2,
        ..TrainConfig::default()
    };
    let out = train(model, &obs, &cfg).unwrap();
    let last = loss(&out.model, &obs, 0.0, Penalty::Norm).unwrap();
    assert!(last < 1e-3, "{last}");
    assert_eq!(out.model.train_config.as_ref(), Some(&cfg));
}

#[test]
fn lambda_search_lands_next_to_exhaustive_best() {
    // Noisy quadratic toy regression y = a·x² + noise fitted by ridge-shrunk least squares; the
    // validation error is minimised by exhaustive search over the same grid.
    let mut rng = seed::rng(39);
    let xs: Vec<f64> = (0..40).map(|_| rng.random_range(-1.0..1.0)).collect();
    let ys: Vec<f64> = xs.iter().map(|x| 0.8 * x * x + rng.random_range(-0.3..0.3)).collect();
    let (fit, val) = (0..30, 30..40);
    let score = |lambda: f64| -> f64 {
        let num: f64 = fit.clone().map(|i| xs[i].powi(2) * ys[i]).sum();
        let den: f64 = fit.clone().map(|i| xs[i].powi(4)).sum::<f64>() + lambda;
        let a = num / den;
        val.clone().map(|i| (a * xs[i].powi(2) - ys[i]).abs()).sum::<f64>() / 10.0
    };
    let grid: Vec<f64> = (0..12).map(|i| 10f64.powf(-4.0 + 0.5 * i as f64)).collect();
    let search = hydy_core::model::select_lambda(&grid, |l| Ok(score(l))).unwrap();
    let brute = grid.iter().copied().min_by(|a, b| score(*a).total_cmp(&score(*b))).unwrap();
    let pos = |l: f64| grid.iter().position(|&g| g == l).unwrap() as i64;
    assert!((pos(search.best) - pos(brute)).abs() <= 1);
    assert_eq!(search.scores.len(), grid.len());
}

#[test]
fn training_is_deterministic() {
    let data = point_data(Family::Mcm, 3, 8, 38);
    let obs = observations(&data);
    let cfg = TrainConfig { epochs: 5, batch_size: 3, seed: 4, ..TrainConfig::default() };
    let run = || train(HyDyModel::new(3, 2..=4, &small_arch(), 13).unwrap(), &obs, &cfg).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.epoch_losses, b.epoch_losses);
    assert_eq!(a.model, b.model);
}

#[test]
fn bundle_round_trips() {
    let mut model = HyDyModel::new(3, 2..=4, &small_arch(), 14).unwrap();
    model.dataset_fingerprint = Some("abc".into());
    model.train_config = Some(TrainConfig::default());
    let back = HyDyModel::from_bundle(&model.to_bundle()).unwrap();
    assert_eq!(back, model);
    let broken = model.to_bundle().replacen("mlp", "nlp", 1);
    assert!(HyDyModel::from_bundle(&broken).is_err());
}

#[test]
fn from_networks_checks_arity() {
    let good = MlpParams::zeros(MlpSpec::new(2, vec![], Activation::Linear).unwrap());
    let bad = MlpParams::zeros(MlpSpec::new(3, vec![], Activation::Linear).unwrap());
    assert!(HyDyModel::from_networks(2, BTreeMap::from([(3, good)])).is_ok());
    assert!(HyDyModel::from_networks(2, BTreeMap::from([(3, bad)])).is_err());
}
