mod common;

use rand::Rng as _;

use hydy_core::mlp::{Activation, MlpParams, MlpSpec};
use hydy_core::seed;

/// Dense forward pass written out with nested loops over the flat parameter layout: per layer a
/// row-major `fan_out × fan_in` weight block followed by `fan_out` biases.
fn reference_forward(net: &MlpParams, x: &[f64]) -> f64 {
    let theta = net.as_slice();
    let dims = net.spec().layer_dims();
    let mut a = x.to_vec();
    let mut off = 0;
    for (l, &(fan_in, fan_out)) in dims.iter().enumerate() {
        let mut z = vec![0.0; fan_out];
        for o in 0..fan_out {
            let mut acc = theta[off + fan_in * fan_out + o];
            for i in 0..fan_in {
                acc += theta[off + o * fan_in + i] * a[i];
            }
            z[o] = if l + 1 < dims.len() {
                match net.spec().activation {
                    Activation::Tanh => acc.tanh(),
                    Activation::Relu => acc.max(0.0),
                    Activation::Linear => acc,
                }
            } else {
                acc
            };
        }
        off += fan_in * fan_out + fan_out;
        a = z;
    }
    a[0]
}

fn random_net(rng: &mut seed::Rng, activation: Activation) -> MlpParams {
    let arity = rng.random_range(1..=5);
    let depth = rng.random_range(0..=3);
    let hidden: Vec<usize> = (0..depth).map(|_| rng.random_range(1..=12)).collect();
    MlpParams::init(MlpSpec::new(arity, hidden, activation).unwrap(), rng.random())
}

#[test]
fn forward_matches_matrix_chain() {
    let mut rng = seed::rng(21);
    for activation in [Activation::Tanh, Activation::Relu, Activation::Linear] {
        for _ in 0..100 {
            let net = random_net(&mut rng, activation);
            assert_eq!(net.len(), net.spec().param_count());
            let x: Vec<f64> = (0..net.arity()).map(|_| rng.random_range(-2.0..2.0)).collect();
            let got = net.forward(&x).unwrap();
            let want = reference_forward(&net, &x);
            assert!((got - want).abs() <= 1e-14 * want.abs().max(1.0), "{activation:?}: {got} vs {want}");
        }
    }
}

#[test]
fn gradients_match_central_differences() {
    let mut rng = seed::rng(22);
    for trial in 0..100 {
        let activation = if trial % 4 == 3 { Activation::Linear } else { Activation::Tanh };
        let net = random_net(&mut rng, activation);
        let x: Vec<f64> = (0..net.arity()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let upstream = rng.random_range(-2.0..2.0);
        let (g_theta, g_x) = net.gradient(&x, upstream).unwrap();

        let spec = net.spec().clone();
        let fd_theta = common::central_difference(net.as_slice(), 1e-6, |theta| {
            upstream * reference_forward(&MlpParams::from_flat(spec.clone(), theta.to_vec()).unwrap(), &x)
        });
        let fd_x = common::central_difference(&x, 1e-6, |xs| upstream * reference_forward(&net, xs));
        assert!(common::relative_error(&g_theta, &fd_theta, 1e-3) < 1e-6, "trial {trial}");
        assert!(common::relative_error(&g_x, &fd_x, 1e-3) < 1e-6, "trial {trial}");
    }
}

#[test]
fn text_form_round_trips_exactly() {
    let mut rng = seed::rng(23);
    for _ in 0..20 {
        let net = random_net(&mut rng, Activation::Tanh);
        let back = MlpParams::from_text(&net.to_text()).unwrap();
        assert_eq!(back, net);
    }
}

#[test]
fn initialisation_is_seeded() {
    let spec = MlpSpec::default_for(3);
    assert_eq!(MlpParams::init(spec.clone(), 5), MlpParams::init(spec.clone(), 5));
    assert_ne!(MlpParams::init(spec.clone(), 5), MlpParams::init(spec, 6));
}
