//! Numerical tools around subset-sum decompositions of update functions.
//!
//! [`reference`] holds closed forms of the shipped families that never enumerate subsets. They
//! are the independent side of the equivalence checks against [`UpdateFamily::edge_update`].

use std::collections::BTreeMap;

use itertools::Itertools;
use rand::Rng as _;

use crate::dynamics::UpdateFamily;
use crate::hypergraph::{CliqueWeights, Hypergraph};
use crate::seed;

/// Samples `trials` tuples of `d` values uniformly from `domain` and returns
/// `max |full_f(y, s) − Σ_{v ⊆ s, |v| = p−1} kernel(y, v)|`, where `y` is the first value and
/// `s` the remaining `d − 1`.
pub fn verify_decomposition<F, K>(
    full_f: F,
    kernel: K,
    p: usize,
    d: usize,
    trials: usize,
    rng_seed: u64,
    domain: (f64, f64),
) -> f64
where
    F: Fn(f64, &[f64]) -> f64,
    K: Fn(f64, &[f64]) -> f64,
{
    assert!(2 <= p && p <= d, "need 2 <= p <= d (p={p}, d={d})");
    let mut rng = seed::rng(rng_seed);
    let mut values = vec![0.0; d];
    let mut subset = Vec::with_capacity(p - 1);
    let mut worst = 0.0_f64;
    for _ in 0..trials.max(1) {
        for v in values.iter_mut() {
            *v = rng.random_range(domain.0..domain.1);
        }
        let (y, rest) = (values[0], &values[1..]);
        let decomposed: f64 = (0..rest.len())
            .combinations(p - 1)
            .map(|idx| {
                subset.clear();
                subset.extend(idx.iter().map(|&j| rest[j]));
                kernel(y, &subset)
            })
            .sum();
        let dev = (full_f(y, rest) - decomposed).abs();
        worst = if dev.is_nan() { f64::INFINITY } else { worst.max(dev) };
    }
    worst
}

/// Deviation between the subset-sum evaluator of `family` and its closed form on edges of size
/// `d`, over `trials` random tuples.
pub fn family_deviation(family: &UpdateFamily, d: usize, trials: usize, rng_seed: u64) -> f64 {
    let domain = match family.family {
        crate::dynamics::Family::Kuramoto => (-std::f64::consts::PI, std::f64::consts::PI),
        crate::dynamics::Family::Diffusion => (-1.0, 1.0),
        _ => (0.0, 1.0),
    };
    let mut rng = seed::rng(rng_seed);
    let mut worst = 0.0_f64;
    let mut edge = vec![0.0; d];
    for _ in 0..trials.max(1) {
        for v in edge.iter_mut() {
            *v = rng.random_range(domain.0..domain.1);
        }
        for center in 0..d {
            let subset_sum = family.edge_update(&edge, center).expect("valid center");
            let closed = reference::edge_update(family, &edge, center);
            worst = worst.max((subset_sum - closed).abs());
        }
    }
    worst
}

/// Upper bound `min(k, p_dyn)` on the effective order.
pub fn effective_order_bound(k_topological: usize, p_dynamical: usize) -> usize {
    k_topological.min(p_dynamical)
}

/// Dynamical order of a family of update functions given the order found for each edge size:
/// the decomposition has to hold for every size at once, so this is the maximum.
pub fn system_order(per_size: &BTreeMap<usize, usize>) -> Option<usize> {
    per_size.values().copied().max()
}

/// Pairwise Kuramoto on a hypergraph reduces to a weighted graph with `A = BᵀB`.
pub fn reduce_pairwise_kuramoto(h: &Hypergraph) -> CliqueWeights {
    h.clique_weights()
}

/// `log(y_1 ⋯ y_d)`, decomposable into pairs.
pub fn log_full(y: f64, rest: &[f64]) -> f64 {
    (y * rest.iter().product::<f64>()).ln()
}

/// Pairwise kernel for [`log_full`] on edges of size `d`: `log(a)/(d−1) + log(b)`.
pub fn log_pair_kernel(d: usize) -> impl Fn(f64, &[f64]) -> f64 {
    move |a, b| a.ln() / (d - 1) as f64 + b[0].ln()
}

/// Sine of the summed phase differences over the whole edge.
pub fn kuramoto_sine_of_sums(y: f64, rest: &[f64]) -> f64 {
    rest.iter().map(|&v| v - y).sum::<f64>().sin()
}

/// Pairwise sine coupling, the candidate kernel that fails for [`kuramoto_sine_of_sums`].
pub fn kuramoto_pair_kernel(y: f64, v: &[f64]) -> f64 {
    (v[0] - y).sin()
}

/// Closed forms of the shipped families, written in terms of elementary symmetric polynomials
/// `e_k` of the neighbour values rather than subset enumeration.
pub mod reference {
    use std::ops::{Add, Mul};

    use crate::dynamics::{Family, UpdateFamily};

    #[derive(Clone, Copy, Debug)]
    struct Complex(f64, f64);

    impl Add for Complex {
        type Output = Self;
        fn add(self, o: Self) -> Self {
            Complex(self.0 + o.0, self.1 + o.1)
        }
    }

    impl Mul for Complex {
        type Output = Self;
        fn mul(self, o: Self) -> Self {
            Complex(self.0 * o.0 - self.1 * o.1, self.0 * o.1 + self.1 * o.0)
        }
    }

    /// `a + bε` with `ε² = 0`.
    #[derive(Clone, Copy, Debug)]
    struct Dual(f64, f64);

    impl Add for Dual {
        type Output = Self;
        fn add(self, o: Self) -> Self {
            Dual(self.0 + o.0, self.1 + o.1)
        }
    }

    impl Mul for Dual {
        type Output = Self;
        fn mul(self, o: Self) -> Self {
            Dual(self.0 * o.0, self.0 * o.1 + self.1 * o.0)
        }
    }

    /// `e_k(z_1, …, z_m)` by the usual one-pass recurrence.
    fn elementary<T: Copy + Add<Output = T> + Mul<Output = T>>(zs: &[T], k: usize, zero: T, one: T) -> T {
        let mut e = vec![zero; k + 1];
        e[0] = one;
        for &z in zs {
            for m in (1..=k).rev() {
                e[m] = e[m] + e[m - 1] * z;
            }
        }
        e[k]
    }

    fn binomial(n: usize, k: usize) -> f64 {
        if k > n {
            return 0.0;
        }
        (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    }

    /// Monolithic `f_d` for `family` on `x_edge` with node `center` as the first argument.
    pub fn edge_update(family: &UpdateFamily, x_edge: &[f64], center: usize) -> f64 {
        let d = x_edge.len();
        let y = x_edge[center];
        let others: Vec<f64> =
            x_edge.iter().enumerate().filter(|&(j, _)| j != center).map(|(_, &v)| v).collect();
        let k = family.order.min(d) - 1;
        match family.family {
            Family::Diffusion => {
                binomial(d - 2, k - 1) * others.iter().map(|&v| v - y).sum::<f64>()
            }
            Family::Si => (1.0 - y) * elementary(&others, k, 0.0, 1.0),
            Family::Kuramoto => {
                let zs: Vec<Complex> =
                    others.iter().map(|&v| Complex((v - y).cos(), (v - y).sin())).collect();
                elementary(&zs, k, Complex(0.0, 0.0), Complex(1.0, 0.0)).1
            }
            Family::Mcm => {
                let df = d as f64;
                let zs: Vec<Dual> = others
                    .iter()
                    .map(|&v| {
                        let a = (-v / df).exp();
                        Dual(a, a * v)
                    })
                    .collect();
                let Dual(weights, weighted_sums) = elementary(&zs, k, Dual(0.0, 0.0), Dual(1.0, 0.0));
                (y - y / df).exp() * (weighted_sums - k as f64 * y * weights)
            }
        }
    }

    #[cfg(test)]
    mod tests {
        use super::*;

        #[test]
        fn elementary_small() {
            // e_2(1, 2, 3) = 2 + 3 + 6
            assert_eq!(elementary(&[1.0, 2.0, 3.0], 2, 0.0, 1.0), 11.0);
            assert_eq!(elementary(&[1.0, 2.0, 3.0], 0, 0.0, 1.0), 1.0);
        }

        #[test]
        fn binomials() {
            assert_eq!(binomial(2, 1), 2.0);
            assert_eq!(binomial(2, 0), 1.0);
            assert_eq!(binomial(4, 2), 6.0);
        }
    }
}
