//! Oracles shared by the integration tests. Nothing here calls into the code under test except
//! for plain data accessors.

#![allow(dead_code)]

use hydy_core::dynamics::Family;
use hydy_core::Hypergraph;

/// Elementary symmetric polynomial `e_k` over a two-component algebra with product `mul`.
fn elementary(values: &[(f64, f64)], k: usize, mul: impl Fn((f64, f64), (f64, f64)) -> (f64, f64)) -> (f64, f64) {
    let mut e = vec![(0.0, 0.0); k + 1];
    e[0] = (1.0, 0.0);
    for &v in values {
        for j in (1..=k).rev() {
            let t = mul(e[j - 1], v);
            e[j] = (e[j].0 + t.0, e[j].1 + t.1);
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

/// Monolithic `f_d(y, others)` of an order-`p` family, written without enumerating subsets.
pub fn monolithic(family: Family, p: usize, y: f64, others: &[f64]) -> f64 {
    let d = others.len() + 1;
    let k = p.min(d) - 1;
    match family {
        Family::Diffusion => binomial(d - 2, k - 1) * others.iter().map(|v| v - y).sum::<f64>(),
        Family::Si => {
            let real: Vec<(f64, f64)> = others.iter().map(|&v| (v, 0.0)).collect();
            (1.0 - y) * elementary(&real, k, |a, b| (a.0 * b.0, 0.0)).0
        }
        Family::Kuramoto => {
            let phases: Vec<(f64, f64)> = others.iter().map(|&v| ((v - y).cos(), (v - y).sin())).collect();
            elementary(&phases, k, |a, b| (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0)).1
        }
        Family::Mcm => {
            let df = d as f64;
            let duals: Vec<(f64, f64)> = others
                .iter()
                .map(|&v| {
                    let w = (-v / df).exp();
                    (w, w * v)
                })
                .collect();
            let (e0, e1) = elementary(&duals, k, |a, b| (a.0 * b.0, a.0 * b.1 + a.1 * b.0));
            (y - y / df).exp() * (e1 - k as f64 * y * e0)
        }
    }
}

/// Right-hand side assembled edge by edge from [`monolithic`].
pub fn monolithic_rhs(h: &Hypergraph, family: Family, p: usize, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for edge in h.iter_edges() {
        for &i in edge {
            let others: Vec<f64> = edge.iter().filter(|&&j| j != i).map(|&j| x[j]).collect();
            out[i] += monolithic(family, p, x[i], &others);
        }
    }
    out
}

/// Dense `BᵀB` from the edge-by-node incidence matrix `B`.
pub fn clique_matrix(h: &Hypergraph) -> Vec<Vec<f64>> {
    let n = h.n_nodes();
    let b: Vec<Vec<f64>> = h
        .iter_edges()
        .map(|e| {
            let mut row = vec![0.0; n];
            for &v in e {
                row[v] = 1.0;
            }
            row
        })
        .collect();
    let mut m = vec![vec![0.0; n]; n];
    for row in &b {
        for i in 0..n {
            for j in 0..n {
                m[i][j] += row[i] * row[j];
            }
        }
    }
    m
}

/// Pairwise Kuramoto on the clique expansion: `Σ_j (BᵀB)_ij sin(x_j − x_i)`.
pub fn clique_kuramoto(h: &Hypergraph, x: &[f64]) -> Vec<f64> {
    let m = clique_matrix(h);
    (0..x.len())
        .map(|i| (0..x.len()).filter(|&j| j != i).map(|j| m[i][j] * (x[j] - x[i]).sin()).sum())
        .collect()
}

/// Central difference of `f` at `theta` along every coordinate.
pub fn central_difference(theta: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut work = theta.to_vec();
    (0..theta.len())
        .map(|i| {
            work[i] = theta[i] + h;
            let up = f(&work);
            work[i] = theta[i] - h;
            let down = f(&work);
            work[i] = theta[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖, floor)`.
pub fn relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(floor)
}
