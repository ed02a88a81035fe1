//! Analytical hypergraph dynamics.
//!
//! Every family is defined by a p-ary kernel `φ(y_center, v)` where `v` holds `p − 1` neighbour
//! values. On a hyperedge of size `d` the update for a member is the sum of the kernel over all
//! `(p − 1)`-subsets of the other `d − 1` members; on edges with `d ≤ p` the kernel is applied to
//! the whole edge. The global right-hand side scatters these per-edge updates back onto the
//! nodes (`ẋ = Σ_d L_dᵀ F_d(L_d x)`).

use std::fmt;
use std::str::FromStr;

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::hypergraph::Hypergraph;
use crate::text;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Kuramoto,
    Si,
    Mcm,
    Diffusion,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Kuramoto, Family::Si, Family::Mcm, Family::Diffusion];

    pub fn name(self) -> &'static str {
        match self {
            Family::Kuramoto => "kuramoto",
            Family::Si => "si",
            Family::Mcm => "mcm",
            Family::Diffusion => "diffusion",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownFamily(s.to_string()))
    }
}

/// An analytical dynamics: a family together with its decomposition order `p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UpdateFamily {
    pub family: Family,
    pub order: usize,
}

impl UpdateFamily {
    pub fn new(family: Family, order: usize) -> Result<Self> {
        if order < 2 {
            return Err(Error::invalid(format!("decomposition order must be at least 2, got {order}")));
        }
        Ok(Self { family, order })
    }

    /// Number of kernel arguments used on an edge of size `d`.
    pub fn arity(&self, d: usize) -> usize {
        self.order.min(d)
    }

    /// `φᵖ_d(center, neighbours)`; `neighbours.len()` must be `arity(d) − 1`.
    pub fn kernel(&self, center: f64, neighbors: &[f64], d: usize) -> Result<f64> {
        let expected = self.arity(d) - 1;
        if neighbors.len() != expected {
            return Err(Error::ArityMismatch { expected, got: neighbors.len() });
        }
        Ok(kernel_value(self.family, center, neighbors, d))
    }

    /// `f_d(x_edge[center], {x_edge[j] : j ≠ center})` as a subset sum of kernels.
    pub fn edge_update(&self, x_edge: &[f64], center: usize) -> Result<f64> {
        let d = x_edge.len();
        if center >= d {
            return Err(Error::DimensionMismatch { expected: d, got: center });
        }
        let mut scratch = Vec::with_capacity(d);
        Ok(self.edge_update_with(x_edge, center, &mut scratch))
    }

    fn edge_update_with(&self, x_edge: &[f64], center: usize, scratch: &mut Vec<f64>) -> f64 {
        let d = x_edge.len();
        let y = x_edge[center];
        let k = self.arity(d) - 1;
        if k == d - 1 {
            scratch.clear();
            scratch.extend(x_edge.iter().enumerate().filter(|&(j, _)| j != center).map(|(_, &v)| v));
            return kernel_value(self.family, y, scratch, d);
        }
        (0..d)
            .filter(|&j| j != center)
            .combinations(k)
            .map(|subset| {
                scratch.clear();
                scratch.extend(subset.iter().map(|&j| x_edge[j]));
                kernel_value(self.family, y, scratch, d)
            })
            .sum()
    }
}

fn kernel_value(family: Family, y: f64, neighbors: &[f64], d: usize) -> f64 {
    match family {
        Family::Kuramoto => neighbors.iter().map(|&v| v - y).sum::<f64>().sin(),
        Family::Si => (1.0 - y) * neighbors.iter().product::<f64>(),
        Family::Mcm => {
            let total = y + neighbors.iter().sum::<f64>();
            let consensus: f64 = neighbors.iter().map(|&v| v - y).sum();
            (-(total / d as f64 - y)).exp() * consensus
        }
        Family::Diffusion => neighbors.iter().map(|&v| v - y).sum(),
    }
}

/// Anything that maps a state on a hypergraph to a derivative: the analytical families and the
/// learned model.
pub trait VectorField {
    fn rhs(&self, h: &Hypergraph, x: &[f64]) -> Result<Vec<f64>>;
}

impl VectorField for UpdateFamily {
    fn rhs(&self, h: &Hypergraph, x: &[f64]) -> Result<Vec<f64>> {
        evaluate_rhs(h, self, x)
    }
}

/// `ẋ_i = Σ_d Σ_{E ∈ ℰ_d, i ∈ E} f_d(x_i, {x_j : j ∈ E, j ≠ i})`. Isolated nodes get 0.
pub fn evaluate_rhs(h: &Hypergraph, family: &UpdateFamily, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != h.n_nodes() {
        return Err(Error::DimensionMismatch { expected: h.n_nodes(), got: x.len() });
    }
    let mut dx = vec![0.0; x.len()];
    let mut block = Vec::with_capacity(h.order());
    let mut scratch = Vec::with_capacity(h.order());
    for edge in h.iter_edges() {
        block.clear();
        block.extend(edge.iter().map(|&v| x[v]));
        for (pos, &node) in edge.iter().enumerate() {
            dx[node] += family.edge_update_with(&block, pos, &mut scratch);
        }
    }
    Ok(dx)
}

/// Uniformly spaced states `x(0), x(Δ), …, x(TΔ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn last(&self) -> &[f64] {
        self.states.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Forward Euler: `x_{t+1} = x_t + Δ·rhs(x_t)`. Fails on the first non-finite state.
pub fn integrate_euler<F: VectorField + ?Sized>(
    field: &F,
    h: &Hypergraph,
    x0: &[f64],
    steps: usize,
    dt: f64,
) -> Result<Trajectory> {
    if steps == 0 {
        return Err(Error::invalid("integration needs at least one step"));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("time step must be positive, got {dt}")));
    }
    if x0.len() != h.n_nodes() {
        return Err(Error::DimensionMismatch { expected: h.n_nodes(), got: x0.len() });
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { step: 0 });
    }
    let mut states = Vec::with_capacity(steps + 1);
    states.push(x0.to_vec());
    for step in 1..=steps {
        let current = &states[step - 1];
        let dx = field.rhs(h, current)?;
        let next: Vec<f64> = current.iter().zip(&dx).map(|(x, v)| x + dt * v).collect();
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step });
        }
        states.push(next);
    }
    Ok(Trajectory { dt, states })
}

/// Provenance record written at the top of a trajectory file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryHeader {
    pub hypergraph: String,
    pub family: String,
    pub p: usize,
    pub dt: f64,
    pub steps: usize,
    pub seed: u64,
}

/// `# {header json}` followed by one comma-separated row of node values per time step.
pub fn trajectory_to_csv(header: &TrajectoryHeader, traj: &Trajectory) -> String {
    let mut out = String::new();
    out.push_str("# ");
    out.push_str(&serde_json::to_string(header).expect("header serialises"));
    out.push('\n');
    for state in &traj.states {
        out.push_str(&text::join_f64(state, ","));
        out.push('\n');
    }
    out
}

pub fn trajectory_from_csv(src: &str) -> Result<(TrajectoryHeader, Trajectory)> {
    let mut lines = src.lines().enumerate();
    let bad = |line: usize, msg: String| Error::Parse { path: "<trajectory>".into(), line, msg };
    let (_, first) = lines.next().ok_or_else(|| bad(1, "empty trajectory file".into()))?;
    let json = first.strip_prefix("# ").ok_or_else(|| bad(1, "missing header record".into()))?;
    let header: TrajectoryHeader = serde_json::from_str(json).map_err(|e| bad(1, e.to_string()))?;
    let states = lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| text::parse_f64s(l.split(',')).map_err(|m| bad(i + 1, m)))
        .collect::<Result<Vec<_>>>()?;
    Ok((header.clone(), Trajectory { dt: header.dt, states }))
}
