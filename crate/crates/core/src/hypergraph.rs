//! Hypergraph topology.
//!
//! A [`Hypergraph`] stores its hyperedges grouped by size. Members are sorted, size classes are
//! sorted lexicographically and duplicates are removed at construction, so two hypergraphs with
//! the same edge *sets* compare equal.
//!
//! The lifting operator that collects node states into per-edge blocks is never built as a dense
//! matrix; [`IncidenceView`] is its sparse form (node -> containing edges of one size).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;
use std::sync::OnceLock;

use itertools::Itertools;
use rand::Rng as _;

use crate::{seed, Error, Result};

/// Upper bound on hyperedge size. The learned model enumerates all orderings of an edge's
/// non-center members, so this stays small.
pub const DEFAULT_MAX_ARITY: usize = 5;

#[derive(Debug, Clone)]
pub struct Hypergraph {
    n_nodes: usize,
    edges_by_size: BTreeMap<usize, Vec<Vec<usize>>>,
    incidence: OnceLock<BTreeMap<usize, IncidenceView>>,
}

impl PartialEq for Hypergraph {
    fn eq(&self, other: &Self) -> bool {
        self.n_nodes == other.n_nodes && self.edges_by_size == other.edges_by_size
    }
}

impl Eq for Hypergraph {}

/// A freshly built hypergraph together with the number of duplicate hyperedges that were dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct Built {
    pub hypergraph: Hypergraph,
    pub duplicates: usize,
}

impl Hypergraph {
    pub fn empty(n_nodes: usize) -> Self {
        Self::from_parts(n_nodes, BTreeMap::new())
    }

    fn from_parts(n_nodes: usize, edges_by_size: BTreeMap<usize, Vec<Vec<usize>>>) -> Self {
        Self { n_nodes, edges_by_size, incidence: OnceLock::new() }
    }

    /// Builds a hypergraph with the default arity cap ([`DEFAULT_MAX_ARITY`]).
    pub fn build<I, E>(n_nodes: usize, hyperedges: I) -> Result<Built>
    where
        I: IntoIterator<Item = E>,
        E: AsRef<[usize]>,
    {
        Self::build_with_max_arity(n_nodes, hyperedges, DEFAULT_MAX_ARITY)
    }

    pub fn build_with_max_arity<I, E>(n_nodes: usize, hyperedges: I, max_arity: usize) -> Result<Built>
    where
        I: IntoIterator<Item = E>,
        E: AsRef<[usize]>,
    {
        let mut classes: BTreeMap<usize, BTreeSet<Vec<usize>>> = BTreeMap::new();
        let mut duplicates = 0;
        for edge in hyperedges {
            let edge = edge.as_ref();
            let mut members = edge.to_vec();
            members.sort_unstable();
            if let Some(w) = members.windows(2).find(|w| w[0] == w[1]) {
                return Err(Error::RepeatedNode { edge: edge.to_vec(), node: w[0] });
            }
            if members.len() < 2 {
                return Err(Error::EdgeTooSmall { edge: edge.to_vec() });
            }
            if let Some(&node) = members.iter().find(|&&v| v >= n_nodes) {
                return Err(Error::NodeOutOfRange { node, n_nodes });
            }
            if members.len() > max_arity {
                return Err(Error::ArityTooLarge { size: members.len(), max: max_arity });
            }
            if !classes.entry(members.len()).or_default().insert(members) {
                duplicates += 1;
            }
        }
        let edges_by_size = classes
            .into_iter()
            .map(|(d, set)| (d, set.into_iter().collect()))
            .collect();
        Ok(Built { hypergraph: Self::from_parts(n_nodes, edges_by_size), duplicates })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// Topological order: the size of the largest hyperedge, or 0 without edges.
    pub fn order(&self) -> usize {
        self.edges_by_size.keys().next_back().copied().unwrap_or(0)
    }

    /// Sizes present, ascending.
    pub fn sizes(&self) -> impl Iterator<Item = usize> + '_ {
        self.edges_by_size.keys().copied()
    }

    /// Hyperedges of size `d`, lexicographically sorted (empty if none).
    pub fn edges(&self, d: usize) -> &[Vec<usize>] {
        self.edges_by_size.get(&d).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn edge_count(&self) -> usize {
        self.edges_by_size.values().map(Vec::len).sum()
    }

    /// All hyperedges ordered by (size, members).
    pub fn iter_edges(&self) -> impl Iterator<Item = &[usize]> + '_ {
        self.edges_by_size.values().flatten().map(Vec::as_slice)
    }

    /// Node -> indices (into [`Hypergraph::edges`]) of the size-`d` edges containing it.
    /// An absent size yields an empty view.
    pub fn incidence_view(&self, d: usize) -> IncidenceView {
        let cache = self.incidence.get_or_init(|| {
            self.edges_by_size
                .iter()
                .map(|(&d, edges)| {
                    let mut lists = vec![Vec::new(); self.n_nodes];
                    for (alpha, edge) in edges.iter().enumerate() {
                        for &v in edge {
                            lists[v].push(alpha);
                        }
                    }
                    (d, IncidenceView { d, lists })
                })
                .collect()
        });
        cache
            .get(&d)
            .cloned()
            .unwrap_or_else(|| IncidenceView { d, lists: vec![Vec::new(); self.n_nodes] })
    }

    /// Co-membership counts `A = BᵀB`.
    pub fn clique_weights(&self) -> CliqueWeights {
        let n = self.n_nodes;
        let mut counts = vec![0u32; n * n];
        for edge in self.iter_edges() {
            for &i in edge {
                for &j in edge {
                    counts[i * n + j] += 1;
                }
            }
        }
        CliqueWeights { n, counts }
    }

    /// Relabels node `i` as `perm[i]`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Hypergraph> {
        if perm.len() != self.n_nodes {
            return Err(Error::DimensionMismatch { expected: self.n_nodes, got: perm.len() });
        }
        let edges: Vec<Vec<usize>> =
            self.iter_edges().map(|e| e.iter().map(|&v| perm[v]).collect()).collect();
        Ok(Self::build_with_max_arity(self.n_nodes, edges, usize::MAX)?.hypergraph)
    }

    /// Copy without the hyperedges larger than `max_size`.
    pub fn truncated(&self, max_size: usize) -> Hypergraph {
        let edges = self
            .edges_by_size
            .iter()
            .filter(|(&d, _)| d <= max_size)
            .map(|(&d, e)| (d, e.clone()))
            .collect();
        Self::from_parts(self.n_nodes, edges)
    }
}

/// Sparse lifting structure for one edge size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IncidenceView {
    d: usize,
    lists: Vec<Vec<usize>>,
}

impl IncidenceView {
    pub fn size(&self) -> usize {
        self.d
    }

    pub fn edges_of(&self, node: usize) -> &[usize] {
        &self.lists[node]
    }

    /// `Σ_i |edges_of(i)|`, which equals `d · |E_d|`.
    pub fn degree_sum(&self) -> usize {
        self.lists.iter().map(Vec::len).sum()
    }
}

/// Dense symmetric matrix `BᵀB` of co-membership counts. Diagonal entries hold node degrees.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliqueWeights {
    n: usize,
    counts: Vec<u32>,
}

impl CliqueWeights {
    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.counts[i * self.n + j]
    }

    /// Pairwise Kuramoto on the weighted clique expansion: `Σ_{j≠i} A_ij sin(x_j − x_i)`.
    pub fn graph_kuramoto_rhs(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: x.len() });
        }
        Ok((0..self.n)
            .map(|i| {
                (0..self.n)
                    .filter(|&j| j != i)
                    .map(|j| f64::from(self.get(i, j)) * (x[j] - x[i]).sin())
                    .sum()
            })
            .collect())
    }
}

/// Random hypergraph where every `d`-subset of the nodes is included independently with
/// probability `probs[d]`. Subsets are visited size by size in lexicographic order, one uniform
/// draw each, so the result is a pure function of the arguments.
pub fn generate_er(n_nodes: usize, probs: &BTreeMap<usize, f64>, rng_seed: u64) -> Result<Hypergraph> {
    for (&d, &p) in probs {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidProbability { size: d, prob: p });
        }
        if d < 2 {
            return Err(Error::invalid(format!("hyperedge size {d} is below 2")));
        }
        if d > n_nodes {
            return Err(Error::invalid(format!("hyperedge size {d} exceeds node count {n_nodes}")));
        }
        if d > DEFAULT_MAX_ARITY {
            return Err(Error::ArityTooLarge { size: d, max: DEFAULT_MAX_ARITY });
        }
    }
    let mut rng = seed::rng(rng_seed);
    let mut edges_by_size = BTreeMap::new();
    for (&d, &p) in probs {
        let chosen: Vec<Vec<usize>> = (0..n_nodes)
            .combinations(d)
            .filter(|_| rng.random::<f64>() < p)
            .collect();
        if !chosen.is_empty() {
            edges_by_size.insert(d, chosen);
        }
    }
    Ok(Hypergraph::from_parts(n_nodes, edges_by_size))
}

/// The edge probabilities used for the synthetic suite: 0.01 for pairs, 0.001 for 3- and
/// 4-edges, on 20 nodes.
pub fn default_er_probs() -> BTreeMap<usize, f64> {
    BTreeMap::from([(2, 0.01), (3, 0.001), (4, 0.001)])
}

// ---------------------------------------------------------------------------------------------
// Hyperedge-list files
// ---------------------------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoadOptions {
    pub max_arity: usize,
    /// Drop hyperedges above `max_arity` instead of failing.
    pub drop_oversized: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self { max_arity: DEFAULT_MAX_ARITY, drop_oversized: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Loaded {
    pub hypergraph: Hypergraph,
    /// `node_ids[i]` is the id used in the file for dense node `i`.
    pub node_ids: Vec<u64>,
    pub duplicates: usize,
    pub dropped_oversized: usize,
}

/// Parses the hyperedge-list format:
///
/// ```text
/// # comment
/// nodes 3
/// 0 1
/// 0 1 2
/// ```
///
/// With a `nodes N` header ids are taken as-is and must be below `N`. Without it, the ids seen
/// are remapped densely in ascending order.
pub fn parse_hyperedge_list(text: &str, origin: &Path, opts: LoadOptions) -> Result<Loaded> {
    let err = |line: usize, msg: String| Error::Parse { path: origin.to_path_buf(), line, msg };
    let mut declared: Option<usize> = None;
    let mut raw: Vec<(usize, Vec<u64>)> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("nodes") {
            if declared.is_some() || !raw.is_empty() {
                return Err(err(lineno, "`nodes` must be the first non-comment line".into()));
            }
            let n = rest
                .trim()
                .parse::<usize>()
                .map_err(|e| err(lineno, format!("bad node count: {e}")))?;
            declared = Some(n);
            continue;
        }
        let ids = line
            .split_whitespace()
            .map(|t| t.parse::<u64>().map_err(|e| err(lineno, format!("bad node id `{t}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let unique: BTreeSet<u64> = ids.iter().copied().collect();
        if unique.len() != ids.len() {
            return Err(err(lineno, "hyperedge repeats a node".into()));
        }
        if ids.len() < 2 {
            return Err(err(lineno, "hyperedge has fewer than two members".into()));
        }
        raw.push((lineno, ids));
    }

    let mut dropped_oversized = 0;
    let mut kept = Vec::with_capacity(raw.len());
    for (lineno, ids) in raw {
        if ids.len() > opts.max_arity {
            if opts.drop_oversized {
                dropped_oversized += 1;
                continue;
            }
            return Err(err(
                lineno,
                format!("hyperedge of size {} exceeds the maximum arity {}", ids.len(), opts.max_arity),
            ));
        }
        kept.push((lineno, ids));
    }

    let (n_nodes, node_ids, edges) = match declared {
        Some(n) => {
            let mut edges = Vec::with_capacity(kept.len());
            for (lineno, ids) in kept {
                if let Some(&bad) = ids.iter().find(|&&v| v >= n as u64) {
                    return Err(err(
                        lineno,
                        format!("node id {bad} inconsistent with declared node count {n}"),
                    ));
                }
                edges.push(ids.into_iter().map(|v| v as usize).collect::<Vec<_>>());
            }
            (n, (0..n as u64).collect::<Vec<_>>(), edges)
        }
        None => {
            let ids: Vec<u64> =
                kept.iter().flat_map(|(_, e)| e.iter().copied()).collect::<BTreeSet<_>>().into_iter().collect();
            let index: BTreeMap<u64, usize> = ids.iter().enumerate().map(|(i, &v)| (v, i)).collect();
            let edges = kept.into_iter().map(|(_, e)| e.iter().map(|v| index[v]).collect()).collect();
            (ids.len(), ids, edges)
        }
    };
    let built = Hypergraph::build_with_max_arity(n_nodes, edges, opts.max_arity)?;
    Ok(Loaded { hypergraph: built.hypergraph, node_ids, duplicates: built.duplicates, dropped_oversized })
}

pub fn load_hyperedge_file(path: impl AsRef<Path>, opts: LoadOptions) -> Result<Loaded> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_hyperedge_list(&text, path, opts)
}

/// Canonical text form: `nodes N`, then edges by (size, members).
pub fn to_hyperedge_list(h: &Hypergraph) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "nodes {}", h.n_nodes());
    for edge in h.iter_edges() {
        let _ = writeln!(out, "{}", edge.iter().join(" "));
    }
    out
}

pub fn save_hyperedge_file(h: &Hypergraph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_hyperedge_list(h)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hg(n: usize, edges: &[&[usize]]) -> Hypergraph {
        Hypergraph::build(n, edges.iter().copied()).unwrap().hypergraph
    }

    #[test]
    fn build_groups_by_size() {
        let h = hg(3, &[&[0, 1], &[0, 1, 2]]);
        assert_eq!(h.order(), 3);
        assert_eq!(h.edges(2), &[vec![0, 1]]);
        assert_eq!(h.edges(3), &[vec![0, 1, 2]]);
    }

    #[test]
    fn build_removes_duplicates() {
        let built = Hypergraph::build(3, [vec![0, 1], vec![1, 0]]).unwrap();
        assert_eq!(built.duplicates, 1);
        assert_eq!(built.hypergraph.edges(2).len(), 1);
    }

    #[test]
    fn build_rejects_bad_edges() {
        assert!(matches!(
            Hypergraph::build(3, [vec![0, 3]]),
            Err(Error::NodeOutOfRange { node: 3, n_nodes: 3 })
        ));
        assert!(matches!(Hypergraph::build(3, [vec![1]]), Err(Error::EdgeTooSmall { .. })));
        assert!(matches!(Hypergraph::build(3, [vec![1, 1]]), Err(Error::RepeatedNode { .. })));
        assert!(matches!(
            Hypergraph::build(10, [vec![0, 1, 2, 3, 4, 5]]),
            Err(Error::ArityTooLarge { size: 6, max: 5 })
        ));
        assert!(Hypergraph::build_with_max_arity(10, [vec![0, 1, 2, 3, 4, 5]], 6).is_ok());
    }

    #[test]
    fn empty_hypergraph_has_order_zero() {
        assert_eq!(Hypergraph::empty(4).order(), 0);
    }

    #[test]
    fn incidence_of_path() {
        let h = hg(3, &[&[0, 1], &[1, 2]]);
        let view = h.incidence_view(2);
        assert_eq!(view.edges_of(1), &[0, 1]);
        assert_eq!(view.edges_of(0), &[0]);
        assert_eq!(view.degree_sum(), 4);
    }

    #[test]
    fn incidence_of_single_triangle() {
        let h = hg(3, &[&[0, 1, 2]]);
        let view = h.incidence_view(3);
        for v in 0..3 {
            assert_eq!(view.edges_of(v), &[0]);
        }
        assert_eq!(h.incidence_view(4).degree_sum(), 0);
    }

    #[test]
    fn clique_weights_small_cases() {
        let w = hg(3, &[&[0, 1, 2]]).clique_weights();
        assert_eq!((w.get(0, 1), w.get(0, 2), w.get(1, 2)), (1, 1, 1));
        let w = hg(3, &[&[0, 1], &[0, 1, 2]]).clique_weights();
        assert_eq!(w.get(0, 1), 2);
        assert_eq!(w.get(1, 0), 2);
    }

    #[test]
    fn er_extremes() {
        let zero = BTreeMap::from([(2, 0.0), (3, 0.0), (4, 0.0)]);
        assert_eq!(generate_er(20, &zero, 3).unwrap().edge_count(), 0);
        let full = BTreeMap::from([(2, 1.0)]);
        assert_eq!(generate_er(20, &full, 3).unwrap().edges(2).len(), 190);
        assert!(matches!(
            generate_er(20, &BTreeMap::from([(2, 1.5)]), 0),
            Err(Error::InvalidProbability { .. })
        ));
    }

    #[test]
    fn parse_simple_file() {
        let loaded =
            parse_hyperedge_list("nodes 3\n0 1\n0 1 2\n", Path::new("t"), LoadOptions::default()).unwrap();
        assert_eq!(loaded.hypergraph, hg(3, &[&[0, 1], &[0, 1, 2]]));
    }

    #[test]
    fn parse_skips_comments_and_remaps() {
        let text = "# header\n10 30\n# mid\n30 20 10\n";
        let loaded = parse_hyperedge_list(text, Path::new("t"), LoadOptions::default()).unwrap();
        assert_eq!(loaded.node_ids, vec![10, 20, 30]);
        assert_eq!(loaded.hypergraph, hg(3, &[&[0, 2], &[0, 1, 2]]));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let e = parse_hyperedge_list("nodes 3\n0 1\n0 x\n", Path::new("f"), LoadOptions::default())
            .unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e}");
        let e = parse_hyperedge_list("nodes 2\n0 5\n", Path::new("f"), LoadOptions::default())
            .unwrap_err();
        assert!(e.to_string().contains("declared node count"), "{e}");
    }

    #[test]
    fn oversized_edges_can_be_dropped() {
        let opts = LoadOptions { max_arity: 4, drop_oversized: true };
        let loaded = parse_hyperedge_list("0 1\n0 1 2 3 4\n", Path::new("f"), opts).unwrap();
        assert_eq!(loaded.dropped_oversized, 1);
        assert_eq!(loaded.hypergraph.edge_count(), 1);
        let strict = LoadOptions { max_arity: 4, drop_oversized: false };
        assert!(parse_hyperedge_list("0 1\n0 1 2 3 4\n", Path::new("f"), strict).is_err());
    }
}
