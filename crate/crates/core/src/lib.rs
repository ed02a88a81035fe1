//! Dynamical systems on hypergraphs and how to learn them.
//!
//! The crate is organised bottom-up:
//!
//! - [`hypergraph`]: topology, incidence views, clique weights, random generators and the
//!   hyperedge-list file format.
//! - [`dynamics`]: the analytical update families (Kuramoto, SI, MCM, diffusion), the global
//!   right-hand side and forward Euler integration.
//! - [`decomposition`]: numerical checks of subset-sum decompositions and order bounds.
//! - [`mlp`]: a small dense network engine with exact backpropagation and Adam.
//! - [`model`]: the HyDy-GNN model with permutation-averaged per-edge networks and its trainer.
//! - [`datasets`]: point-based and trajectory-based training data.
//! - [`evaluation`]: cross-validation, trajectory error, MC-perf and order selection.

pub mod datasets;
pub mod decomposition;
pub mod dynamics;
mod error;
pub mod evaluation;
pub mod hypergraph;
pub mod mlp;
pub mod model;
pub mod seed;
mod text;

pub use error::{Error, Result};
pub use hypergraph::Hypergraph;
