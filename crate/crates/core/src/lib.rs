//! Exact exit distributions (harmonic measure) for reversible Markov chains
//! killed on leaving a finite domain of a weighted graph.
//!
//! The Poisson kernel is computed three independent ways, which the test
//! suites play against each other:
//!
//! * [`absorbing`]: Green's function solve, `P_U(x,y) = Σ_{z∈ν(y)} G_U(x,z) K(z,y)`;
//! * [`spectral`]: eigen-expansion of the killed kernel;
//! * [`doob`]: series over the Doob-transformed (stochastic) chain.
//!
//! [`estimates`] evaluates the constant-free two-sided estimate shapes and the
//! Harnack/heat-kernel verification harness, [`montecarlo`] samples the chain
//! directly, and [`models`] builds the lattice examples (line, boxes, the
//! three-player gambler's-ruin triangle, punctured cubes).

pub mod absorbing;
pub mod domain;
pub mod doob;
mod error;
pub mod estimates;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod models;
pub mod montecarlo;
pub mod spectral;

pub use error::{Error, Result};
pub use graph::{GraphBuilder, MarkovKernel, VertexId, VertexSpec, WeightedGraph};
