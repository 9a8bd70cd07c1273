//! Bayesian structural inference for finite-alphabet symbol series.
//!
//! The crate builds libraries of candidate unifilar hidden Markov
//! topologies, computes exact Dirichlet-conjugate posteriors over
//! transition probabilities, start states, and topologies for an observed
//! series, and samples the posterior hierarchy to estimate the entropy
//! rate and statistical complexity of the underlying process.

pub mod bayes;
pub mod enumeration;
pub mod error;
pub mod machine;
pub mod math;
pub mod processes;
pub mod sampler;

pub use error::{Error, Result};
pub use machine::{
    DataSeries, EdgeCounts, StationaryDistribution, Symbol, Topology, TransitionAssignment,
};
