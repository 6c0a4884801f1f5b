//! Out-of-distribution graph classification by explicit environment
//! modeling.
//!
//! The pipeline grows molecule environments under valence rules
//! ([`generator`]), separates a label-irrelevant environment subgraph with a
//! stochastic edge mask trained under an information bottleneck ([`egib`]),
//! and fuses environment and invariant embeddings through cross attention
//! and a tanh gate ([`sci`]) before classification ([`trainer`]).

pub mod autodiff;
pub mod cli;
pub mod datasets;
pub mod egib;
pub mod error;
pub mod explain;
pub mod generator;
pub mod gnn;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod sci;
pub mod trainer;

pub use error::{Error, Result};
