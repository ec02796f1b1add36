//! Convolution-preserving graph coarsening.
//!
//! Merges structurally redundant node pairs bottom-up so that the output of a
//! normalized graph-convolution layer on the coarse graph stays close to the
//! output on the original graph. The crate provides:
//!
//! - sparse graph and coarse-graph construction ([`graph`])
//! - candidate-pair generation from SGC embeddings ([`candidates`])
//! - exact and approximate merge costs with incremental caches ([`cost`])
//! - the multi-level greedy coarsener ([`coarsener`])
//! - a linear SGC harness for node classification and link prediction
//!   ([`eval`])
//! - on-disk formats and dataset adapters ([`io`], [`synth`])

pub mod candidates;
pub mod coarsener;
pub mod config;
pub mod cost;
pub mod error;
pub mod graph;
pub mod io;
pub mod matrix;
pub mod eval;
pub mod synth;

pub use error::{Error, Result};
pub use graph::{CoarseGraph, Graph, Partition};
pub use matrix::Matrix;
