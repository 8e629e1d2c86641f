//! Causal inference with a variational graph autoencoder.
//!
//! Given observational data and a known causal DAG, this crate trains a
//! graph-structured variational autoencoder whose encoder and decoder depths
//! are chosen from the graph (diameter and longest path), then answers three
//! kinds of causal queries from the trained model:
//!
//! - **observational**: sample from the fitted joint distribution,
//! - **interventional**: sample under `do(X_i = a)` by severing the
//!   intervened node's incoming edges in the adjacency,
//! - **counterfactual**: abduct latents for a factual row, intervene, and
//!   re-decode.
//!
//! Ground truth comes from built-in structural causal models
//! ([`scm::builtin_scm`]) that double as a verification oracle, and the
//! whole pipeline is scored by a kernel two-sample metric suite
//! ([`metrics`]) plus a counterfactual-fairness auditor ([`fairness`]).
//!
//! Start with the runnable examples (`cargo run --example oracle_sampling`,
//! `train_vaca`, `causal_queries`, ...) or the `vaca` binary, which exposes
//! the same pipeline as subcommands (`generate`, `train`, `evaluate`,
//! `query`, `audit`, `sweep`).

pub mod cli;
pub mod config;
pub mod dataset;
pub mod diff;
pub mod error;
pub mod fairness;
pub mod fdcheck;
pub mod gnn;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod queries;
pub mod scm;

pub use error::{Error, Result};
pub use graph::{CausalGraph, DimKind, NodeSpec, VacaAdjacency};
