//! Subgraph-centric graph mixup with adaptive mixing ratios for
//! semi-supervised node classification, built on a from-scratch two-layer
//! GCN.
//!
//! Module map:
//!
//! - [`graph`]: graph model, bundle format, normalization, SBM generator
//! - [`ego`]: r-hop ego graph extraction
//! - [`lambda`]: adaptive, random-Beta and fixed mixing ratios
//! - [`mixup`]: pair sampling, mixed subgraphs, virtual batches
//! - [`gnn`]: GCN forward/backward, losses, Adam, checkpoints
//! - [`train`]: training loop, evaluation, case study, sweeps
//! - [`cli`]: command-line front end

pub mod cli;
pub mod ego;
pub mod error;
pub mod gnn;
pub mod graph;
pub mod lambda;
pub mod linalg;
pub mod mixup;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
