//! Differentially private graph convolutional networks.
//!
//! The crate trains a two-layer GCN for node classification with DP-SGD or
//! DP-Adam, optionally after cutting the training graph into disjoint random
//! subgraphs so each subgraph acts as one example, and tracks the privacy
//! budget with a moments accountant.
//!
//! Module map:
//!
//! * [`graph`], [`features`], [`partition`] – sparse graphs, propagation
//!   matrix, random splitting and masking.
//! * [`model`] – forward pass, loss, hand-written backward pass, metrics.
//! * [`dp_optim`] – clipping, noisy lot gradients, SGD and Adam updates.
//! * [`accountant`] – log-moments, composition, `ε ↔ δ`, noise calibration.
//! * [`dataset`] – on-disk format and synthetic block-model graphs.
//! * [`harness`] – experiments A/B/C, early stopping, results files.

pub mod accountant;
pub mod dataset;
pub mod dp_optim;
pub mod error;
pub mod features;
pub mod graph;
pub mod harness;
pub mod model;
pub mod partition;
pub mod quadrature;
pub mod rng;

pub use error::{Error, Result};
