//! Structural poisoning attacks against the OddBall graph anomaly detector.
//!
//! - [`graph`]: simple undirected graphs, edge-list I/O, ER/BA generators.
//! - [`oddball`]: egonet features, power-law fit and anomaly scores.
//! - [`grad`]: exact gradients of the attack objective on relaxed adjacency.
//! - [`attacks`]: GradMaxSearch, ContinuousA and BinarizedAttack.
//! - [`defense`]: Huber and RANSAC refits.
//! - [`transfer`]: ReFeX embeddings, an MLP classifier and the transfer protocol.
//! - [`stats`]: Monte-Carlo permutation test.

pub mod attacks;
pub mod defense;
pub mod error;
pub mod grad;
pub mod graph;
pub mod oddball;
pub mod rng;
pub mod stats;
pub mod transfer;

pub use error::{Error, Result};
pub use graph::{EdgeFlip, FlipAction, GenConfig, Graph, GraphModel};
pub use oddball::{AnomalyReport, EgoFeatures, Fitter, RegressionFit};
