//! Generalized zero-shot learning evaluation.
//!
//! Turns a zero-shot scorer into a generalized one: class-disjoint splits
//! with held-out seen pools, seen-score calibration, regularization
//! selection under either protocol, and the GZSL metric suite. Includes two
//! closed-form ridge scorers, the bilinear hinge-rank family and a synthetic
//! data generator.

pub mod calibration;
pub mod cli;
pub mod data;
pub mod error;
pub mod io;
mod linalg;
pub mod metrics;
pub mod models;
pub mod pipeline;
pub mod splits;
pub mod synthetic;

pub use data::{ClassPartition, Dataset, GzslReport, GzslSplit, ScoreMatrix};
pub use error::{Error, Result};
