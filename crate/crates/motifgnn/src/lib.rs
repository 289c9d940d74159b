//! Motif-regularized graph neural networks.
//!
//! This crate trains GCN node classifiers whose representations are
//! regularized by mutual-information objectives over 3-node network
//! motifs. The pieces:
//!
//! - [`graph`]: attributed graph storage, dataset IO, normalized
//!   adjacency operators, and stratified splits.
//! - [`motifs`]: canonical 3-node motif patterns, exact instance
//!   enumeration, and positive/negative instance sampling.
//! - [`tensor`] / [`autodiff`] / [`adam`]: a minimal dense/sparse f64
//!   tensor kernel with reverse-mode differentiation and Adam.
//! - [`gnn`]: the GCN base encoder and softmax classifier.
//! - [`regularizer`]: per-motif gating, instance encoding, readout,
//!   bilinear discrimination, and the noise-contrastive loss.
//! - [`curriculum`]: motif attention, novelty reweighting, and the
//!   alternating per-epoch training driver.
//! - [`synth`], [`quartiles`], [`bench`], [`manifest`]: experiment
//!   support (generators, per-quartile analysis, runtime benchmarks,
//!   reproducible run manifests).

pub mod adam;
pub mod autodiff;
pub mod bench;
pub mod curriculum;
pub mod gnn;
pub mod graph;
pub mod manifest;
pub mod model;
pub mod motifs;
pub mod quartiles;
pub mod regularizer;
pub mod synth;
pub mod tensor;

use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("format error in {file} line {line}: {msg}")]
    Format {
        file: String,
        line: usize,
        msg: String,
    },
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("shape mismatch in {op}: {details}")]
    Shape { op: String, details: String },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("stratification error: {0}")]
    Stratification(String),
    #[error("sampling error: {0}")]
    Sampling(String),
    #[error("node id {0} out of range for graph with {1} nodes")]
    NodeOutOfRange(usize, usize),
    #[error("non-finite {what} at epoch {epoch}, batch {batch}")]
    Divergence {
        what: String,
        epoch: usize,
        batch: usize,
    },
    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGrad(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
