//! Transductive sharpening for semi-supervised node classification.
//!
//! The crate covers a dense/sparse tensor layer with a reverse-mode tape,
//! graph bundles and a synthetic block-model generator, MLP/GCN/SAGE
//! backbones, the sharpening objective family, a deterministic trainer and
//! the effect-size analysis used to compare runs.

pub mod analysis;
pub mod autodiff;
pub mod csbm;
pub mod error;
pub mod fmt;
pub mod gradcheck;
pub mod graph;
pub mod models;
pub mod nn;
pub mod objectives;
pub mod optim;
pub mod presets;
pub mod report;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use graph::{load_bundle, save_bundle, GraphBundle, Split};
pub use models::{ArchConfig, Backbone, NormKind};
pub use objectives::{LossReport, TsConfig, UnlabeledSet};
pub use tensor::{DenseMatrix, SparseCSR};
pub use training::{train_run, Metric, RunRecord, TrainConfig};
