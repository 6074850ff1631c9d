//! MDL-based co-clustering of sparse event logs.
//!
//! The crate groups source entities by the similarity of their outgoing
//! traffic distribution over destination entities (spatial model) or over
//! time (temporal model), by minimizing an exact MDL criterion with a
//! greedy bottom-up merge heuristic. On top of a fitted model it provides
//! hierarchical coarsening with an informativity-rate measure, and
//! mutual-information contribution reports for excess/deficit analysis.

pub mod analysis;
pub mod combinatorics;
pub mod corpus;
pub mod criterion;
pub mod error;
pub mod export;
pub mod hierarchy;
pub mod optimizer;
pub mod serialize;
pub mod synth;

pub use corpus::{ingest_csv, CoordinateTable, CorpusBuilder, CsvSchema, EventCorpus};
pub use criterion::{Axis, ClusterId, SpatialModel, TemporalModel};
pub use error::{Error, Result};
pub use hierarchy::{informativity_rate, MergeDendrogram};
pub use optimizer::{fit_spatial, fit_temporal, FitResult, OptimizerConfig};
