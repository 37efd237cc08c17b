//! Knowledge-graph context for sentential relation extraction.
//!
//! The crate is organized bottom-up:
//!
//! - [`numkit`]: dense numerics and a reverse-mode tape.
//! - [`kgstore`]: knowledge graph, entity attributes, annotated sentences.
//! - [`eac`]: entity attribute context encoder (BiLSTM + width-1 conv + max-pool).
//! - [`tripler`]: graph-attention triple embeddings in one shared space or in
//!   separate entity/relation spaces, batch-wise margin training, ranking.
//! - [`aggregator`]: generated-parameter GNN over sentence entities with the
//!   two classification heads.
//! - [`evalstats`]: P/R/F1, P@K%, PR curves, hits@N/MR/MRR, McNemar.
//! - [`checkpoint`]: versioned, digest-checked model files.
//! - [`diagnostics`]: fixed-seed gradient checks of every trainable part.
//! - [`synth`]: generators for the toy graphs and datasets used by tests,
//!   benchmarks and the CLI.

pub mod aggregator;
pub mod checkpoint;
pub mod diagnostics;
pub mod eac;
pub mod error;
pub mod evalstats;
pub mod kgstore;
pub mod numkit;
pub mod synth;
pub mod tripler;

pub use error::{Error, Result};
