//! Accent classification and accent embedding toolkit.
//!
//! The pipeline: curate mono 16-bit recordings ([`audio`]), manage manifests
//! and speaker-disjoint splits ([`corpus`]), extract log-mel or precomputed
//! frontend features ([`features`]), train a GRU encoder with a linear head
//! ([`model`], [`training`]), score it ([`eval`]) and project its embeddings
//! to 2-D ([`embeddings`]). [`synthgen`] produces labelled toy corpora.

pub mod audio;
pub mod cli;
pub mod corpus;
pub mod dataset;
pub mod embeddings;
pub mod error;
pub mod eval;
pub mod features;
pub mod model;
pub mod par;
pub mod synthgen;
pub mod training;

pub use error::{Error, Result};

pub const VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));
