//! Knowledge-graph completion toolkit built around reasoning paths.
//!
//! The pipeline: ingest TSV triples into an inverse-augmented graph
//! ([`kg`]), mine 2/3-hop relation paths scored by resource allocation
//! ([`paths`]), train a dual encoder with per-relation soft path embeddings
//! under a multi-positive contrastive loss ([`encoder`], [`trainer`]), then
//! rank candidates hierarchically: cheap dual-encoder filtering, path search
//! for the survivors, and a path-alignment score bump ([`ranker`], [`eval`]).

pub mod config;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod kg;
pub mod paths;
pub mod ranker;
pub mod rng;
pub mod tensor;
pub mod trainer;

pub use error::{KgcError, Result};
