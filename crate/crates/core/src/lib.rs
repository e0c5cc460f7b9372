//! Trip recommendation from check-in data: trip extraction, context-aware
//! POI embeddings, trip scoring, and exact and heuristic orienteering
//! solvers with an evaluation harness.

pub mod alns;
pub mod checkin;
pub mod config;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod exact;
pub mod graph;
pub mod scoring;
pub mod synth;

pub use error::{Error, Result};
