//! Regulatory question answering over a passage corpus: hybrid BM25 + dense
//! retrieval with three-way score fusion and reranking, the RePASs
//! reference-free answer metric, and three answer strategies (NOC, LOC, VRR).
//!
//! External models sit behind the traits in [`providers`]; every algorithm
//! runs offline against the deterministic mocks there.

pub mod corpus;
pub mod error;
pub mod generation;
pub mod metrics;
pub mod orchestrator;
pub mod par;
pub mod providers;
pub mod repass;
pub mod retrieval;
pub mod run;
pub mod text;

pub use error::{Error, Result};
