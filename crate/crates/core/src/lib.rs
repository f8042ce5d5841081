//! Graph lottery ticket search.
//!
//! Masked GCN/GIN models trained with a small tape-based autodiff engine,
//! iterative magnitude pruning of edges and weights, adversarial
//! complementary erasing (ACE) to exchange elements between the retained
//! and pruned sides, and analysis helpers.

pub mod ace;
pub mod analytics;
pub mod bits;
pub mod dataset;
pub mod engine;
pub mod error;
pub mod graph;
pub mod model;
pub mod prune;
pub mod registry;
pub mod search;

/// Crate version, echoed into run outputs.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use bits::BitMask;
pub use dataset::{GraphDataset, Split, Splits};
pub use error::{Error, Result};
pub use graph::{Adjacency, EdgeId};
