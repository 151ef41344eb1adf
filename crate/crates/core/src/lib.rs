//! Semantic identification attacks on categorized browsing logs.
//!
//! Sessions are reduced to category-proportion fingerprints; session pairs
//! are scored for same-user linkage by a similarity/dissimilarity ratio, a
//! small neural classifier, or a random baseline; and attacks are evaluated
//! by precision, recall, F1 and reach over threshold sweeps.

pub mod corpus;
pub mod defense;
pub mod error;
pub mod evaluation;
pub mod fingerprint;
pub mod harness;
pub mod neural;
pub mod pairwise;
pub mod rng;
pub mod sessions;

pub use error::{Error, Result};
