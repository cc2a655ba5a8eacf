//! Join-order optimization for conjunctive queries.
//!
//! The crate builds optimal (and near-optimal) binary join trees over a
//! [`querygraph::QueryGraph`]:
//!
//! - [`dpexact`] — exact dynamic programming over connected subgraphs:
//!   size-driven and subset-driven enumeration, a tree-query specialization,
//!   and a biconnected-component–pruned enumerator, all running on a shared
//!   level-synchronous parallel pipeline. Includes brute-force oracles used
//!   by the test suites.
//! - [`heuristics`] — algorithms for queries too large to solve exactly:
//!   greedy operator ordering, iterative re-optimization of plan fragments,
//!   and recursive graph partitioning with exact optimization per partition.
//! - [`workload`] — deterministic synthetic query generators and the
//!   on-disk query format.
//! - [`verify`] — cross-checking harness that compares every optimizer
//!   against the oracles and against each other.
//!
//! Costs are plain `f64` computed in one canonical order everywhere, so
//! equal plans cost bit-for-bit the same regardless of worker count or
//! enumeration order; see [`costmodel`].

pub mod costmodel;
pub mod dpexact;
mod error;
pub mod fixtures;
pub mod heuristics;
pub mod planmemo;
pub mod querygraph;
pub mod relset;
pub mod workload;

pub use error::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
