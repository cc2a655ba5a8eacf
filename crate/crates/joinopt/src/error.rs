//! Crate-wide error type.

use crate::planmemo::RunStats;

/// Errors surfaced by optimizers, generators, and query-file I/O.
///
/// Precondition violations on pure combinatorial primitives (bad ranks, empty
/// grow sources, and the like) panic instead; these variants cover conditions
/// a correct caller can still run into: bad input files, oversized inputs,
/// unsuitable algorithms, and exhausted time budgets.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// The optimizer ran out of budget; partial results are discarded and the
    /// counters collected so far travel with the error.
    #[error("optimization timed out after {:?}", stats.elapsed)]
    Timeout { stats: RunStats },

    /// Exact enumeration is capped at 64 relations (and the brute-force
    /// oracles at 14).
    #[error("{n} relations exceed the {max}-relation limit of this algorithm")]
    TooLarge { n: usize, max: usize },

    /// The tree-only optimizer was handed a cyclic query graph.
    #[error("query graph is cyclic; the tree-only optimizer requires an acyclic graph (use mpdp)")]
    CyclicInput,

    /// A structurally invalid query: bad edge endpoints, out-of-range
    /// selectivities, disconnected graph, and similar. The message names the
    /// offending field.
    #[error("invalid query: {0}")]
    InvalidQuery(String),

    /// Query file could not be parsed; the underlying message carries the
    /// line/column and field that failed.
    #[error("cannot parse query file: {0}")]
    Parse(#[from] serde_json::Error),

    /// Filesystem failure while reading or writing a query or report.
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// A plan extraction referenced a relation set the memo never completed;
    /// indicates a disconnected query or an enumerator bug.
    #[error("memo table has no plan for {set}")]
    MissingSubplan { set: String },

    /// An invalid generator configuration.
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
}

impl Error {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io { path: path.display().to_string(), source }
    }
}
