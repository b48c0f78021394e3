//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by network construction, statistics, and file parsing.
#[derive(Debug, Error)]
pub enum Error {
    /// A probability-like parameter fell outside its valid range.
    #[error("invalid {context}: {value} (must be in {range})")]
    InvalidParameter {
        context: &'static str,
        value: f64,
        range: &'static str,
    },

    /// No usable rows survived ingestion or filtering.
    #[error("network empty after filtering: {transactions} transactions and {products} products survive")]
    EmptyAfterFilter {
        transactions: usize,
        products: usize,
    },

    /// The input record set was empty.
    #[error("no transaction records provided")]
    NoRecords,

    /// Too few transactions for the declared normal approximation.
    #[error("{n_t} transactions is below the normal-approximation floor of {required}")]
    TooFewTransactions { n_t: usize, required: usize },

    /// A distribution size exceeded the configured exact-computation limit.
    #[error("distribution size {n} exceeds the exact-PMF limit of {limit}")]
    PmfSizeLimit { n: usize, limit: usize },

    /// A distribution had zero mean where a positive mean is required.
    #[error("degenerate distribution: {0}")]
    DegenerateDistribution(&'static str),

    /// A tail-bound evaluation point fell outside the bound's domain.
    #[error("{bound} bound undefined at x = {x} for mean {mu}")]
    BoundDomain {
        bound: &'static str,
        x: f64,
        mu: f64,
    },

    /// Two structures that must have matching shapes did not.
    #[error("shape mismatch: {context} ({left} vs {right})")]
    ShapeMismatch {
        context: &'static str,
        left: usize,
        right: usize,
    },

    /// MORE and LESS flags overlapped, which no single test can produce
    /// at sensible significance levels.
    #[error("{pairs} pairs flagged both significantly-more and significantly-less")]
    OverlappingRelations { pairs: usize },

    /// A graph operation received a graph with no nodes.
    #[error("graph has no nodes")]
    EmptyGraph,

    /// Calibration grids must be sorted ascending and non-empty.
    #[error("invalid calibration grid for {0}: values must be non-empty, sorted, and in range")]
    InvalidGrid(&'static str),

    /// A malformed row in an external data file.
    #[error("{path}:{line}: {msg}")]
    ParseRow {
        path: String,
        line: usize,
        msg: String,
    },

    /// A referenced label was absent from the data it must index into.
    #[error("unknown {kind}: {label}")]
    UnknownLabel { kind: &'static str, label: String },

    /// A record needs a date for date-based processing but has none.
    #[error("transaction {transaction_id} has no date")]
    MissingDate { transaction_id: String },

    /// A statistic was requested on an empty sample.
    #[error("empty sample for {0}")]
    EmptySample(&'static str),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
