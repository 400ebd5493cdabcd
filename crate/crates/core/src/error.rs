//! Error types shared across the library.

use thiserror::Error;

/// Errors produced by tensor construction, decompositions, derivatives,
/// solvers and metrics.
#[derive(Debug, Error)]
pub enum Error {
    /// A dimension was zero or two shapes cannot be combined.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// An index fell outside the valid range.
    #[error("index {index} out of range for extent {bound}")]
    IndexOutOfRange { index: usize, bound: usize },

    /// A NaN or infinity was encountered where a finite value is required.
    #[error("non-finite value at position {index}: {value}")]
    NonFinite { index: usize, value: f64 },

    /// A flattened parameter vector does not match its declared layout.
    #[error("layout error: expected length {expected}, got {got}")]
    Layout { expected: usize, got: usize },

    /// A search direction with non-negative directional derivative was
    /// handed to the line search.
    #[error("non-descent direction: g'p = {dir_deriv}")]
    NonDescent { dir_deriv: f64 },

    /// CP reconstruction is only defined for third-order factor sets here.
    #[error("unsupported tensor order {order}; only order 3 is implemented")]
    UnsupportedOrder { order: usize },

    /// A metric was evaluated outside its domain.
    #[error("metric error: {0}")]
    Metric(String),

    /// An invalid argument outside the other categories.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Benchmark output could not be written.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
