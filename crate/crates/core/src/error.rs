//! Error type shared by every module.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Lambert W was asked for a point on its branch cut.
    #[error("branch cut: z = {re} + {im}i lies on (-inf, -1/e)")]
    BranchCut { re: f64, im: f64 },
    /// An index interval with no elements.
    #[error("empty index range [{lo}, {hi}]")]
    EmptyRange { lo: i64, hi: i64 },
    /// A quantity that must be finite was not.
    #[error("non-finite value: {0}")]
    NonFinite(String),
    /// Two objects that must share an index window do not.
    #[error("index range mismatch: {0}")]
    RangeMismatch(String),
    /// A requested time is not a grid time.
    #[error("time {0} is not on the grid")]
    OffGrid(f64),
    /// A requested particle index lies outside the admissible window.
    #[error("index underflow: {0}")]
    IndexUnderflow(String),
    /// A kernel entry evaluated to NaN or infinity.
    #[error("non-finite kernel value at block ({bi},{bj}) nodes ({x}, {y})")]
    NonFiniteKernel { bi: usize, bj: usize, x: f64, y: f64 },
    /// Linear system could not be solved.
    #[error("singular system (condition estimate {0:e})")]
    Singular(f64),
    /// A contour came too close to a pole or violated a separation condition.
    #[error("contour check failed: {0}")]
    Contour(String),
    /// Central differences at step h and h/2 disagree.
    #[error("derivative instability: h and h/2 estimates differ by {0:e}")]
    Derivative(f64),
    /// Invalid experiment configuration.
    #[error("invalid configuration: {0}")]
    Config(String),
    /// I/O failure while writing outputs.
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
