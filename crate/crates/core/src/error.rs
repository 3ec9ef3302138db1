use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("coupling matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },

    #[error("positive off-diagonal coupling {value} at ({row}, {col}); only ferromagnetic couplings are supported")]
    PositiveOffDiagonal { row: usize, col: usize, value: f64 },

    #[error("graph has no sites")]
    EmptyGraph,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("{n} sites exceed the enumeration cap of {cap}")]
    TooLarge { n: usize, cap: usize },

    #[error("{what} = {value} outside [{lo}, {hi}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("density has negative entry {value} at state {index}")]
    NegativeDensity { index: usize, value: f64 },

    #[error("density is constant; the ratio is undefined")]
    ConstantDensity,

    #[error("Dirichlet form vanishes while entropy is {entropy}")]
    DegenerateRatio { entropy: f64 },

    #[error("generator violates detailed balance by {violation:e}")]
    NonReversible { violation: f64 },

    #[error("quadrature did not converge: orders {order} and {next} differ by {difference:e}")]
    QuadratureNotConverged {
        order: usize,
        next: usize,
        difference: f64,
    },

    #[error("eigensolver did not converge: residual {residual:e} at Krylov dimension {dimension}")]
    EigenNotConverged { dimension: usize, residual: f64 },

    #[error("time integration failed: {0}")]
    IntegrationFailed(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for failures of a numerical method on valid input, as opposed
    /// to invalid input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::QuadratureNotConverged { .. }
                | Error::IntegrationFailed(_)
                | Error::EigenNotConverged { .. }
                | Error::NonReversible { .. }
        )
    }
}
