use alloc::boxed::Box;
use alloc::string::String;

use crate::model::ValidationReport;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Matrices or vectors whose shapes do not fit together.
    #[error("dimension mismatch: {what} is {found}, expected {expected}")]
    Dimension {
        what: &'static str,
        expected: String,
        found: String,
    },

    /// Shapes are fine but one or more model invariants do not hold.
    #[error("invalid model: {0}")]
    Invalid(ValidationReport),

    /// Level not produced by the quantizer, or a point not covered by any cell.
    #[error("quantizer: {0}")]
    Quantizer(String),

    /// A cell with zero or negative width in some dimension.
    #[error("degenerate cell: width {width} in dimension {dim}")]
    Geometry { dim: usize, width: f64 },

    #[error("quadrature order {0} outside 1..=32")]
    QuadratureOrder(usize),

    /// Cholesky factorization failed, even after the one jitter retry.
    #[error("{what} is not positive definite")]
    Conditioning { what: &'static str },

    /// `G' C' S^-1 C G` is singular at run time.
    #[error("input is not identifiable: G'C'S^-1 CG is singular")]
    RankCondition,

    /// Every raw component weight underflowed.
    #[error(
        "degenerate update: largest raw log-weight {max_log_weight} over {components} components"
    )]
    DegenerateUpdate {
        max_log_weight: f64,
        components: usize,
    },

    /// Posterior covariance lost positive semi-definiteness beyond tolerance.
    #[error("{what} has minimum eigenvalue {min_eigenvalue}")]
    NotPsd {
        what: &'static str,
        min_eigenvalue: f64,
    },

    /// Belief handed to an update that expects a different stage.
    #[error("belief stage: {0}")]
    Stage(&'static str),

    #[error("numeric integration did not converge (estimated error {estimate})")]
    Integration { estimate: f64 },

    /// A configuration value outside its documented domain.
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("experiment: {0}")]
    Experiment(String),

    /// A filter error with the failing time index attached.
    #[error("at t={t}: {source}")]
    AtStep {
        t: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn dimension(
        what: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    ) -> Self {
        Error::Dimension {
            what,
            expected: alloc::format!("{}x{}", expected.0, expected.1),
            found: alloc::format!("{}x{}", found.0, found.1),
        }
    }

    pub(crate) fn at_step(self, t: usize) -> Self {
        Error::AtStep {
            t,
            source: Box::new(self),
        }
    }
}
