use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {found}")]
    Dimension {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("singular matrix: pivot {pivot:.3e} in column {column}")]
    Singular { column: usize, pivot: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("constraint not onto: {0}")]
    ConstraintNotOnto(String),

    #[error("right-inverse policy error: {0}")]
    Policy(String),

    #[error("constraint block identity {identity} violated: residual {residual:.3e}")]
    ConstraintIdentity { identity: &'static str, residual: f64 },

    #[error("inconsistent initial value: |D u0 - G(t0)| = {residual:.3e}")]
    Inconsistent { residual: f64 },

    #[error("multiplier unavailable: time derivative of the constraint data was not supplied")]
    MultiplierUnavailable,

    #[error("inhomogeneity not affine on [{t0}, {t1}]: midpoint defect {defect:.3e}")]
    NotAffine { t0: f64, t1: f64, defect: f64 },

    #[error("reaction blow-up at substep time {time:.6e}")]
    ReactionBlowUp { time: f64 },

    #[error("step size {tau:e} does not divide the interval length {length:e}")]
    StepDoesNotDivide { tau: f64, length: f64 },

    #[error("step {step} (t = {time:.6e}): {source}")]
    Step {
        step: usize,
        time: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("reference unreliable: cross-check discrepancy {discrepancy:.3e} exceeds bound {bound:.3e}")]
    ReferenceUnreliable { discrepancy: f64, bound: f64 },

    #[error("reference has no state at t = {0:e}")]
    OffReferenceGrid(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("implicit solver did not converge at t = {time:.6e} after {iterations} iterations")]
    NoConvergence { time: f64, iterations: usize },
}

impl Error {
    pub(crate) fn at_step(self, step: usize, time: f64) -> Error {
        Error::Step {
            step,
            time,
            source: Box::new(self),
        }
    }

    /// Whether the error originates from the numerics rather than from
    /// the configuration or input shapes.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Singular { .. }
            | Error::ReactionBlowUp { .. }
            | Error::NonFinite(_)
            | Error::ReferenceUnreliable { .. }
            | Error::NoConvergence { .. }
            | Error::NotAffine { .. }
            | Error::ConstraintIdentity { .. } => true,
            Error::Step { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
