//! Error types shared across the crate.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes of validation, calibration and numerical routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A configuration or argument violates its documented contract.
    /// `field` is a dotted path naming the offending input.
    #[error("invalid value for {field}: {reason}")]
    Validation { field: String, reason: String },

    /// The queueing system has no stationary regime: mean arrival rate is not
    /// strictly below mean service rate.
    #[error("unstable system: mean arrival {mean_arrival} >= mean departure {mean_departure}")]
    Unstable {
        mean_arrival: f64,
        mean_departure: f64,
    },

    /// No finite QoS exponent below the probe ceiling; the tail decays faster
    /// than any exponential in the probed range.
    #[error(
        "no finite decay-rate root found below theta = {theta_max}; \
         tail decays faster than the exponential range probed"
    )]
    NoFiniteRoot { theta_max: f64 },

    /// An iterative numerical routine failed to converge.
    #[error("{op} did not converge within {iterations} iterations")]
    NonConvergence { op: String, iterations: usize },

    /// The operation is defined only for a restricted family of process specs.
    #[error("unsupported spec for {op}: {reason}")]
    Unsupported { op: String, reason: String },

    /// A tail fit could not be performed on the requested range.
    #[error(
        "tail fit needs at least {required} usable grid points, found {found} \
         (positive probability and enough exceedance samples inside the range)"
    )]
    FitFailed { found: usize, required: usize },

    /// A calibration problem has no feasible solution.
    #[error("infeasible: {reason}")]
    Infeasible { reason: String },
}

impl Error {
    /// Shorthand for a validation error.
    pub fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
