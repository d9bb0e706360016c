//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid law: {0}")]
    InvalidLaw(String),

    #[error("invalid speed measure: {0}")]
    InvalidSpeed(String),

    #[error("{what} = {value} outside [{lo}, {hi}]")]
    Domain {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    /// κ below the least admissible value (the Wronskian bound 1/W ≥ max{C,P}).
    #[error("inconsistent Wronskian: kappa = {kappa} is below kappa0 = {kappa0}")]
    InconsistentWronskian { kappa: f64, kappa0: f64 },

    #[error("law places mass {mass} at {at}: {context}")]
    AtomAt { at: f64, mass: f64, context: &'static str },

    /// Eigenfunction march failed to reach its residual target.
    #[error("eigen solver did not converge: residual {residual:.3e} > target {target:.3e} at step {step:.3e}")]
    SolverNonConvergence {
        residual: f64,
        target: f64,
        step: f64,
        /// (x, residual) samples of the worst pass, for diagnostics.
        profile: Vec<(f64, f64)>,
    },

    #[error("eigen solver overflow/degeneracy: {0}")]
    SolverDegenerate(String),

    /// Two supposedly equivalent classification routes disagreed.
    #[error("classification routes disagree: {0}")]
    ClassificationConflict(String),

    #[error("censored paths {censored} of {total} exceed the {limit_percent}% ceiling")]
    ExcessiveCensoring {
        censored: usize,
        total: usize,
        limit_percent: f64,
    },

    #[error("unknown example '{0}'")]
    UnknownExample(String),

    #[error("bad configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
