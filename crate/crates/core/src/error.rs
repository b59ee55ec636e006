use thiserror::Error;

/// Errors raised by pricing and calibration routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate annuity: dv01 = {0}")]
    DegenerateAnnuity(f64),

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("no root bracketed: {0}")]
    NoBracket(String),

    #[error("pricing failed at correlation {rho}: {reason}")]
    ScanNode { rho: f64, reason: String },

    #[error("base correlation unattainable for tranche {attachment}-{detachment}: market {market}, attainable [{min}, {max}]")]
    BaseUnattainable {
        attachment: f64,
        detachment: f64,
        market: f64,
        min: f64,
        max: f64,
    },

    #[error("optimizer failed: {reason} (kkt residual {kkt_residual:e})")]
    Optimizer { reason: String, kkt_residual: f64 },

    #[error("infeasible constraint set: {0}")]
    Infeasible(String),

    #[error("recovery {recovery} not admissible: must be below {bound}")]
    RecoveryAdmissibility { recovery: f64, bound: f64 },

    #[error("extrapolation refused: {0}")]
    Extrapolation(String),

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
