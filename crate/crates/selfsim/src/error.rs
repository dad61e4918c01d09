use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("derivative order {order} exceeds the configured maximum {max}")]
    UnsupportedOrder { order: usize, max: usize },

    #[error("invalid target: {0}")]
    InvalidTarget(String),

    #[error("power series diverged at coefficient {index}")]
    DivergedSeries { index: usize },

    #[error("no analytic branch at the light cone (compatibility residual {residual:e})")]
    NoAnalyticBranch { residual: f64 },

    #[error("{stage} did not converge: {detail}")]
    NonConvergence { stage: &'static str, detail: String },

    #[error("degenerate profile: slope at the origin is {b:e}")]
    DegenerateProfile { b: f64 },

    #[error("collocation Jacobian is singular (eigenvalue nearest zero: {nearest:e})")]
    SingularJacobian { nearest: f64 },

    #[error("Picard iteration does not contract at epsilon = {epsilon} (observed ratio {ratio:.3})")]
    ContractionFailure { epsilon: f64, ratio: f64 },

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("unstable eigenvalue is not simple: {0}")]
    Degeneracy(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("solution left the representable range at tau = {tau}")]
    BlowupDetected { tau: f64 },

    #[error("unstable amplitude has no sign change on [{lo}, {hi}] (values {a_lo:e}, {a_hi:e})")]
    NoSignChange { lo: f64, hi: f64, a_lo: f64, a_hi: f64 },

    #[error("refused: {0}")]
    Refused(String),

    #[error("missing dependency: {0}")]
    Dependency(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of an iterative solver, as opposed to bad input.
    pub fn is_nonconvergence(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::DivergedSeries { .. }
                | Error::SingularJacobian { .. }
                | Error::ContractionFailure { .. }
                | Error::Eigensolver(_)
                | Error::Degeneracy(_)
                | Error::BlowupDetected { .. }
                | Error::NoSignChange { .. }
                | Error::NoAnalyticBranch { .. }
                | Error::DegenerateProfile { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
