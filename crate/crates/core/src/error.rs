use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid case: {0}")]
    InvalidCase(String),

    #[error("degenerate branch {index}: r = x = 0")]
    DegenerateBranch { index: usize },

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("solution did not converge ({0})")]
    NotConverged(String),

    #[error("all {attempted} scenarios were infeasible")]
    AllInfeasible { attempted: usize },

    #[error("training diverged at epoch {epoch}: {detail}")]
    TrainingDiverged { epoch: usize, detail: String },

    #[error("model was trained for case {expected}, got case {got}")]
    CaseMismatch { expected: String, got: String },

    #[error("undefined metric: {0}")]
    Undefined(&'static str),
}
