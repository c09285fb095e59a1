use thiserror::Error;

#[derive(Debug, Error)]
pub enum AppError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{0}")]
    Violation(String),

    #[error("solver did not converge: {0}")]
    NonConvergence(String),

    #[error("numerical failure: {0}")]
    Numeric(String),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => 1,
            AppError::Violation(_) => 2,
            AppError::NonConvergence(_) => 3,
            AppError::Numeric(_) => 4,
        }
    }
}

impl From<bsde_core::Error> for AppError {
    fn from(e: bsde_core::Error) -> Self {
        match e {
            bsde_core::Error::StepNonConvergence { .. } => AppError::NonConvergence(e.to_string()),
            other => AppError::Numeric(other.to_string()),
        }
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Numeric(format!("i/o: {e}"))
    }
}

impl From<csv::Error> for AppError {
    fn from(e: csv::Error) -> Self {
        AppError::Numeric(format!("csv: {e}"))
    }
}

impl From<serde_json::Error> for AppError {
    fn from(e: serde_json::Error) -> Self {
        AppError::Numeric(format!("json: {e}"))
    }
}
