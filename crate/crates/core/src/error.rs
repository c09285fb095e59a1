use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid modulus function `{label}`: {reason}")]
    InvalidModulus { label: String, reason: String },

    #[error("quadrature did not converge on [{lower}, {upper}]: estimate {estimate}, error estimate {error_estimate} after {evaluations} evaluations")]
    Quadrature {
        lower: f64,
        upper: f64,
        estimate: f64,
        error_estimate: f64,
        evaluations: usize,
    },

    #[error("target {target} outside achievable range ({lower}, {upper})")]
    Range { target: f64, lower: f64, upper: f64 },

    #[error("singular regression{}: Gram matrix rank-deficient with ridge 0; retry with a positive ridge parameter", at_step(.step))]
    SingularFit { step: Option<usize> },

    #[error("backward step did not converge at step {step} on {paths} path(s); try a smaller time step")]
    StepNonConvergence { step: usize, paths: usize },

    #[error("cannot allocate {elements} values for M={paths}, N={steps}, d={dim}")]
    Capacity {
        paths: usize,
        steps: usize,
        dim: usize,
        elements: u128,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

fn at_step(step: &Option<usize>) -> String {
    step.map(|s| format!(" at step {s}")).unwrap_or_default()
}

pub type Result<T> = std::result::Result<T, Error>;
