use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("infeasible 2x2 table: {0}")]
    Infeasible(String),

    #[error("iteration limit reached in {what} after {iterations} iterations")]
    IterationLimit {
        what: &'static str,
        iterations: usize,
    },

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("unknown factor `{0}`")]
    UnknownFactor(String),

    #[error("syntax error in `{input}`: {message}")]
    Syntax { input: String, message: String },

    #[error("terms {first} and {second} are confounded in this design")]
    Confounded { first: String, second: String },

    #[error("covariate matrix is rank deficient; dependent columns: {}", .0.join(", "))]
    RankDeficient(Vec<String>),

    #[error("models are not nested: {0}")]
    NotNested(String),

    #[error("GLM fit did not converge after {iterations} iterations (deviance {deviance}, beta {beta:?})")]
    NonConvergence {
        iterations: usize,
        deviance: f64,
        beta: Vec<f64>,
    },

    #[error("zero cell in run table; use the 0.5 correction")]
    ZeroCell,

    #[error("common error rate is exactly 1/2; SN ratio is infinite")]
    InfiniteSn,

    #[error("data alignment: {0}")]
    Alignment(String),

    #[error("inconsistent inputs: {0}")]
    Inconsistent(String),

    #[error("invalid ANOVA specification: {0}")]
    Anova(String),
}

impl Error {
    /// Stable machine-readable category used by the command-line front end.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Domain(_) | Error::Infeasible(_) | Error::InfiniteSn | Error::ZeroCell => {
                "numeric"
            }
            Error::IterationLimit { .. } | Error::NonConvergence { .. } => "convergence",
            Error::InvalidDesign(_) | Error::UnknownFactor(_) => "design",
            Error::Syntax { .. } => "syntax",
            Error::Confounded { .. } | Error::RankDeficient(_) | Error::NotNested(_) => "model",
            Error::Alignment(_) | Error::Inconsistent(_) => "data",
            Error::Anova(_) => "anova",
        }
    }
}
