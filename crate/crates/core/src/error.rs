use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid phase-type distribution: {0}")]
    InvalidPhaseType(String),

    #[error("invalid Levy model: {0}")]
    InvalidModel(String),

    #[error("invalid market parameters: {0}")]
    InvalidMarket(String),

    #[error("matrix sI - T is singular at s = {re} + {im}i")]
    SingularMatrix { re: f64, im: f64 },

    #[error("no bracket found for {what} (last upper end {last_upper})")]
    BracketFailure { what: &'static str, last_upper: f64 },

    #[error(
        "roots of psi(s) = {q} are nearly repeated (separation {separation:e}); \
         perturb q by about 1e-6 and rebuild"
    )]
    RepeatedRoot { q: f64, separation: f64 },

    #[error("scale function for q = {q} is inconsistent: {detail}")]
    ScaleFunction { q: f64, detail: String },

    #[error("domain error: {0}")]
    Domain(String),
}
