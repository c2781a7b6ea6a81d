use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid thermal parameters: {0}")]
    InvalidParams(String),

    #[error("invalid arrival profile: {0}")]
    InvalidProfile(String),

    #[error("malformed policy: {0}")]
    MalformedPolicy(String),

    /// A reciprocal-exponential segment whose power changes sign inside
    /// its interval; the caller has to split it at `crossing`.
    #[error("power changes sign inside [{t1}, {t2}] (zero crossing at {crossing})")]
    SignChange { t1: f64, t2: f64, crossing: f64 },

    #[error("invalid bracket [{lo}, {hi}]: f(lo) = {f_lo}, f(hi) = {f_hi}")]
    InvalidBracket {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },

    #[error("no convergence after {iterations} iterations: {context}")]
    MaxIterations { iterations: usize, context: String },

    #[error("adaptive quadrature hit its subdivision limit on [{a}, {b}]")]
    SubdivisionLimit { a: f64, b: f64 },

    #[error("bracket failure at level {level} of nested solve: {detail}")]
    BracketFailure { level: usize, detail: String },

    #[error("extra heat source c = {0} is only supported by the trajectory simulator")]
    UnsupportedHeatSource(f64),

    #[error("infeasible sub-profile: {0}")]
    InfeasibleSubProfile(String),

    #[error("structure fit failed: {0}")]
    FitFailed(String),
}
