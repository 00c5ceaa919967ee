use thiserror::Error;

use crate::solver::SolveReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },

    #[error("undeclared variable `{name}` at position {pos}")]
    UndeclaredVariable { name: String, pos: usize },

    #[error("domain error in `{subexpr}`: {msg}")]
    ExprDomain { subexpr: String, msg: String },

    #[error("x = {0} lies outside [0, 1]")]
    OutsideDomain(f64),

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("incompatible fields: {0}")]
    Shape(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("resonant gain: max|gain| = {max:.6e}, min|gain| = {min:.6e}; neither branch contracts")]
    ResonantGain { max: f64, min: f64 },

    #[error("singular dense shift operator")]
    SingularShift,

    #[error("inner linear solve stagnated after {iterations} iterations (residual {residual:.3e})")]
    InnerSolveStagnation { iterations: usize, residual: f64 },

    #[error("degenerate denominator: integral of 1/a2 - 1/a1 vanishes")]
    DegenerateDenominator,

    #[error("iterate is resonant: both non-resonance margins below tolerance")]
    ResonantIterate(Box<SolveReport>),

    #[error("no convergence within {} iterations", .0.iterations)]
    MaxIterationsExceeded(Box<SolveReport>),

    #[error("invalid options: {0}")]
    Options(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
