use thiserror::Error;

/// Errors produced by the modelling kernels.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("node count must be at least 1")]
    EmptyGraph,

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{what} has an invalid entry {value} at ({row}, {col})")]
    InvalidEntry {
        what: &'static str,
        row: usize,
        col: usize,
        value: f64,
    },

    #[error("matrix is not Metzler: off-diagonal entry {value} at ({row}, {col})")]
    NotMetzler { row: usize, col: usize, value: f64 },

    #[error("{what} is reducible (its graph is not strongly connected)")]
    Reducible { what: &'static str },

    #[error("rate {value} supplied at ({row}, {col}) where the graph has no arc")]
    RateOnNonArc { row: usize, col: usize, value: f64 },

    #[error("{what} did not converge after {iterations} iterations (last residual {residual:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("no epidemic state: s(-D+B) = {abscissa:e} is not positive, the healthy state is the only equilibrium")]
    NoEpidemicState { abscissa: f64 },

    #[error("no coexisting equilibria: healing/infection ratios differ ({ratio1} vs {ratio2})")]
    NoCoexistence { ratio1: f64, ratio2: f64 },

    #[error("coexistence construction needs proportional virus parameters (same graph, equal delta/beta ratios)")]
    CoexistenceNotApplicable,

    #[error("point is not an equilibrium: residual {residual:e} exceeds {tolerance:e}")]
    NotEquilibrium { residual: f64, tolerance: f64 },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("sign of s(-D+B) = {abscissa:e} disagrees with rho(D^-1 B) - 1 = {radius_gap:e}")]
    ThresholdMismatch { abscissa: f64, radius_gap: f64 },

    #[error("Markov chain needs zero self-infection, found {value} on diagonal entry {index} of {what}")]
    NonzeroDiagonal {
        what: &'static str,
        index: usize,
        value: f64,
    },

    #[error("chain with n = {n} exceeds the supported maximum of {max} nodes")]
    ChainTooLarge { n: usize, max: usize },

    #[error("probability {value:e} at state {index} fell below the allowed negative drift")]
    NegativeProbability { index: usize, value: f64 },

    #[error("probability mass drifted by {drift:e} in one step")]
    MassDrift { drift: f64 },

    #[error("{what} is singular")]
    Singular { what: &'static str },

    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T> = std::result::Result<T, Error>;
