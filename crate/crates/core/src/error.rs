use thiserror::Error;

/// Errors raised across the analysis pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is numerically singular (diagonal {index} of R is {value:e})")]
    SingularInput { index: usize, value: f64 },

    #[error("eigenvalue iteration did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },

    #[error("matrix family is not solvable (derived series {series:?})")]
    NotSolvable { series: Vec<usize> },

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("symbol {symbol} out of range for alphabet of size {alphabet}")]
    SymbolOutOfRange { symbol: usize, alphabet: usize },

    #[error("symbol prefix exhausted: need {needed} symbols, have {available}")]
    PrefixExhausted { needed: usize, available: usize },

    #[error("non-finite value encountered at t = {t}")]
    NonFinite { t: f64 },

    #[error("matrix at t = {t} is not upper-triangular (sub-diagonal mass {mass:e})")]
    NotTriangular { t: f64, mass: f64 },

    #[error("interval series too short: need {needed} intervals, have {available}")]
    InsufficientSeries { needed: usize, available: usize },

    #[error("trajectory horizon {horizon} is shorter than the required {required}")]
    HorizonTooShort { horizon: f64, required: f64 },

    #[error("averaged matrix is not Hurwitz (spectral abscissa {abscissa}); perturbation sweep refused")]
    StarConditionFails { abscissa: f64 },

    #[error("control map {mode} violates growth bound: |B(x)|/|x| = {ratio} > beta = {beta}")]
    GrowthBoundViolated { mode: usize, ratio: f64, beta: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
