use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("length of symbol {symbol} is not positive ({value})")]
    NonPositiveLength { symbol: String, value: f64 },
    #[error("permutation pair is reducible at prefix k={k}")]
    Reducible { k: usize },
    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),
    #[error("point {x} outside the domain")]
    OutsideDomain { x: f64 },
    #[error("Keane tie at induction step {step}")]
    KeaneTie { step: usize },
    #[error("move sequence does not close up: {0}")]
    NotClosed(String),
    #[error("period matrix is not primitive")]
    NotPrimitive,
    #[error("replay from eigenvector diverged from the loop at step {step}")]
    ReplayMismatch { step: usize },
    #[error("marginal spectrum: eigenvalue of modulus {modulus} too close to the unit circle")]
    MarginalSpectrum { modulus: f64 },
    #[error("level {requested} exceeds the level cap {max}")]
    LevelCap { requested: usize, max: usize },
    #[error("orbit search failed: {0}")]
    OrbitSearch(String),
    #[error("singularities are not of geometric type: {0}")]
    GeometricType(String),
    #[error("boundary functional diverges: orbit {orbit} has defect {defect}")]
    DivergentFunctional { orbit: usize, defect: f64 },
    #[error("interval [{a}, {b}) crosses a discontinuity")]
    CrossesDiscontinuity { a: f64, b: f64 },
    #[error("budget exceeded: {0}")]
    Budget(String),
    #[error("series did not converge within {terms} terms")]
    SeriesDiverged { terms: usize },
    #[error("cocycle has no logarithmic singularities")]
    ZeroBlog,
    #[error("weak symmetry fails (defect {0})")]
    WeakSymmetry(f64),
    #[error("orbit hits a discontinuity at index {index}")]
    Discontinuity { index: i64 },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Invalid(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
