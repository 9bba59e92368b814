use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid weight: {0}")]
    InvalidWeight(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },
    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("stored node prefix too short: tail bound {tail:e} after {nodes} nodes")]
    InsufficientNodes { nodes: usize, tail: f64 },
    #[error("index ({row}, {col}) outside the constructed range {rows}x{cols}")]
    OutOfRange {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error("tail estimate {tail:e} exceeds tolerance {tol:e} of the accumulated value")]
    InsufficientRange { tail: f64, tol: f64 },
    #[error("every window candidate is below the singularity floor: {sigmas:?}")]
    ConstructionDegenerate { sigmas: Vec<(usize, f64)> },
    #[error("section is numerically singular (sigma_min {sigma_min:e})")]
    DegenerateSection { sigma_min: f64 },
    #[error("finite-section schedule exhausted the construction (last change {last_delta:e}, tol {tol:e})")]
    InsufficientConstruction { last_delta: f64, tol: f64 },
    #[error("remainder target unreachable: best bound {best_bound:e}")]
    InsufficientCoefficients { best_bound: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
