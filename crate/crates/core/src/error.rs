use num_complex::Complex64;
use thiserror::Error;

use crate::extremal::ExtremalReport;

/// A grid cell addressed as (row, column).
pub type CellId = (usize, usize);

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("non-finite value at cell (row {row}, col {col})")]
    NonFinite { row: usize, col: usize },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("field is not supported inside the grid: {} cell(s) on the outer margin are nonzero, first {:?}", cells.len(), cells.first())]
    Support { cells: Vec<CellId> },

    #[error("invalid coefficient: {0}")]
    Coefficient(String),

    #[error("Neumann iteration did not converge after {} terms (last increment {:e})", history.len(), history.last().copied().unwrap_or(f64::NAN))]
    Convergence { history: Vec<f64> },

    #[error("degenerate normalization: |f(1) - f(0)| = {0:e}")]
    DegenerateNormalization(f64),

    #[error("solution is not regular: Jacobian <= 0 at {} interior cell(s), first {:?}", cells.len(), cells.first())]
    Regularity { cells: Vec<CellId> },

    #[error("constraint violation at {} cell(s), first {:?}: {reason}", cells.len(), cells.first())]
    Constraint { reason: String, cells: Vec<CellId> },

    #[error("degenerate constraint set: {0}")]
    DegenerateSet(String),

    #[error("boundary is not smooth at {0}; use cone_directions instead")]
    NonSmooth(Complex64),

    #[error("point {point} is not within tolerance of the set boundary (distance {distance:e})")]
    NotOnBoundary { point: Complex64, distance: f64 },

    #[error("inadmissible variation direction: sup |kappa| = {k_inf} is not below 1")]
    InadmissibleDirection { k_inf: f64 },

    #[error("parameter out of range: {0}")]
    Range(String),

    #[error("kernel singularity at w = {w}, w' = {w_prime}")]
    Singularity { w: Complex64, w_prime: Complex64 },

    #[error("point {0} lies outside the grid")]
    OutsideGrid(Complex64),

    #[error("degenerate functional: {0}")]
    Degeneracy(String),

    #[error("invalid functional: {0}")]
    Functional(String),

    #[error("fixed-point iteration failed after {} iteration(s): {source}", reports.len())]
    FixedPoint {
        #[source]
        source: Box<Error>,
        reports: Vec<ExtremalReport>,
    },

    #[error("fixed-point iteration oscillates (step change grew 5 times in a row after {} iterations); try a smaller damping", reports.len())]
    Oscillation { reports: Vec<ExtremalReport> },

    #[error("malformed field file: {0}")]
    Format(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
