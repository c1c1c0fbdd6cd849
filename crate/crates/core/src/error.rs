use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: expected {expected_n}^3 cells on [-{expected_l}, {expected_l}), found {found_n}^3 on [-{found_l}, {found_l})")]
    GridMismatch {
        expected_n: usize,
        expected_l: f64,
        found_n: usize,
        found_l: f64,
    },

    #[error("field has {found} samples but the grid needs {expected}")]
    FieldLength { expected: usize, found: usize },

    #[error("symbol is not finite at xi = ({}, {}, {})", xi[0], xi[1], xi[2])]
    SingularSymbol { xi: [f64; 3] },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("fixed-point map is not contractive: estimated norm {estimate:.4} >= 1")]
    NonContractive { estimate: f64 },

    #[error("no convergence after {iterations} iterations (last residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("resolution guard violated: k*h = {kh:.4} exceeds {limit} at k = {k}")]
    Resolution { k: f64, kh: f64, limit: f64 },

    #[error("shift {shift} is not an integer multiple of the wavenumber step {dk}")]
    ShiftLattice { shift: f64, dk: f64 },

    #[error("archive has no sample at k = {k} for direction index {direction}")]
    MissingSample { k: f64, direction: usize },

    #[error("archive direction ({}, {}, {}) not found", direction[0], direction[1], direction[2])]
    MissingDirection { direction: [f64; 3] },

    #[error("{expected} estimation needs a {expected_mode} archive, found {found_mode}")]
    WrongMode {
        expected: &'static str,
        expected_mode: &'static str,
        found_mode: &'static str,
    },

    #[error("polar lattice is not Hermitian: {0}")]
    NotHermitian(String),

    #[error("empty lattice")]
    EmptyLattice,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
