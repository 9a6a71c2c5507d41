use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not Hermitian (max |M - M*| = {residual:e})")]
    NotHermitian { residual: f64 },

    #[error("eigenvalue enumeration failed for j = {j} at theta = {theta:?}: {reason}")]
    Enumeration {
        j: i32,
        theta: Vec<f64>,
        reason: String,
    },

    #[error("kernel of L(omega, kappa) has dimension {dim}, expected 1 (eigenvalues {eigenvalues:?})")]
    KernelDimension { dim: usize, eigenvalues: Vec<f64> },

    #[error("group velocity finite differences disagree: h -> {coarse:?}, h/2 -> {fine:?}")]
    Richardson { coarse: Vec<f64>, fine: Vec<f64> },

    #[error("group velocity closed form {closed:?} disagrees with finite differences {numeric:?}")]
    GroupVelocityMismatch { closed: Vec<f64>, numeric: Vec<f64> },

    #[error("field is in {found} space, expected {expected} space")]
    SpaceMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("axis {axis} out of range for a {dim}-dimensional grid")]
    AxisOutOfRange { axis: usize, dim: usize },

    #[error("stale propagator: {0}")]
    StalePropagator(String),

    #[error("observer schedule not representable: {0}")]
    Schedule(String),

    #[error("simulation blew up at t = {t}: {reason}")]
    BlowUp { t: f64, reason: String },

    #[error("harmonic {0} is not present in the state")]
    MissingHarmonic(i32),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
