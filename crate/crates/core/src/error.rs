use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported spatial dimension {0} (expected 2 or 3)")]
    Dimension(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("tensor is not elliptic (ellipticity constant {0:.3e})")]
    NotElliptic(f64),

    #[error("tensor violates {which} symmetry at {index:?}")]
    Symmetry { which: &'static str, index: [usize; 4] },

    #[error("invalid moduli: {0}")]
    Moduli(String),

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("inclusion in cell {cell:?} does not fit its cell: {reason}")]
    CellFit { cell: [i64; 2], reason: String },

    #[error("invalid model: {0}")]
    Model(String),

    #[error("meshing failed: {0}")]
    Mesh(String),

    #[error("assembly failed: {0}")]
    Assembly(String),

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("eigensolver did not converge: {converged} of {requested} pairs after {iterations} iterations")]
    NoConvergence { requested: usize, converged: usize, iterations: usize },

    #[error("lambda = {lambda} is within the pole guard of nu = {pole} (distance {distance:.3e}); adjust pole_guard or the lambda grid")]
    NearPole { lambda: f64, pole: f64, distance: f64 },

    #[error("resolvent solve residual {residual:.3e} exceeds tolerance at lambda = {lambda}; the system is close to singular, adjust pole_guard")]
    Resolvent { lambda: f64, residual: f64 },

    #[error("disconnected matrix region: {0}")]
    Disconnected(String),

    #[error("no propagating branch at lambda = {0}")]
    NoPropagatingBranch(f64),

    #[error("dof budget exceeded: {dofs} > {budget}")]
    Budget { dofs: usize, budget: usize },

    #[error("parse error in {what}: {msg}")]
    Parse { what: &'static str, msg: String },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("cache: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(what: &'static str, msg: impl ToString) -> Self {
        Error::Parse { what, msg: msg.to_string() }
    }
}
