use std::path::PathBuf;

use crate::lattice::Coord;

/// Failures surfaced by the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("site {site:?} has no neighbour in direction {dir:?}")]
    MissingNeighbor { site: Coord, dir: Coord },

    #[error("singular configuration: bond {bond} has zero length")]
    Singular { bond: usize },

    #[error("mesh error: {0}")]
    Mesh(String),

    #[error("geometry error in cell {cell}: {msg}")]
    Geometry { cell: usize, msg: String },

    #[error("interpolation error: no value for node {node}")]
    Interpolation { node: usize },

    #[error("consistency system infeasible: residual {residual:e} in row {row}")]
    Infeasible { row: usize, residual: f64 },

    #[error("no convergence after {iterations} iterations (gradient norm {grad_norm:e})")]
    NonConvergence { iterations: usize, grad_norm: f64 },

    #[error("eigensolver failed: {0}")]
    Eigen(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("i/o error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

impl Error {
    /// Short machine-readable tag, used in result tables.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::MissingNeighbor { .. } => "missing_neighbor",
            Error::Singular { .. } => "singular",
            Error::Mesh(_) => "mesh",
            Error::Geometry { .. } => "geometry",
            Error::Interpolation { .. } => "interpolation",
            Error::Infeasible { .. } => "infeasible",
            Error::NonConvergence { .. } => "non_convergence",
            Error::Eigen(_) => "eigen",
            Error::InsufficientData(_) => "insufficient_data",
            Error::Io { .. } => "io",
            Error::Internal(_) => "internal",
        }
    }
}
