use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("sensor placement failed after {attempts} attempts (positions stayed coplanar)")]
    PlacementExhausted { attempts: usize },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("singular measurement geometry: {0}")]
    Singular(String),

    #[error("system is not distributed observable (rank {rank} of {dim})")]
    NotObservable { rank: usize, dim: usize },

    #[error("gain design infeasible: best spectral radius {best_rho:.6} vs bound {rho_bound}")]
    GainInfeasible { best_rho: f64, rho_bound: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("config error in {path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
