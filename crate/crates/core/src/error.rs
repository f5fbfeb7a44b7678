use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-physical state at node {node}: p = {pressure} Pa, T = {temperature} K")]
    NonPhysical { node: usize, pressure: f64, temperature: f64 },

    #[error("degenerate cell {index}: signed area {area:e}")]
    DegenerateCell { index: usize, area: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("CFL underflow after repeated update rejection (cfl = {cfl:e}, iteration {iteration})")]
    CflUnderflow { cfl: f64, iteration: usize },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("{0}")]
    Domain(String),

    #[error("plot: {0}")]
    Plot(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
