use std::path::PathBuf;

use thiserror::Error;

/// Every fallible operation in the crate reports through this type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid distribution: {0}")]
    Distribution(String),

    #[error("optimal control problem is infeasible: {0}")]
    Infeasible(String),

    #[error("solver did not converge after {iterations} iterations (optimality residual {residual:.3e}, cost {cost:.6e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        cost: f64,
        /// Last iterate, kept so the caller can inspect or warm-start from it.
        last: Box<crate::eco_ad::Trajectory>,
    },

    #[error("collision at t = {t:.2} s: vehicle {follower} is {gap:.3} m behind vehicle {leader}\n{dump}")]
    Collision {
        t: f64,
        follower: usize,
        leader: usize,
        gap: f64,
        dump: String,
    },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
