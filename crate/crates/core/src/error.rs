use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("example {index} has zero norm")]
    ZeroNormRow { index: usize },

    #[error("invalid label set {0:?}: expected {{-1,+1}}, {{0,1}} or {{1,2}}")]
    LabelSet(Vec<String>),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("diverged at step {step}: |x| = {norm:e}")]
    Diverged { step: u64, norm: f64 },

    #[error("staleness {observed} exceeded cap {cap} at step {step}")]
    StalenessCap { step: u64, observed: u64, cap: u64 },

    #[error("barrier watchdog fired after {waited_ms} ms: {arrived}/{expected} workers arrived")]
    BarrierTimeout {
        waited_ms: u128,
        arrived: usize,
        expected: usize,
    },

    #[error("fixed point did not converge after {0} iterations")]
    FixedPoint(usize),

    #[error("no feasible epoch size found: {0}")]
    Infeasible(String),

    #[error("reference solve did not converge: |grad| = {grad_norm:e} after {epochs} epochs")]
    NotConverged { grad_norm: f64, epochs: usize },

    #[error("target {target:e} not reached within {epochs} epochs")]
    TargetNotReached { target: f64, epochs: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Diverged { .. }
                | Error::StalenessCap { .. }
                | Error::NotConverged { .. }
                | Error::TargetNotReached { .. }
                | Error::FixedPoint(_)
                | Error::Infeasible(_)
        )
    }
}
