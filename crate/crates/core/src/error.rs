use std::path::PathBuf;

use crate::game::StackelbergOutcome;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("zero-length direction vector")]
    ZeroLengthVector,
    #[error("distance must be positive, got {0} m")]
    NonPositiveDistance(f64),
    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("coherent sum over an empty path list")]
    EmptyPathList,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("direct channel of UE {0} is zero; its phase is undefined")]
    ZeroDirectChannel(usize),
    #[error("no UE has a positive weight")]
    NoActiveUsers,

    #[error("index {index} out of range for {len} entries")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("interference must be positive, got {0} W")]
    ZeroInterference(f64),
    #[error("transmit power must be positive, got {0} W")]
    NonPositivePower(f64),
    #[error("channel gain must be positive, got {0}")]
    NonPositiveGain(f64),
    #[error("no sign change of the SINR-target equation in [{lo}, {hi}]")]
    BracketFailure { lo: f64, hi: f64 },
    #[error("UE {ue} cannot meet the SIC constraint: needs {required} W > P_max {p_max} W")]
    InfeasibleSic {
        ue: usize,
        required: f64,
        p_max: f64,
    },
    #[error("best-response dynamics did not converge in {} rounds", .0.trace.len())]
    NonConvergence(Box<StackelbergOutcome>),
    #[error("invalid game configuration: {0}")]
    InvalidGameConfig(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable category, used by the CLI for its exit status line.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Schema(_) | Error::InvalidGameConfig(_) | Error::InvalidTopology(_) => "schema",
            Error::UnknownPreset(_) => "usage",
            Error::Io { .. } | Error::Csv(_) => "io",
            Error::NonConvergence(_) => "convergence",
            _ => "numeric",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
