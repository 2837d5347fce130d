use std::fmt;
use std::path::PathBuf;

/// Error type shared by all modules of this crate.
#[derive(Debug)]
pub enum Error {
    /// A caller-supplied argument violates a precondition (shape mismatch,
    /// band edges above Nyquist, signal too short, ...).
    InvalidArgument(String),
    /// An operation was invoked in the wrong order (e.g. backward on a tape
    /// that never recorded a forward pass).
    State(String),
    /// A linear-algebra or optimization routine failed numerically.
    Numerical(String),
    /// Training produced a non-finite loss or gradient at the given step.
    TrainingDiverged { step: usize, detail: String },
    /// An SDE trajectory left the finite range at the given step.
    SimulationDiverged { step: usize },
    /// A smoother's state estimate left the finite range at the given step.
    EstimationDiverged { step: usize },
    /// An unknown generator name, inconsistent experiment setup, or other
    /// configuration problem.
    Config(String),
    /// A container or CSV file does not match the expected format.
    Format(String),
    /// An I/O failure, annotated with the path involved.
    Io { path: PathBuf, source: std::io::Error },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::State(msg) => write!(f, "invalid state: {msg}"),
            Error::Numerical(msg) => write!(f, "numerical failure: {msg}"),
            Error::TrainingDiverged { step, detail } => {
                write!(f, "training diverged at step {step}: {detail}")
            }
            Error::SimulationDiverged { step } => {
                write!(f, "simulation diverged at step {step}: state is non-finite")
            }
            Error::EstimationDiverged { step } => {
                write!(f, "estimation diverged at step {step}: state estimate is non-finite")
            }
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::Format(msg) => write!(f, "format error: {msg}"),
            Error::Io { path, source } => write!(f, "i/o error on {}: {source}", path.display()),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
