use std::fmt;

/// Everything a subcommand can fail with, classified for the exit code.
#[derive(Debug)]
pub enum CliError {
    Lib(ruinkit::Error),
    /// Bad flags or inputs that the library never saw.
    Usage(String),
    /// A `verify` suite found a violated invariant.
    Violation { invariant: String, detail: String },
    File { path: String, source: std::io::Error },
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn file(path: impl Into<String>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| CliError::File { path, source }
    }

    /// 2 for numerical failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Lib(e) if e.is_numerical() => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Lib(e) => write!(f, "{e}"),
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Violation { invariant, detail } => write!(f, "invariant {invariant} violated: {detail}"),
            CliError::File { path, source } => write!(f, "{path}: {source}"),
        }
    }
}

impl std::error::Error for CliError {}

macro_rules! from_lib {
    ($($ty:path),* $(,)?) => {
        $(impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Lib(e.into())
            }
        })*
    };
}

from_lib!(
    ruinkit::Error,
    ruinkit::graph::GraphError,
    ruinkit::models::ModelError,
    ruinkit::domain::DomainError,
    ruinkit::linalg::SolveError,
    ruinkit::absorbing::AbsorbingError,
    ruinkit::spectral::SpectralError,
    ruinkit::doob::DoobError,
    ruinkit::estimates::EstimateError,
    ruinkit::montecarlo::SimError,
    ruinkit::io::IoError,
);

pub type CliResult<T> = Result<T, CliError>;
