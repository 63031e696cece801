use thiserror::Error;

use crate::design::DesignError;
use crate::linalg::LinalgError;
use crate::metrics::MetricsError;
use crate::oracle::OracleError;
use crate::selector::SelectError;
use crate::splicing::SpliceError;
use crate::synth::SynthError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Splice(#[from] SpliceError),
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("configuration error: {0}")]
    Config(String),
}

/// Coarse failure class, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Input,
    Numerical,
    Config,
}

fn linalg_kind(e: &LinalgError) -> ErrorKind {
    match e {
        LinalgError::SingularSupport { .. } => ErrorKind::Numerical,
        LinalgError::SupportTooLarge { .. } | LinalgError::UnknownGroup { .. } => ErrorKind::Config,
    }
}

fn splice_kind(e: &SpliceError) -> ErrorKind {
    match e {
        SpliceError::Config(_) | SpliceError::Domain(_) | SpliceError::Size { .. } => {
            ErrorKind::Config
        }
        SpliceError::Linalg(e) => linalg_kind(e),
        SpliceError::IterationCap { .. } => ErrorKind::Numerical,
    }
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Design(DesignError::Rank { .. }) => ErrorKind::Numerical,
            Error::Design(_) => ErrorKind::Input,
            Error::Linalg(e) => linalg_kind(e),
            Error::Splice(e) => splice_kind(e),
            Error::Select(SelectError::Fit { source, .. }) => splice_kind(source),
            Error::Select(SelectError::SearchStall { .. }) => ErrorKind::Numerical,
            Error::Select(_) => ErrorKind::Config,
            Error::Synth(SynthError::Spec(_)) => ErrorKind::Config,
            Error::Synth(SynthError::Cholesky { .. }) => ErrorKind::Numerical,
            Error::Synth(SynthError::Io { .. }) => ErrorKind::Input,
            Error::Metrics(MetricsError::ZeroTruth) => ErrorKind::Numerical,
            Error::Metrics(MetricsError::Schema(_)) => ErrorKind::Input,
            Error::Oracle(OracleError::TooLarge { .. }) => ErrorKind::Config,
            Error::Oracle(OracleError::Linalg(e)) => linalg_kind(e),
            Error::Config(_) => ErrorKind::Config,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
