use thiserror::Error;

/// Errors surfaced by the library.
///
/// Path rejection (a series with no valid hidden path) is *not* an error;
/// it is a value returned by the tracing and evidence APIs. Errors here
/// are contract violations, malformed inputs, and I/O failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("invalid series: {0}")]
    InvalidSeries(String),

    #[error("invalid transition assignment: {0}")]
    InvalidAssignment(String),

    #[error("invalid generator: {0}")]
    InvalidGenerator(String),

    #[error("enumeration capacity exceeded: {0}")]
    Capacity(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("no topology in the library accepts the data")]
    NoAcceptingTopology,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
