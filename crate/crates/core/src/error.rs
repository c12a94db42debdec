use thiserror::Error;

/// Errors raised by the geometric and optimization routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("iteration did not converge: {0}")]
    NoConvergence(String),
    #[error("point or ball leaves the chart domain: {0}")]
    OutOfChart(String),
    #[error("degenerate polygon: {0}")]
    DegeneratePolygon(String),
    #[error("invalid region: {0}")]
    InvalidRegion(String),
    #[error("attainment set is empty")]
    EmptyAttainment,
    #[error("no boundary patch avoids the attainment set")]
    PatchUnavailable,
    #[error("line search failed: step fell below {0:e}")]
    LineSearchFailed(f64),
    #[error("too many consecutive self-intersecting steps ({0})")]
    SelfIntersection(usize),
    #[error("singular graph metric: det h = {0:e}")]
    SingularMetric(f64),
    #[error("contact set is empty")]
    EmptyContactSet,
    #[error("backend does not satisfy the hypothesis of this check: {0}")]
    WrongBackend(String),
    #[error("root find failed: {0}")]
    RootFindFailed(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
