use thiserror::Error;

/// Errors produced by the trajectory pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("no points")]
    NoPoints,
    #[error("invalid point: ({x}, {y})")]
    InvalidPoint { x: f64, y: f64 },
    #[error("invalid radius {0}")]
    InvalidRadius(f64),
    #[error("empty trajectory")]
    EmptyTrajectory,
    #[error("empty journey: sequence has no interior cells")]
    EmptyJourney,
    #[error("invalid cell sequence: {0}")]
    InvalidSequence(String),
    #[error("unknown cell {0}")]
    UnknownCell(u32),
    #[error("unknown token {0}")]
    UnknownToken(String),
    #[error("row {row}: {message}")]
    MalformedRow { row: usize, message: String },
    #[error("input not sorted at row {row}: {message}")]
    Unsorted { row: usize, message: String },
    #[error("empty input")]
    EmptyInput,
    #[error("invalid split fractions {0:?}")]
    InvalidFractions([f64; 3]),
    #[error("insufficient history: window starts at minute {window_start}, series starts at {series_start}")]
    InsufficientHistory { window_start: i64, series_start: i64 },
    #[error("window beyond series: window ends at minute {window_end}, series ends at {series_end}")]
    WindowBeyondSeries { window_end: i64, series_end: i64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("label {label} out of range for vocabulary of size {size}")]
    LabelOutOfRange { label: usize, size: usize },
    #[error("diverged: {0}")]
    Diverged(String),
    #[error("missing parameter {0}")]
    MissingParam(String),
    #[error("invalid prefix: {0}")]
    InvalidPrefix(String),
    #[error("invalid task: {0}")]
    InvalidTask(String),
    #[error("mismatched record sets: {0}")]
    MismatchedRecords(String),
    #[error("kernel matrix not positive definite after jitter {0}")]
    SingularKernel(f64),
    #[error("all trials failed")]
    AllTrialsFailed,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
