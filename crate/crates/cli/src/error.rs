use thiserror::Error;

/// Minimum number of rows accepted from a CSV file.
pub const MIN_SAMPLES: usize = 10;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] trace_pursuit::Error),
    #[error("cannot access {path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed CSV: {0}")]
    Csv(String),
    #[error("no response column 'y' (columns: {})", .columns.join(", "))]
    MissingResponse { columns: Vec<String> },
    #[error("non-numeric value '{value}' at row {row}, column '{column}'")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("too few samples: n = {n}, need at least {MIN_SAMPLES}")]
    TooFewSamples { n: usize },
    #[error("predictor index {index} out of range 1..={p}")]
    IndexOutOfRange { index: usize, p: usize },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.category(),
            CliError::Io { .. } => "io",
            CliError::Csv(_) | CliError::NonNumeric { .. } => "input-format",
            CliError::MissingResponse { .. } => "missing-response",
            CliError::TooFewSamples { .. } => "too-few-samples",
            CliError::IndexOutOfRange { .. } => "index-out-of-range",
            CliError::Usage(_) => "usage",
        }
    }

    pub fn hint(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.hint(),
            CliError::Io { .. } => "check the path and its permissions",
            CliError::Csv(_) => "the file must be UTF-8 CSV with a header row",
            CliError::NonNumeric { .. } => "every cell must parse as a number",
            CliError::MissingResponse { .. } => "name the response column 'y'",
            CliError::TooFewSamples { .. } => "collect more rows before running selection",
            CliError::IndexOutOfRange { .. } => "predictor indices are 1-based column positions",
            CliError::Usage(_) => "see --help for the accepted flags",
        }
    }
}

pub(crate) fn io_error(path: &std::path::Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}
