use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(
        "degenerate slicing: response has {distinct} distinct values, {requested} slices requested"
    )]
    DegenerateSlicing { distinct: usize, requested: usize },

    #[error("predictor index {index} out of range for {p} predictors")]
    IndexOutOfRange { index: usize, p: usize },

    #[error("ill-posed moments: working set of size {set_size} needs more than {n} samples")]
    IllPosedMoments { set_size: usize, n: usize },

    #[error(
        "singular design: covariance of working set {set:?} has condition number {condition:.3e}"
    )]
    SingularDesign { set: Vec<usize>, condition: f64 },

    #[error(
        "collinear candidate {index}: residual variance ratio {ratio:.3e} given the working set"
    )]
    CollinearCandidate { index: usize, ratio: f64 },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("degenerate null distribution: all weights are zero")]
    DegenerateDistribution,
}

impl Error {
    /// Short machine-friendly category name.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid-input",
            Error::DegenerateSlicing { .. } => "degenerate-slicing",
            Error::IndexOutOfRange { .. } => "index-out-of-range",
            Error::IllPosedMoments { .. } => "ill-posed-moments",
            Error::SingularDesign { .. } => "singular-design",
            Error::CollinearCandidate { .. } => "collinear-candidate",
            Error::NumericalFailure(_) => "numerical-failure",
            Error::DegenerateDistribution => "degenerate-distribution",
        }
    }

    /// One-line remedy suggestion shown next to the error.
    pub fn hint(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "check the arguments against the documented ranges",
            Error::DegenerateSlicing { .. } => "use fewer slices or treat the response as discrete",
            Error::IndexOutOfRange { .. } => "predictor indices must lie in 1..=p",
            Error::IllPosedMoments { .. } => "reduce the working set or collect more samples",
            Error::SingularDesign { .. } => {
                "remove constant or linearly dependent predictors from the working set"
            }
            Error::CollinearCandidate { .. } => {
                "the candidate is a linear function of the working set; drop it"
            }
            Error::NumericalFailure(_) => "inspect the input for extreme or duplicated values",
            Error::DegenerateDistribution => "the candidate carries no variation; drop it",
        }
    }
}
