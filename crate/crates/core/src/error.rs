use thiserror::Error;

/// Errors produced by model conversion, estimation, segmentation and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("scale factor on axis {axis} is zero or non-finite ({value})")]
    ZeroScaleFactor { axis: usize, value: f64 },

    #[error("invalid calibration parameters: {0}")]
    InvalidParams(String),

    /// A squared-gain coefficient came out non-positive; the fit is not physical.
    #[error("unphysical estimate: beta{index} = {value} (must be > 0)")]
    UnphysicalEstimate { index: usize, value: f64 },

    #[error("at least {required} observations are required, got {got}")]
    TooFewObservations { required: usize, got: usize },

    #[error("singular design: condition number {condition:e} exceeds bound {bound:e}")]
    SingularDesign { condition: f64, bound: f64 },

    #[error("solver did not converge within {iterations} iterations (last step {last_step:e})")]
    NotConverged { iterations: usize, last_step: f64 },

    #[error("empty segment{}", .step.map(|s| format!(" for step {s}")).unwrap_or_default())]
    EmptySegment { step: Option<usize> },

    #[error("expected {expected} segments, found {found}")]
    SegmentCount { expected: usize, found: usize },

    #[error("samples labelled {label} are not contiguous")]
    OverlappingLabels { label: i64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit status for command-line use: 1 I/O, 2 bad input,
    /// 3 segmentation, 4 singular design, 5 estimation failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) => 1,
            Error::InvalidParams(_)
            | Error::InvalidConfig(_)
            | Error::Parse(_)
            | Error::Csv(_)
            | Error::Json(_) => 2,
            Error::EmptySegment { .. } | Error::SegmentCount { .. } | Error::OverlappingLabels { .. } => 3,
            Error::SingularDesign { .. } | Error::TooFewObservations { .. } => 4,
            Error::NotConverged { .. } | Error::UnphysicalEstimate { .. } | Error::ZeroScaleFactor { .. } => 5,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
