use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid box: field `{field}` {reason}")]
    InvalidBox {
        field: &'static str,
        reason: &'static str,
    },

    #[error("malformed detection: {0}")]
    MalformedDetection(String),

    #[error("innovation covariance is numerically singular (condition number {condition:e})")]
    SingularCovariance { condition: f64 },

    #[error("frame {got} of sequence `{sequence_id}` arrived after frame {previous}")]
    OutOfOrderFrame {
        sequence_id: String,
        previous: u64,
        got: u64,
    },

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("schema error on line {line}: field `{field}` {message}")]
    Schema {
        line: usize,
        field: String,
        message: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("ground truth is empty")]
    EmptyGroundTruth,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 3,
            _ => 2,
        }
    }
}
