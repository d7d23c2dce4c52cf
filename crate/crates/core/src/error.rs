use thiserror::Error;

/// Errors raised by model construction, scenario validation and I/O.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate gate network: v_on {v_on:.4} V must exceed v_off {v_off:.4} V")]
    DegenerateGate { v_on: f64, v_off: f64 },

    #[error("trace needs at least two samples, got {0}")]
    TraceTooShort(usize),

    #[error("time step {dt} s too coarse to realize phase {phase} (peak {i_peak} A, mean {i_avg} A)")]
    CoarseStep {
        phase: &'static str,
        dt: f64,
        i_peak: f64,
        i_avg: f64,
    },

    #[error("unknown sweep parameter `{0}`")]
    UnknownParameter(String),

    #[error("scenario parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl SimError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        SimError::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        SimError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code for the CLI: 1 for validation problems, 2 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Io { .. } => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
