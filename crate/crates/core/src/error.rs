use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("triangle {index} has zero area")]
    DegenerateTriangle { index: usize },

    #[error("matrix is not positive definite (pivot {pivot}, value {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("precision matrix is numerically indefinite at log_sigma2={log_sigma2}, log_rho={log_rho}")]
    IndefinitePrecision { log_sigma2: f64, log_rho: f64 },

    #[error("jitter sampling failed after {attempts} rejections")]
    JitterRejection { attempts: usize },

    #[error("cluster {cluster}: integration design has no positive weight")]
    DegenerateDesign { cluster: usize },

    #[error("non-finite linear predictor at cluster {cluster}, point {point}")]
    NonFiniteEta { cluster: usize, point: usize },

    #[error("inner Newton iterations did not converge: {0}")]
    InnerConvergence(String),

    #[error("outer optimisation did not converge after {evaluations} evaluations; trace: {trace}")]
    OuterConvergence { evaluations: usize, trace: String },

    #[error("location sampling could not satisfy counts (urban {urban}, rural {rural}) in {draws} draws")]
    LocationSampling {
        urban: usize,
        rural: usize,
        draws: usize,
    },

    #[error("scenario failed: {failed} of {total} fits failed")]
    ScenarioFailed { failed: usize, total: usize },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn parse(path: impl AsRef<std::path::Path>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.as_ref().display().to_string(),
            line,
            message: message.into(),
        }
    }
}
