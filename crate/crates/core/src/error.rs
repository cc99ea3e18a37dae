use thiserror::Error;

pub type Result<T, E = HpflError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum HpflError {
    #[error("non-finite value in {what} (round {round:?}, ue {ue:?})")]
    NonFinite {
        what: &'static str,
        round: Option<usize>,
        ue: Option<(usize, usize)>,
    },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cannot aggregate an empty set of models")]
    EmptyAggregate,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate probe sampling: {0}")]
    DegenerateSampling(String),
    #[error("edge server {es} is selected but holds no cached meta-gradients")]
    MissingGradient { es: usize },
    #[error("staleness of edge server {es} would exceed the bound S = {bound}")]
    StalenessOverflow { es: usize, bound: usize },
    #[error("infeasible allocation: {0}")]
    Infeasible(String),
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl HpflError {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        HpflError::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Attach round / UE identity to a non-finite error raised deeper in the stack.
    pub fn at(self, round: usize, ue: (usize, usize)) -> Self {
        match self {
            HpflError::NonFinite { what, .. } => HpflError::NonFinite {
                what,
                round: Some(round),
                ue: Some(ue),
            },
            other => other,
        }
    }
}
