use thiserror::Error;

use crate::config::ConfigViolation;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    Domain(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("blow-up at step {step} (t = {time}): |C| = {norm:.3e} exceeds {threshold:.3e}, energy {energy:.3e}")]
    BlowUp {
        step: usize,
        time: f64,
        norm: f64,
        threshold: f64,
        energy: f64,
    },

    #[error("path {index} (seed {seed}) failed: {source}")]
    PathFailed {
        index: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("ensemble of {paths} paths is below the minimum of {minimum}")]
    EnsembleTooSmall { paths: usize, minimum: usize },

    #[error("increment streams do not match: {0}")]
    IncrementMismatch(String),

    #[error("conductivities are not proportional: {0}")]
    NotProportional(String),

    #[error("trajectory does not carry the data required: {0}")]
    MissingRecord(String),

    #[error("configuration rejected ({} violation(s)):\n{}", .0.len(), render_violations(.0))]
    Config(Vec<ConfigViolation>),

    #[error("unknown subcommand `{0}`")]
    UnknownSubcommand(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }
}

fn render_violations(violations: &[ConfigViolation]) -> String {
    violations
        .iter()
        .map(|v| format!("  {}: {}", v.path, v.message))
        .collect::<Vec<_>>()
        .join("\n")
}
