use thiserror::Error;

pub type Result<T> = std::result::Result<T, RafniError>;

#[derive(Debug, Error)]
pub enum RafniError {
    #[error("invalid class count {0}: at least 2 classes are required")]
    InvalidArity(usize),

    #[error("invalid noise rate {0}: must lie in [0, 1]")]
    InvalidRate(f64),

    #[error("unknown class {class} (dataset has {n_classes} classes)")]
    UnknownClass { class: usize, n_classes: usize },

    #[error("invalid transition set: {0}")]
    InvalidTransitions(String),

    #[error("incomplete grouping: {0}")]
    IncompleteGrouping(String),

    #[error("insufficient data: {got} values, need at least {need}")]
    InsufficientData { got: usize, need: usize },

    #[error("degenerate data: all values are identical")]
    DegenerateData,

    #[error("invalid gaussian (mean={mean}, std={std})")]
    InvalidGaussian { mean: f64, std: f64 },

    #[error("quantile of an empty sequence")]
    EmptySequence,

    #[error("invalid quantile order {0}: must lie in [0, 1]")]
    InvalidOrder(f64),

    #[error("snapshot/state desync: {0}")]
    Desync(String),

    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("stratification infeasible: class {class} has {count} members but {folds} folds were requested")]
    StratificationInfeasible { class: usize, count: usize, folds: usize },

    #[error("audit unavailable: no clean label for instance {0}")]
    AuditUnavailable(usize),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },

    #[error("type error at line {line}: column `{column}` value `{value}` is not numeric")]
    Type { line: u64, column: String, value: String },

    #[error("label error at line {line}: {msg}")]
    Label { line: u64, msg: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl RafniError {
    /// Process exit code for the CLI: 2 config, 3 data, 4 runtime.
    pub fn exit_code(&self) -> i32 {
        use RafniError::*;
        match self {
            InvalidArity(_) | InvalidRate(_) | InvalidTransitions(_) | InvalidOrder(_)
            | Config(_) => 2,
            UnknownClass { .. }
            | IncompleteGrouping(_)
            | InsufficientData { .. }
            | DegenerateData
            | EmptySequence
            | Shape(_)
            | StratificationInfeasible { .. }
            | AuditUnavailable(_)
            | Parse { .. }
            | Type { .. }
            | Label { .. }
            | Checkpoint(_)
            | Io(_)
            | Json(_) => 3,
            InvalidGaussian { .. } | Desync(_) | Divergence { .. } => 4,
        }
    }
}
