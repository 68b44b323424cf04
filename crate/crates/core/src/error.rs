use thiserror::Error;

pub type Result<T> = std::result::Result<T, HteError>;

#[derive(Debug, Error)]
pub enum HteError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("continuous column `{column}` has zero variance")]
    DegenerateColumn { column: String },

    #[error("design matrix is rank deficient (aliased columns: {aliased:?})")]
    SingularDesign { aliased: Vec<usize> },

    #[error("kernel matrix is not positive definite even with jitter {jitter:e}")]
    IllConditionedKernel { jitter: f64 },

    #[error("{what} did not converge after {iterations} iterations")]
    NonConvergence { what: &'static str, iterations: usize },

    #[error("expected {expected} columns, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("treatment arm {arm} has {size} units, at least {required} required")]
    ArmTooSmall { arm: u8, size: usize, required: usize },

    #[error("cannot build folds with both treatment arms in every training set: {0}")]
    Stratification(String),

    #[error("column `{0}` already exists")]
    NameCollision(String),

    #[error("missing columns: {missing:?}; unexpected columns: {extra:?}")]
    Schema { missing: Vec<String>, extra: Vec<String> },

    #[error("treated arm is empty after applying the selection rule")]
    EmptyTreatedArm,

    #[error("non-finite intermediate values in {0}")]
    Divergence(&'static str),

    #[error("input has zero variance")]
    ZeroVariance,

    #[error("propensity {value} outside the open interval (0, 1)")]
    PropensityOutOfRange { value: f64 },

    #[error("operation not supported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl HteError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        HteError::InvalidArgument(msg.into())
    }
}

pub(crate) fn check_len(left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(HteError::LengthMismatch { left, right });
    }
    Ok(())
}
