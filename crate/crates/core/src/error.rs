use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum BanditError {
    #[error("arm index {arm} out of range for {n} arms")]
    ArmOutOfRange { arm: usize, n: usize },
    #[error("pull count must be positive")]
    ZeroPulls,
    #[error("mean {value} at position {index} is outside [0, 1]")]
    MeanOutOfRange { index: usize, value: f64 },
    #[error("invalid K = {k} for {n} arms")]
    InvalidK { k: usize, n: usize },
    #[error("invalid {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("means must be sorted in non-increasing order (violation at position {0})")]
    Unsorted(usize),
    #[error("no arms given")]
    Empty,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{0}")]
    Io(String),
    #[error("budget {budget} is smaller than the number of arms {n}")]
    BudgetTooSmall { budget: u64, n: usize },
    #[error("pull cap exceeded on arm {arm}")]
    PullCapExceeded { arm: usize },
    #[error("selection has {got} arms, expected {expected}")]
    SelectionSize { got: usize, expected: usize },
    #[error("arm {0} appears more than once in the selection")]
    DuplicateArm(usize),
    #[error("unknown algorithm `{0}`")]
    UnknownAlgorithm(String),
    #[error("input too large: {0}")]
    TooLarge(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T, E = BanditError> = std::result::Result<T, E>;

pub(crate) fn check_unit_interval_open(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(BanditError::InvalidParameter {
            name,
            value,
            reason: "must lie in (0, 1)",
        })
    }
}

pub(crate) fn check_positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(BanditError::InvalidParameter {
            name,
            value,
            reason: "must be positive and finite",
        })
    }
}
