use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("entry ({i}, {j}) outside a {m}x{n} matrix")]
    OutOfRangeIndex { i: usize, j: usize, m: usize, n: usize },
    #[error("duplicate entry ({i}, {j})")]
    DuplicateEntry { i: usize, j: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("requested {k} singular triplets but at most {max} exist")]
    RankTooLarge { k: usize, max: usize },
    #[error("singular value iteration did not converge after {0} steps")]
    ConvergenceFailure(usize),
    #[error("matrix rank {rank} exceeds factor width {d}")]
    RankExceedsD { rank: usize, d: usize },
    #[error("spectral norm {norm} exceeds squared radius {bound}")]
    SpectralBoundViolated { norm: f64, bound: f64 },
    #[error("negative input {0}")]
    NegativeInput(f64),
    #[error("branch must be 1 or 2, got {0}")]
    InvalidBranch(u8),
    #[error("line search on block {block} exceeded the doubling cap at iteration {iter}")]
    LineSearchDiverged { block: char, iter: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("index {index} out of range 0..={max}")]
    IndexOutOfRange { index: usize, max: usize },
    #[error("sampling ratio {0} must lie in (0, 1]")]
    SrTooLarge(f64),
    #[error("no held-out entries to score")]
    EmptyHoldout,
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("rating {value} on line {line} outside the valid range")]
    RatingOutOfRange { line: usize, value: f64 },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
