use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },
    #[error("negative entry {value} at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("nonzero diagonal entry {value} at index {index}")]
    NonzeroDiagonal { index: usize, value: f64 },
    #[error("asymmetry {gap} at ({row}, {col}) exceeds tolerance")]
    AsymmetryTooLarge { row: usize, col: usize, gap: f64 },
    #[error("non-finite input value")]
    NonFiniteInput,
    #[error("size must be positive")]
    ZeroSize,
    #[error("invalid measure: {0}")]
    InvalidMeasure(&'static str),
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("linear optimal transport subproblem failed: {0}")]
    LinearOtFailure(&'static str),
    #[error("initial plan violates the marginal constraints (error {0})")]
    InvalidInitialPlan(f64),
    #[error("no views supplied")]
    EmptyViews,
    #[error("support weight product below 1e-15 at ({0}, {1})")]
    DegenerateSupportWeight(usize, usize),
    #[error("{k} prototypes requested for {n} samples")]
    PrototypeCountExceedsSamples { k: usize, n: usize },
    #[error("neighbourhood graph is disconnected ({components} components)")]
    GraphDisconnected { components: usize },
    #[error("k_neighbors = {k} must satisfy 1 <= k < n = {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("label vectors have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("zero variance in off-diagonal entries")]
    ZeroVariance,
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;
