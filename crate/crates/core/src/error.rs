use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("problem dimension must be at least {min}, got {got}")]
    TooFewCoordinates { min: usize, got: usize },

    #[error("invalid bounds at coordinate {index}: lower {lower} > upper {upper}")]
    InvalidBounds { index: usize, lower: f64, upper: f64 },

    #[error("non-finite value at coordinate {index}")]
    NonFinite { index: usize },

    #[error("feasible set is empty: target {gamma} outside [{min_mass}, {max_mass}]")]
    EmptyFeasibleSet {
        gamma: f64,
        min_mass: f64,
        max_mass: f64,
    },

    #[error("weight at coordinate {index} must be positive, got {value}")]
    NonPositiveWeight { index: usize, value: f64 },

    #[error("Lipschitz constant at coordinate {index} must be positive, got {value}")]
    NonPositiveLipschitz { index: usize, value: f64 },

    #[error("point is infeasible: {0}")]
    Infeasible(String),

    #[error("negative slack {slack} at coordinate {index}")]
    NegativeSlack { index: usize, slack: f64 },

    #[error("rule `{rule}` cannot be combined with step policy {policy}")]
    IncompatiblePolicy { rule: String, policy: String },

    #[error("unknown rule `{0}`")]
    UnknownRule(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("KKT system is singular or ill-posed ({0}); add a ridge term to make the objective strongly convex")]
    SingularKkt(String),

    #[error("sum-zero precondition violated: sum is {0}")]
    NotSumZero(f64),

    #[error("strong convexity constant must be positive, got {0}")]
    NonPositiveMu(f64),

    #[error("oracle only supports n <= {max}, got {got}")]
    OracleTooLarge { max: usize, got: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
