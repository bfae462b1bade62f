use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid needs at least 3 nodes, got {0}")]
    TooFewNodes(usize),

    #[error("field length {got} does not match grid with {expected} nodes")]
    LengthMismatch { expected: usize, got: usize },

    #[error("non-finite value at node {node} in {what}")]
    NonFinite { what: &'static str, node: usize },

    #[error("singular tridiagonal system: pivot {pivot} vanished{}", null_hint(.null_direction))]
    SingularSystem {
        pivot: usize,
        /// Null direction of the discrete operator, when it is known in closed
        /// form (e.g. the constant mode of a pure-Neumann row set).
        null_direction: Option<Vec<f64>>,
    },

    #[error("{what}: argument {value} is outside the domain")]
    Domain { what: &'static str, value: f64 },

    #[error("scalar inversion failed to converge for {what} at target {target}")]
    NoConvergence { what: &'static str, target: f64 },

    #[error("time step {dt:.3e} exceeds the stable limit {max:.3e}")]
    StepSize { dt: f64, max: f64 },

    #[error("solution diverged at t = {t} (field norm {norm:.3e})")]
    Diverged { t: f64, norm: f64 },

    #[error("constraint drift {drift:.3e} exceeded the {budget:.3e} budget at t = {t}")]
    ConstraintDrift { t: f64, drift: f64, budget: f64 },

    #[error("incompatible initial data: {0}")]
    Incompatible(String),

    #[error("validation failed:\n  {}", issues.join("\n  "))]
    Validation { issues: Vec<String> },

    #[error("unknown preset '{name}'; known presets: {}", known.join(", "))]
    UnknownPreset { name: String, known: Vec<String> },

    #[error("unsupported boundary family for this solver: {0}")]
    UnsupportedBoundary(String),

    #[error("integrand has no valid quadratic recession: {0}")]
    InvalidIntegrand(String),

    #[error("invalid test-function pair: {0}")]
    InvalidTestPair(String),

    #[error("empty history: {0}")]
    EmptyHistory(&'static str),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn null_hint(dir: &Option<Vec<f64>>) -> String {
    match dir {
        Some(_) => " (null direction attached)".to_string(),
        None => String::new(),
    }
}
