use thiserror::Error;

/// Errors raised across the engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("applying the event would leave compartment {compartment} with {value} members")]
    NegativeOccupancy { compartment: String, value: i64 },

    #[error("rate family `{family}` produced a non-finite rate ({value})")]
    RateOverflow { family: String, value: f64 },

    #[error("unknown transition `{0}`")]
    UnknownTransition(String),

    #[error("unknown compartment `{0}`")]
    UnknownCompartment(String),

    #[error("jump size ({k1}, {k2}) is not admissible for populations ({y1}, {y2})")]
    InvalidJumpSize { y1: u64, y2: u64, k1: u64, k2: u64 },

    #[error("finite difference of order {order} lost precision (error estimate {error:e}, value {value:e})")]
    PrecisionLoss { order: u64, error: f64, value: f64 },

    #[error("population {requested} exceeds the configured cap of {cap}")]
    PopulationCapExceeded { requested: u64, cap: u64 },

    #[error("state is absorbing: no further events can occur")]
    AbsorbedState,

    #[error("event budget of {0} events exceeded")]
    EventBudgetExceeded(u64),

    #[error("step h = {h} gives h * rate = {product}, above the small-step limit {limit}")]
    StepTooLarge { h: f64, product: f64, limit: f64 },

    #[error("{got} replicates requested, at least {need} are required")]
    TooFewReplicates { got: u64, need: u64 },

    #[error("quadrature failed: {0}")]
    QuadratureFailure(String),

    #[error("rate bound violated: lambda(x) = {lambda} exceeds static bound {bound}")]
    BoundViolated { lambda: f64, bound: f64 },

    #[error("cross-immunity gamma must be 0 under noise, got {0}")]
    UnsupportedGamma(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
