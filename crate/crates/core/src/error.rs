use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration field violates one of its invariants.
    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    /// Malformed numerical input (non-finite gains, mismatched shapes, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A PZF degree-of-freedom pair outside its feasible set.
    #[error("infeasible PZF degrees of freedom: {0}")]
    InfeasiblePzf(String),

    /// The target estimate lies (numerically) inside the span of the cancelled estimates.
    #[error("degenerate cancellation span: projected norm {norm:e}")]
    DegenerateSpan { norm: f64 },

    #[error("search space too large: {size} assignments exceeds the limit of {limit}")]
    InstanceTooLarge { size: f64, limit: f64 },

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    /// The cellular QoS constraints leave no interference budget for D2D links.
    #[error("infeasible D2D interference budget: zeta = {zeta:e} < 0")]
    InfeasibleBudget { zeta: f64 },

    #[error("bisection could not bracket the multiplier after {doublings} doublings")]
    BisectionBracket { doublings: usize },

    #[error("cellular QoS targets are unattainable under the power caps")]
    CellularInfeasible,

    #[error("experiment spec field `{field}`: {reason}")]
    InvalidSpec { field: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn spec(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidSpec {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
