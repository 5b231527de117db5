use thiserror::Error;

/// Errors shared by all modules.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A model or run configuration is invalid.
    #[error("config error: {0}")]
    Config(String),

    /// The operation is not implemented for the requested mode.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A stated precondition does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A numerical procedure failed or did not converge.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Event-driven integration exceeded its event budget.
    #[error("event budget exhausted: {events} events by t = {t}")]
    EventBudget { events: usize, t: f64 },

    /// Tie-resolution enumeration would exceed the combinatorial guard.
    #[error("combinatorial blowup: {resolutions} tie resolutions exceed the 2^20 guard")]
    Combinatorial { resolutions: u128 },

    /// Sliding on several manifolds at once is not implemented.
    #[error("unsupported sliding: simultaneous active manifolds {manifolds:?}")]
    UnsupportedSliding { manifolds: Vec<String> },

    /// Branch enumeration exceeded its branch or depth budget.
    #[error("branch budget exceeded: {branches} branches at fork depth {depth}")]
    BranchBudget { branches: usize, depth: usize },

    /// File or serialization problem.
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
