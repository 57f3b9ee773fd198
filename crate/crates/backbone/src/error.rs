use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Mechanism-level validation failures. Each failed assertion gets its own
/// variant so callers (and the CLI) can report exactly which precondition
/// broke.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("not supercritical: psi'(0+) = {derivative} must be negative")]
    NotSupercritical { derivative: f64 },
    #[error("degenerate mechanism: beta = 0 and no jump measure, psi is linear and has no positive root")]
    LinearMechanism,
    #[error("psi does not tend to +infinity (asymptotic slope {slope} with beta = 0): no positive root exists")]
    NoPositiveRoot { slope: f64 },
    #[error("parameter `{name}` must be strictly positive, got {value}")]
    NonPositiveParameter { name: &'static str, value: f64 },
    #[error("parameter `{name}` must be nonnegative, got {value}")]
    NegativeParameter { name: &'static str, value: f64 },
    #[error("parameter `{name}` must be finite, got {value}")]
    NonFiniteParameter { name: &'static str, value: f64 },
    #[error("atoms must be sorted by size, strictly increasing and distinct")]
    AtomsUnsorted,
    #[error("atom list is empty; use the zero measure instead")]
    AtomsEmpty,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation: {0}")]
    Validation(#[from] ValidationError),

    /// Argument outside the mathematical domain of an operation.
    #[error("domain: {0}")]
    Domain(String),

    /// A numerical routine failed to reach its tolerance or hit a guard.
    #[error("numerical: {0}")]
    Numerical(String),

    /// The requested operation is not supported for this family/backend
    /// combination.
    #[error("capability: {0}")]
    Capability(String),

    /// The excursion survival mass v*_s does not exist (the tail integral
    /// of 1/psi* diverges); raised only when a dressing term needs it.
    #[error("survival mass undefined: {0}")]
    SurvivalMassUndefined(String),

    /// Bad scenario configuration or unusable inputs.
    #[error("config: {0}")]
    Config(String),

    /// An internal invariant failed, signalling an upstream accuracy problem.
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
}

impl Error {
    /// Process exit code for the CLI: statistical failures are reported
    /// separately (exit 1); every error here is an exit-2 condition.
    pub fn exit_code(&self) -> i32 {
        2
    }

    /// Short machine-parsable tag, stable across releases.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Validation(_) => "validation",
            Error::Domain(_) => "domain",
            Error::Numerical(_) => "numerical",
            Error::Capability(_) => "capability",
            Error::SurvivalMassUndefined(_) => "survival-mass-undefined",
            Error::Config(_) => "config",
            Error::InvariantViolation(_) => "invariant",
        }
    }
}
