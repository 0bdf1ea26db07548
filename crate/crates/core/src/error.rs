use thiserror::Error;

/// Everything that can go wrong inside the library.
///
/// Variants fall into three families that the CLI maps onto exit codes:
/// invalid input, infeasibility (a diagnostic or certificate about the
/// instance and parameters), and internal invariant violations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("malformed document: {0}")]
    Parse(String),
    #[error("duplicate {kind} id `{id}`")]
    DuplicateId { kind: &'static str, id: String },
    #[error("unknown {kind} id `{id}`")]
    UnknownId { kind: &'static str, id: String },
    #[error("{what} must be finite and non-negative, got {value}")]
    NegativeValue { what: String, value: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("instance is infeasible: customer `{0}` has no finite distance to any facility")]
    InfeasibleInstance(String),
    #[error("x assigns {value} of customer `{customer}` to facility `{facility}` at infinite distance")]
    InfiniteAssignment {
        facility: String,
        customer: String,
        value: f64,
    },
    #[error("customer `{0}` has no finite distance to any chosen facility")]
    UncoveredCustomer(String),
    #[error("fractional solution is infeasible: {0}")]
    InfeasibleFractional(String),
    #[error("coverage of customer `{customer}` is {coverage} < 1")]
    Undercovered { customer: String, coverage: f64 },
    #[error("|x| = 0: no facility is open")]
    EmptySupport,
    #[error("instance has non-unit facility costs; this algorithm needs the unweighted problem")]
    WeightedInstance,
    #[error("no facility subset fits within budget {0}")]
    NoFeasibleSubset(f64),
    #[error("enumeration guard exceeded: {count} facilities > limit {limit}")]
    GuardExceeded { count: usize, limit: usize },
    #[error("iteration cap {0} exceeded before termination")]
    Nontermination(u64),
    #[error("greedy stalled at iteration {iteration}: best improvement ratio {ratio} <= 0 with the stopping rule unmet")]
    GreedyStalled { iteration: usize, ratio: f64 },
    #[error(
        "infeasibility certificate: pessimistic estimator reached {value} >= 1 at iteration {iteration} \
         (distance term {distance_term}, coverage term {coverage_term})"
    )]
    EstimatorCertificate {
        iteration: u64,
        value: f64,
        distance_term: f64,
        coverage_term: f64,
    },
    #[error("customer `{0}` cannot be covered by any star")]
    UncoverableCustomer(String),
    #[error("estimator derandomization found no non-increasing step and the fallback failed: {0}")]
    FallbackExhausted(String),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// True for errors that carry evidence about the instance rather than
    /// a malformed request.
    pub fn is_infeasibility(&self) -> bool {
        matches!(
            self,
            Error::InfeasibleInstance(_)
                | Error::UncoveredCustomer(_)
                | Error::NoFeasibleSubset(_)
                | Error::GreedyStalled { .. }
                | Error::EstimatorCertificate { .. }
                | Error::UncoverableCustomer(_)
                | Error::Nontermination(_)
                | Error::FallbackExhausted(_)
        )
    }

    pub fn is_internal(&self) -> bool {
        matches!(self, Error::Invariant(_))
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
