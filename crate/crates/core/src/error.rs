use crate::space::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid spec field `{field}`: {reason}")]
    InvalidSpec { field: String, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("infeasible budget: {budget} MAdds is below the minimal valid architecture cost {minimum}")]
    InfeasibleBudget { budget: u64, minimum: u64 },

    #[error("infeasible injection: {0}")]
    InfeasibleInjection(String),

    #[error("invalid architecture: {}", format_violations(.0))]
    InvalidArchitecture(Vec<Violation>),

    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("numerical fault at iteration {iteration}: {detail}")]
    Numerical { iteration: u64, detail: String },

    #[error("structural fault: {0}")]
    Structural(String),

    #[error("computation graph is stale: parameters changed after the forward pass")]
    StaleGraph,

    #[error("parse error: {0}")]
    Parse(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn spec(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidSpec {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}
