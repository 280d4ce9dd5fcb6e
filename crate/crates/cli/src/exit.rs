//! Process exit codes.

use ifnas_core::Error;

pub const OK: u8 = 0;
pub const INFEASIBLE_BUDGET: u8 = 2;
pub const NUMERICAL: u8 = 3;
pub const USAGE: u8 = 64;
pub const DATA: u8 = 65;
pub const NO_INPUT: u8 = 66;
pub const INTERNAL: u8 = 70;

/// A bad argument combination detected after parsing.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn core_code(e: &Error) -> u8 {
    match e {
        Error::InfeasibleBudget { .. } => INFEASIBLE_BUDGET,
        Error::Numerical { .. } => NUMERICAL,
        Error::Domain(_) => USAGE,
        Error::Io(_) => NO_INPUT,
        Error::InvalidSpec { .. }
        | Error::InfeasibleInjection(_)
        | Error::InvalidArchitecture(_)
        | Error::Parse(_)
        | Error::Data(_)
        | Error::Unsupported(_) => DATA,
        Error::Shape { .. } | Error::Structural(_) | Error::StaleGraph => INTERNAL,
    }
}

/// The outermost recognised cause decides the code.
pub fn code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return core_code(e);
        }
        if cause.is::<Usage>() {
            return USAGE;
        }
        if cause.is::<std::io::Error>() {
            return NO_INPUT;
        }
        if cause.is::<toml::de::Error>() || cause.is::<serde_json::Error>() {
            return DATA;
        }
    }
    INTERNAL
}
