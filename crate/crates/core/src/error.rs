use thiserror::Error;

use crate::search::MechanismSet;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A constructed object failed validation; the message names the
    /// offending allocation, agent or suballocation.
    #[error("validation failed: {0}")]
    Validation(String),

    #[error("{what} needs {required} units of work but the budget is {limit}")]
    Budget {
        what: &'static str,
        required: u128,
        limit: u128,
    },

    /// The search ran out of nodes or time. `partial` holds every mechanism
    /// found before the budget ran out; it is not the complete answer.
    #[error("search incomplete after {nodes} nodes ({} mechanisms found so far)", partial.len())]
    Incomplete {
        partial: Box<MechanismSet>,
        nodes: u64,
    },

    #[error("mechanism output at profile {profile} is infeasible")]
    Infeasible { profile: usize },

    /// An internal invariant was broken. Never expected on validated inputs.
    #[error("defect: {0}")]
    Defect(String),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn is_resource(&self) -> bool {
        matches!(self, Error::Budget { .. } | Error::Incomplete { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
