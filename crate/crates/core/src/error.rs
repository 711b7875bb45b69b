use std::path::PathBuf;

/// Failure modes shared by every module of the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("duplicate edge {0}-{1}")]
    DuplicateEdge(u32, u32),

    #[error("self-loop at vertex {0}")]
    SelfLoop(u32),

    #[error("graph is disconnected: vertex {0} is unreachable from the root")]
    Disconnected(u32),

    #[error("value {0} lies outside the support of the offspring distribution")]
    OutOfSupport(u64),

    #[error("empty range")]
    EmptyRange,

    #[error("state space of {0} states exceeds the cap of 2^20")]
    StateCapExceeded(u128),

    #[error("singular linear system: {0}")]
    SingularSystem(String),

    #[error("prune level too low: mu_L = {0} must exceed 1")]
    PruneLevelTooLow(f64),

    #[error("operation needs a fully materialized graph")]
    NotMaterialized,

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable short name used in machine-readable failure reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::DuplicateEdge(..) => "duplicate_edge",
            Error::SelfLoop(_) => "self_loop",
            Error::Disconnected(_) => "disconnected",
            Error::OutOfSupport(_) => "out_of_support",
            Error::EmptyRange => "empty_range",
            Error::StateCapExceeded(_) => "state_cap_exceeded",
            Error::SingularSystem(_) => "singular_system",
            Error::PruneLevelTooLow(_) => "prune_level_too_low",
            Error::NotMaterialized => "not_materialized",
            Error::Parse { .. } => "parse",
            Error::Io { .. } => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure(cond: bool, field: &str, reason: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::invalid(field, reason()))
    }
}
