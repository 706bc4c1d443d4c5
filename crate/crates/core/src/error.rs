use thiserror::Error;

/// A violated component of the device resource budget.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResourceDeficit {
    pub resource: &'static str,
    pub required: u64,
    pub available: u64,
}

impl std::fmt::Display for ResourceDeficit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} (required {}, available {})",
            self.resource, self.required, self.available
        )
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("length error: {0}")]
    Length(String),

    #[error("malformed data: {0}")]
    Format(String),

    #[error("infeasible plan, violated resources: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", "))]
    Feasibility(Vec<ResourceDeficit>),

    #[error("dependency cycle: back edge {from} -> {to}")]
    Cycle { from: usize, to: usize },

    #[error("unschedulable: {0}")]
    Unschedulable(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("config error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn length(msg: impl Into<String>) -> Self {
        Error::Length(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
