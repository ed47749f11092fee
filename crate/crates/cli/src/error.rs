use std::fmt;

use serde_json::json;

/// Every failure maps onto one process exit code.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Numerical(edgeburst::Error),
    Verification(String),
    Io(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Io(_) => 1,
            Failure::Config(_) => 2,
            Failure::Numerical(_) => 3,
            Failure::Verification(_) => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Failure::Io(_) => "io",
            Failure::Config(_) => "config",
            Failure::Numerical(_) => "numerical",
            Failure::Verification(_) => "verification",
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let detail = match self {
            Failure::Numerical(e) => serde_json::to_value(format!("{e:?}")).unwrap_or_default(),
            _ => serde_json::Value::Null,
        };
        json!({
            "error": {
                "kind": self.kind(),
                "message": self.to_string(),
                "detail": detail,
                "exit_code": self.exit_code(),
            }
        })
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Numerical(e) => write!(f, "numerical failure: {e}"),
            Failure::Verification(m) => write!(f, "verification failed: {m}"),
            Failure::Io(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<edgeburst::Error> for Failure {
    fn from(e: edgeburst::Error) -> Self {
        // Parameter validation errors come from the configuration.
        match e {
            edgeburst::Error::InvalidParameter(m) => Failure::Config(m),
            other => Failure::Numerical(other),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.into())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Io(e.into())
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Io(e)
    }
}

pub type CliResult<T> = std::result::Result<T, Failure>;
