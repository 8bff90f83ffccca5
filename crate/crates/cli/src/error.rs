use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("invalid scenario: {0}")]
    Invalid(String),

    #[error(transparent)]
    Core(#[from] sdc_core::Error),
}

impl CliError {
    /// 0 ok, 2 input, 3 analysis, 4 failed stability certificate, 5 blowup.
    pub fn exit_code(&self) -> i32 {
        use sdc_core::Error as E;
        match self {
            CliError::Read { .. } | CliError::Write { .. } | CliError::Parse { .. } | CliError::Invalid(_) => 2,
            CliError::Core(e) => match e.root() {
                E::InvalidInput(_) | E::DimensionMismatch(_) => 2,
                E::StabilityMarginFailed { .. } => 4,
                E::NumericalBlowup { .. } => 5,
                _ => 3,
            },
        }
    }

    /// Machine-readable summary printed on stdout on failure.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = serde_json::json!({
            "status": "error",
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        });
        if let CliError::Core(e) = self {
            match e.root() {
                sdc_core::Error::StabilityMarginFailed { supremum } => v["margin"] = (*supremum).into(),
                sdc_core::Error::NumericalBlowup { step, t, norm } => {
                    v["blowup"] = serde_json::json!({ "step": step, "t": t, "norm": norm });
                }
                _ => {}
            }
        }
        v
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
