use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{}", render_validation(key, message))]
    Validation { key: String, message: String },
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] prehyp_core::Error),
    #[error("{0}")]
    Internal(String),
}

fn render_validation(key: &str, message: &str) -> String {
    if message.contains(key) {
        message.to_string()
    } else {
        format!("{key}: {message}")
    }
}

impl CliError {
    /// 1 for configuration problems, 3 for everything the scenario could not
    /// have caused.
    pub fn exit_code(&self) -> i32 {
        use prehyp_core::Error as E;
        match self {
            CliError::Parse { .. } | CliError::Validation { .. } | CliError::Io(_) => 1,
            CliError::Core(e) => match e {
                E::Expr(_)
                | E::OutsideChart { .. }
                | E::InvalidChart(_)
                | E::NonPositiveMetric { .. }
                | E::RankMismatch(..)
                | E::GridTooSmall(_)
                | E::Cfl(_)
                | E::NotPrenormal(_)
                | E::NotNormallyHyperbolic(_)
                | E::Unsupported(_)
                | E::CausalMargin(_)
                | E::InvalidData(_) => 1,
                E::GridMismatch(_) | E::Singular { .. } => 3,
            },
            CliError::Internal(_) => 3,
        }
    }
}
