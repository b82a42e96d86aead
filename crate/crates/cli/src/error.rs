use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("config line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unknown preset {0:?} (expected q1, q2 or q3)")]
    UnknownPreset(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Core(#[from] aoii_core::Error),
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_GUARD: i32 = 4;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use aoii_core::Error as E;
        match self {
            CliError::Config(_) | CliError::Parse { .. } | CliError::UnknownPreset(_) => {
                EXIT_CONFIG
            }
            CliError::Io { .. } | CliError::Csv(_) => EXIT_CONFIG,
            CliError::Core(e) => match e {
                E::GridTooLarge { .. } => EXIT_GUARD,
                E::SingularSystem | E::NonConvergence { .. } | E::HorizonTooSmall { .. } => {
                    EXIT_NUMERICAL
                }
                _ => EXIT_CONFIG,
            },
        }
    }
}
