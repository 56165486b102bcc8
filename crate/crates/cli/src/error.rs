use texsynth_core::Error as CoreError;

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;
pub const EXIT_GENERATION: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] CoreError),

    /// Some synthesis tasks could not produce a mask bundle.
    #[error("{failed} of {total} task(s) failed mask generation")]
    Generation { failed: usize, total: usize },

    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Generation { .. } => EXIT_GENERATION,
            CliError::Other(_) => EXIT_FAILURE,
            CliError::Core(e) => match e.root() {
                CoreError::Transport { .. } | CoreError::Parse { .. } => EXIT_BACKEND,
                CoreError::GenerationFailed { .. } => EXIT_GENERATION,
                CoreError::UnknownCategory(_) | CoreError::Json(_) => EXIT_CONFIG,
                _ => EXIT_FAILURE,
            },
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(CoreError::Json(e))
    }
}

pub type CliResult<T> = Result<T, CliError>;
