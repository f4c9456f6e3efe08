use std::path::PathBuf;

/// Failure of one pipeline command, tagged with the step that raised it.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{step}: {source}")]
    Core {
        step: &'static str,
        #[source]
        source: accd_core::Error,
    },
    #[error("{step}: {path}: {source}")]
    Csv {
        step: &'static str,
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{0}")]
    Usage(String),
}

pub type CliResult<T> = Result<T, CliError>;

/// Attaches a step name to core errors.
pub(crate) trait StepContext<T> {
    fn step(self, step: &'static str) -> CliResult<T>;
}

impl<T> StepContext<T> for accd_core::Result<T> {
    fn step(self, step: &'static str) -> CliResult<T> {
        self.map_err(|source| CliError::Core { step, source })
    }
}

pub(crate) fn csv_err(step: &'static str, path: impl Into<PathBuf>) -> impl FnOnce(csv::Error) -> CliError {
    let path = path.into();
    move |source| CliError::Csv { step, path, source }
}

pub(crate) fn io_err(step: &'static str, path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
    let path = path.into();
    move |source| CliError::Core {
        step,
        source: accd_core::Error::Io { path, source },
    }
}
