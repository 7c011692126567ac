use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, bad config, missing paths: exit 2.
    #[error("{0}")]
    Usage(String),
    /// Well-formed request over bad or inconsistent data: exit 1.
    #[error(transparent)]
    Data(#[from] latesearch::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(latesearch::Error::IndexExists(_)) => 2,
            CliError::Data(_) => 1,
        }
    }

    /// Re-files a library error caused by configuration as a usage error.
    pub fn usage(e: latesearch::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}
