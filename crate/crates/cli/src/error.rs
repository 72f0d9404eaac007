use std::path::PathBuf;

use thiserror::Error;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("stage {stage} needs {}, which does not exist (run `apc {producer}` first)", path.display())]
    MissingArtifact {
        stage: &'static str,
        producer: &'static str,
        path: PathBuf,
    },

    #[error("{0}")]
    Config(String),

    #[error("{}:{line}: {message}", path.display())]
    Submission {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] apc_core::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable error kind for scripts.
    pub fn code(&self) -> &'static str {
        use apc_core::Error as E;
        match self {
            CliError::MissingArtifact { .. } => "stage-dependency",
            CliError::Config(_) => "config",
            CliError::Submission { .. } => "submission",
            CliError::Io { .. } => "io",
            CliError::Core(e) => match e {
                E::Io { .. } => "io",
                E::Parse { .. } => "parse",
                E::Ingest(_) => "ingest",
                E::InsufficientPlaylists { .. } => "insufficient-playlists",
                E::TrackData { .. } => "track-data",
                E::HyperParam(_) => "hyperparameter",
                E::OutOfRange { .. } => "out-of-range",
                E::Diverged { .. } => "diverged",
                E::Contract(_) => "contract",
                E::Validation { .. } => "validation",
                E::Format(_) => "format",
            },
        }
    }

    /// `error[<code>]: <message>` on a single line.
    pub fn one_line(&self) -> String {
        let mut msg = self.to_string();
        let mut source = std::error::Error::source(self);
        while let Some(err) = source {
            let text = err.to_string();
            if !msg.contains(&text) {
                msg.push_str(": ");
                msg.push_str(&text);
            }
            source = err.source();
        }
        let msg = msg.split_whitespace().collect::<Vec<_>>().join(" ");
        format!("error[{}]: {}", self.code(), msg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_line_with_code() {
        let e = CliError::MissingArtifact {
            stage: "train",
            producer: "split",
            path: PathBuf::from("work/train.jsonl"),
        };
        let line = e.one_line();
        assert!(line.starts_with("error[stage-dependency]: "));
        assert!(line.contains("work/train.jsonl"));
        let e = CliError::Config("bad\nvalue".into());
        assert_eq!(e.one_line(), "error[config]: bad value");
        let e: CliError = apc_core::Error::Diverged { epoch: 3 }.into();
        assert_eq!(e.code(), "diverged");
    }
}
