use neurovid::ErrorKind;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Core(#[from] neurovid::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            ErrorKind::Usage => 2,
            ErrorKind::Data => 3,
            ErrorKind::Numeric => 4,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            CliError::Usage(_) => ErrorKind::Usage,
            CliError::Data(_) => ErrorKind::Data,
            CliError::Core(e) => e.kind(),
        }
    }

    /// `error[<kind>]: <message>` on one line.
    pub fn line(&self) -> String {
        let kind = match self.kind() {
            ErrorKind::Usage => "usage",
            ErrorKind::Data => "data",
            ErrorKind::Numeric => "numeric",
        };
        let text = self.to_string();
        let msg: Vec<&str> = text.split_whitespace().collect();
        format!("error[{kind}]: {}", msg.join(" "))
    }
}

pub type CliResult<T> = Result<T, CliError>;
