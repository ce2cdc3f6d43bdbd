use std::fmt;

/// Machine-readable error class, printed as `E:<code>:` by the CLI and
/// carried in service error bodies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorCode {
    Infeasible,
    Schema,
    ImageSet,
    Convergence,
    UnknownTask,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::Infeasible => "INFEASIBLE",
            ErrorCode::Schema => "SCHEMA",
            ErrorCode::ImageSet => "IMAGESET",
            ErrorCode::Convergence => "CONVERGENCE",
            ErrorCode::UnknownTask => "UNKNOWN_TASK",
        }
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("task dictionary is empty")]
    EmptyDictionary,
    #[error("duplicate task name `{0}`")]
    DuplicateTask(String),
    #[error("task `{0}` is neither a source nor a target")]
    TaskWithoutRole(String),
    #[error("task dictionary has no target tasks")]
    NoTargets,
    #[error("task dictionary has no source tasks")]
    NoSources,
    #[error("task name must be non-empty")]
    EmptyTaskName,
    #[error("unknown task `{name}`{}", locator_suffix(.locator))]
    UnknownTask { name: String, locator: Option<String> },
    #[error("invalid transfer edge {edge}: {reason}")]
    InvalidEdge { edge: String, reason: String },
    #[error("non-finite score{}", locator_suffix(.locator))]
    NonFiniteScore { locator: Option<String> },
    #[error("duplicate record for edge {edge} on image `{image}`{}", locator_suffix(.locator))]
    DuplicateRecord {
        edge: String,
        image: String,
        locator: Option<String>,
    },
    #[error("image set of edge {edge} differs from the other edges of target `{target}`")]
    ImageSetMismatch { target: String, edge: String },
    #[error("empty image set for target `{0}`")]
    EmptyImageSet(String),
    #[error("no evaluation records for edge {0}")]
    MissingCompetitor(String),
    #[error("no records for target `{0}`")]
    MissingTarget(String),
    #[error("no affinity for edge {0}")]
    MissingAffinity(String),
    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("no feasible taxonomy under budget {budget}")]
    Infeasible { budget: f64 },
    #[error("instance has {0} variables; exhaustive enumeration supports at most 24")]
    TooLarge(usize),
    #[error("random policy sampling exceeded {0} attempts; budget too tight for rejection sampling")]
    SamplingCap(usize),
    #[error("need at least two source tasks with transfer-out columns, found {0}")]
    TooFewTasks(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{0}")]
    Schema(String),
    #[error("structural violation in solver output: {0}")]
    Structural(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

fn locator_suffix(locator: &Option<String>) -> String {
    match locator {
        Some(l) => format!(" at {l}"),
        None => String::new(),
    }
}

impl Error {
    pub fn code(&self) -> ErrorCode {
        match self {
            Error::Infeasible { .. } | Error::SamplingCap(_) => ErrorCode::Infeasible,
            Error::UnknownTask { .. } => ErrorCode::UnknownTask,
            Error::ImageSetMismatch { .. } | Error::EmptyImageSet(_) => ErrorCode::ImageSet,
            Error::NonConvergence { .. } => ErrorCode::Convergence,
            _ => ErrorCode::Schema,
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
