use thiserror::Error;

/// Error type shared across the audit pipeline.
#[derive(Debug, Error)]
pub enum AuditError {
    #[error("line {line}: malformed trace record: {reason}")]
    MalformedRecord { line: usize, reason: String },

    #[error("timeline for user {user} has {have} events, need at least {need}")]
    InsufficientLength { user: String, have: usize, need: usize },

    #[error("prefix length must be a positive integer")]
    NonPositivePrefix,

    #[error("video_duration_s is zero for video {video}; watch percentage undefined")]
    UndefinedDuration { video: String },

    #[error("empty vocabulary after min_count={min_count} filtering; lower min_count")]
    EmptyVocabulary { min_count: usize },

    #[error("cluster-join threshold sigma must lie in (0, 1), got {0}")]
    InvalidSigma(f64),

    #[error("feature {0} is not registered")]
    UnknownFeature(String),

    #[error("feature {0} is already registered")]
    DuplicateFeature(String),

    #[error("local feature {0} requires a window")]
    MissingWindow(String),

    #[error("invalid feature spec {name}: {reason}")]
    InvalidFeatureSpec { name: String, reason: String },

    #[error("timelines have mixed lengths: saw both {a} and {b}")]
    MixedLengths { a: usize, b: usize },

    #[error("index {index} exceeds timeline length {len} for user {user}")]
    IndexOutOfRange { user: String, index: usize, len: usize },

    #[error("invalid bot policy: {0}")]
    InvalidPolicy(String),

    #[error("invalid platform config: {0}")]
    InvalidPlatform(String),

    #[error("cohort requires n_per_policy >= 1")]
    EmptyCohort,

    #[error("no candidate feature has a randomized-baseline mean below tau={tau}; raise tau")]
    EmptyRetention { tau: f64 },

    #[error("backward elimination needs at least 2 retained features, got {0}")]
    TooFewRetained(usize),

    #[error("quartile grouping needs at least 4 users, got {0}")]
    TooFewUsers(usize),

    #[error("t-test samples need at least 2 observations each")]
    SampleTooSmall,

    #[error("no events with a positive video duration; watch percentage factor undefined")]
    NoDurations,

    #[error("config error: {0}")]
    Config(String),

    #[error("pipeline stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<AuditError>,
    },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Format(String),
}

impl AuditError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        AuditError::Io { context: context.into(), source }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        AuditError::Stage { stage, source: Box::new(self) }
    }
}

pub type Result<T> = std::result::Result<T, AuditError>;
