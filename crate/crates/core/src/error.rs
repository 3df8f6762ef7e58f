use crate::grammar::GrammarError;
use crate::meta::MetaError;
use crate::planner::PlanError;
use crate::projector::ProjectorError;
use crate::router::RouteError;
use crate::synth::SynthError;

/// Any domain error, carrying the originating module's error code.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error(transparent)]
    Meta(#[from] MetaError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Route(#[from] RouteError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Projector(#[from] ProjectorError),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("io: {0}")]
    Io(String),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::Grammar(e) => e.code(),
            Error::Meta(e) => e.code(),
            Error::Plan(e) => e.code(),
            Error::Route(e) => e.code(),
            Error::Synth(e) => e.code(),
            Error::Projector(e) => e.code(),
            Error::Config(_) => "InvalidConfig",
            Error::InvalidRequest(_) => "InvalidRequest",
            Error::Io(_) => "Io",
        }
    }

    /// `{"error": {"code", "message"}}`, the body used by the service and `--json` CLI output.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({ "error": { "code": self.code(), "message": self.to_string() } })
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
