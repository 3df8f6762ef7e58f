//! Planning-data synthesis.
//!
//! Meta-information templates (one category per kind of cue) are filled with
//! sampled values and spliced into plain base instructions. Labels are built
//! from the templates' own label fragments, never read back from the merged
//! text, so a rule-combined corpus doubles as a test set for the planner.

mod audit;
mod bank;
mod corpus;
mod llm;
mod merge;

use serde::{Deserialize, Serialize};

pub use audit::{audit_corpus, audit_records, AuditReport, Mismatch, Tally};
pub use bank::{load_bases, BaseInstruction, Template, TemplateBank};
pub use corpus::{generate_records, summary_path, synthesize_corpus, CorpusSummary, SynthConfig};
pub use llm::{llm_combine, EchoLlm, HttpLlm, LlmClient, COMBINE_SYSTEM_PROMPT};
pub use merge::{merge, merge_with, Combiner, CombinerKind, RecordMeta, SynthRecord};

use crate::grammar::GrammarError;
use crate::task::TaskKind;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("template bank invalid: {0}")]
    BankValidation(String),
    #[error("{category} does not fit a {task} base: {reason}")]
    IncompatibleCategory { category: Category, task: TaskKind, reason: String },
    #[error("remote LLM unavailable after {attempts} attempt(s): {reason}")]
    RemoteUnavailable { attempts: u32, reason: String },
    #[error("LLM reply dropped {missing:?}")]
    MalformedRemoteReply { missing: String },
    #[error("label failed to serialize: {0}")]
    Label(#[from] GrammarError),
    #[error("io: {0}")]
    Io(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

impl SynthError {
    pub fn code(&self) -> &'static str {
        match self {
            SynthError::BankValidation(_) => "BankValidation",
            SynthError::IncompatibleCategory { .. } => "IncompatibleCategory",
            SynthError::RemoteUnavailable { .. } => "RemoteUnavailable",
            SynthError::MalformedRemoteReply { .. } => "MalformedRemoteReply",
            SynthError::Label(e) => e.code(),
            SynthError::Io(_) => "Io",
            SynthError::InvalidConfig(_) => "InvalidConfig",
        }
    }
}

impl From<std::io::Error> for SynthError {
    fn from(e: std::io::Error) -> Self {
        SynthError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    ExplicitWH,
    StandardTerm,
    AspectRatio,
    Orientation,
    DurationSeconds,
    FrameCountExplicit,
    FrameIndexCue,
    EditRoleCue,
    ControlCue,
    ReferenceCue,
}

impl Category {
    pub const ALL: [Category; 10] = [
        Category::ExplicitWH,
        Category::StandardTerm,
        Category::AspectRatio,
        Category::Orientation,
        Category::DurationSeconds,
        Category::FrameCountExplicit,
        Category::FrameIndexCue,
        Category::EditRoleCue,
        Category::ControlCue,
        Category::ReferenceCue,
    ];

    pub const RESOLUTION: [Category; 4] = [
        Category::ExplicitWH,
        Category::StandardTerm,
        Category::AspectRatio,
        Category::Orientation,
    ];

    pub const FRAMES: [Category; 2] = [Category::DurationSeconds, Category::FrameCountExplicit];

    /// Named placeholders the surface must contain, each exactly once.
    pub fn placeholders(self) -> &'static [&'static str] {
        match self {
            Category::ExplicitWH => &["W", "H"],
            Category::StandardTerm => &["TERM"],
            Category::AspectRatio => &["RATIO"],
            Category::Orientation => &["ORIENT"],
            Category::DurationSeconds => &["SECONDS"],
            Category::FrameCountExplicit => &["FRAMES"],
            Category::FrameIndexCue => &["POSITION"],
            Category::EditRoleCue => &["MASK", "SOURCE"],
            Category::ControlCue => &["COND"],
            Category::ReferenceCue => &["REF"],
        }
    }

    /// Allowed number of bare `<PAD>` attachment slots.
    pub fn pad_slots(self) -> std::ops::RangeInclusive<usize> {
        match self {
            Category::ControlCue => 1..=1,
            Category::ReferenceCue => 1..=2,
            _ => 0..=0,
        }
    }

    /// Why this category cannot be merged into a base of `task`, if it cannot.
    pub fn incompatibility(self, task: TaskKind) -> Option<&'static str> {
        use TaskKind::*;
        if !task.is_generation() {
            return Some("only generation bases are synthesized");
        }
        match self {
            Category::DurationSeconds | Category::FrameCountExplicit if !task.is_video() => {
                Some("frame cues apply to video tasks only")
            }
            Category::FrameIndexCue if task != ImageToVideo => {
                Some("frame index cues apply to image-to-video bases only")
            }
            Category::EditRoleCue if !matches!(task, ImageEditing | VideoEditing) => {
                Some("edit role cues apply to editing bases only")
            }
            Category::ControlCue if !matches!(task, ImageControllable | VideoControllable) => {
                Some("control cues apply to controllable bases only")
            }
            Category::ReferenceCue if !matches!(task, ImageReference | VideoReferenceGen) => {
                Some("reference cues apply to reference bases only")
            }
            _ => None,
        }
    }

    /// The category every base of `task` must be merged with.
    pub fn required_for(task: TaskKind) -> Option<Category> {
        match task {
            TaskKind::ImageEditing | TaskKind::VideoEditing => Some(Category::EditRoleCue),
            TaskKind::ImageControllable | TaskKind::VideoControllable => Some(Category::ControlCue),
            TaskKind::ImageReference | TaskKind::VideoReferenceGen => Some(Category::ReferenceCue),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::ExplicitWH => "ExplicitWH",
            Category::StandardTerm => "StandardTerm",
            Category::AspectRatio => "AspectRatio",
            Category::Orientation => "Orientation",
            Category::DurationSeconds => "DurationSeconds",
            Category::FrameCountExplicit => "FrameCountExplicit",
            Category::FrameIndexCue => "FrameIndexCue",
            Category::EditRoleCue => "EditRoleCue",
            Category::ControlCue => "ControlCue",
            Category::ReferenceCue => "ReferenceCue",
        }
    }
}

impl std::fmt::Display for Category {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
