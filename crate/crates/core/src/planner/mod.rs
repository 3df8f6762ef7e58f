//! Stage-one planning: request canonicalization, intent planning, and mode
//! classification.
//!
//! Visual attachments are replaced by `<PAD>` markers so planning runs on
//! text alone. A generation plan is a grammar-valid token string; an
//! understanding request passes the instruction through untouched.

mod lexicon;
mod manifest;
mod remote;
mod rules;

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

pub use lexicon::{LexiconSpec, PlannerLexicon};
pub use manifest::{Attachment, AttachmentKind, InputManifest};
pub use remote::RemotePlanner;
pub use rules::RuleBasedPlanner;

use crate::grammar::{self, GrammarError, LexItem, SignalKind, PAD_MARKER};
use crate::meta::MetaError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error("instruction references attachment {index} but only {available} attached")]
    DanglingReference { index: usize, available: usize },
    #[error("attachment references out of order: {0}")]
    MisorderedReference(String),
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("ambiguous plan: {0}")]
    PlanningAmbiguity(String),
    #[error(transparent)]
    Meta(#[from] MetaError),
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error("remote planner unavailable: {0}")]
    RemoteUnavailable(String),
}

impl PlanError {
    pub fn code(&self) -> &'static str {
        match self {
            PlanError::DanglingReference { .. } => "DanglingReference",
            PlanError::MisorderedReference(_) => "MisorderedReference",
            PlanError::InvalidManifest(_) => "InvalidManifest",
            PlanError::PlanningAmbiguity(_) => "PlanningAmbiguity",
            PlanError::Meta(e) => e.code(),
            PlanError::Grammar(e) => e.code(),
            PlanError::RemoteUnavailable(_) => "RemoteUnavailable",
        }
    }
}

/// Request text with one `<PAD>` per attachment, in attachment order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanonicalRequest {
    pub text: String,
    pub manifest: InputManifest,
}

impl CanonicalRequest {
    pub fn pad_count(&self) -> usize {
        self.text.matches(PAD_MARKER).count()
    }
}

static REFERENCE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)<att:\s*(\d+)\s*>|<PAD>").expect("static regex"));

/// Replaces attachment references with `<PAD>` markers.
///
/// References are explicit `<att:N>` markers or already-substituted `<PAD>`
/// markers (which refer to the next attachment). They must appear in
/// attachment order; attachments never referenced get a marker appended.
pub fn canonicalize(
    instruction: &str,
    attachments: &[Attachment],
) -> Result<CanonicalRequest, PlanError> {
    let manifest = InputManifest { instruction: instruction.to_string(), attachments: attachments.to_vec() };
    manifest.validate()?;
    let available = attachments.len();
    let mut text = String::with_capacity(instruction.len() + 8 * available);
    let mut last = 0;
    let mut next = 1usize;
    for caps in REFERENCE.captures_iter(instruction) {
        let m = caps.get(0).expect("whole match");
        let index = match caps.get(1) {
            Some(n) => n.as_str().parse::<usize>().unwrap_or(usize::MAX),
            None => next,
        };
        if index == 0 || index > available {
            return Err(PlanError::DanglingReference { index, available });
        }
        if index != next {
            return Err(PlanError::MisorderedReference(format!(
                "expected a reference to attachment {next}, found {index}"
            )));
        }
        text.push_str(&instruction[last..m.start()]);
        text.push_str(PAD_MARKER);
        last = m.end();
        next += 1;
    }
    text.push_str(&instruction[last..]);
    if next <= available {
        let trimmed = text.trim_end().len();
        text.truncate(trimmed);
        for _ in next..=available {
            if !text.is_empty() {
                text.push(' ');
            }
            text.push_str(PAD_MARKER);
        }
    }
    Ok(CanonicalRequest { text, manifest })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanMode {
    Understanding,
    Generation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PlannerOutput {
    /// Prompt plus signal tokens for generation, the passthrough text otherwise.
    pub raw: String,
    pub mode: PlanMode,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Generation iff the text carries `<CFI>` or `<CFV>`.
///
/// Signal tokens other than the two generation flags do not make a request a
/// generation request; callers should treat that case as suspicious.
pub fn classify_mode(raw: &str) -> Result<PlanMode, GrammarError> {
    let parsed = grammar::parse(raw)?;
    if parsed.contains(SignalKind::Cfi) || parsed.contains(SignalKind::Cfv) {
        Ok(PlanMode::Generation)
    } else {
        Ok(PlanMode::Understanding)
    }
}

/// True when `text` contains any tag-shaped span other than `<PAD>`.
pub(crate) fn has_protocol_tags(text: &str) -> bool {
    grammar::tokenize(text).map_or(true, |items| {
        items.iter().any(|l| !matches!(l.item, LexItem::Text(_) | LexItem::Pad))
    })
}

/// Anything that turns a canonical request into a stage-one output: the rule
/// planner here, or a fine-tuned model behind [`RemotePlanner`].
pub trait PlannerBackend: Send + Sync {
    fn name(&self) -> &str;
    fn plan(&self, request: &CanonicalRequest) -> Result<PlannerOutput, PlanError>;
}
