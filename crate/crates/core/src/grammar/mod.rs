//! Signal-token protocol emitted by the stage-one planner.
//!
//! The alphabet has exactly eight kinds. Four are flags (`<CFI>`, `<CFV>`,
//! `<CTRL>`, `<REF>`) and four are paired, carrying a typed payload between
//! a begin and an end tag:
//!
//! ```text
//! <BORES>1920,1080<EORES>   resolution (width, height)
//! <BONF>81<EONF>            total frame count
//! <BOFIDX>First<EOFIDX>     image-to-video frame position
//! <BOEDIT>1,2<EOEDIT>       editing roles (mask id, source id), 1-based
//! ```
//!
//! Tags are case-sensitive ASCII. The input-side pad marker `<PAD>` is lexed
//! as its own item and treated as prompt text by the parser; any other
//! `<[A-Z]+>` sequence is an [`GrammarError::UnknownToken`].

mod lexer;
mod parser;

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

pub use lexer::{tokenize, LexItem, Lexeme};
pub use parser::{parse, parse_with, serialize, ParseMode, ParseWarning, ParsedOutput};

/// Literal surface of the pad marker substituted for visual attachments.
pub const PAD_MARKER: &str = "<PAD>";

/// The eight signal-token kinds, declared in canonical serialization order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SignalKind {
    Cfi,
    Cfv,
    Bores,
    Bonf,
    Bofidx,
    Boedit,
    Ctrl,
    Ref,
}

impl SignalKind {
    pub const ALL: [SignalKind; 8] = [
        SignalKind::Cfi,
        SignalKind::Cfv,
        SignalKind::Bores,
        SignalKind::Bonf,
        SignalKind::Bofidx,
        SignalKind::Boedit,
        SignalKind::Ctrl,
        SignalKind::Ref,
    ];

    pub fn is_paired(self) -> bool {
        matches!(
            self,
            SignalKind::Bores | SignalKind::Bonf | SignalKind::Bofidx | SignalKind::Boedit
        )
    }

    /// Tag name of the opener (or of the flag itself), without brackets.
    pub fn open_name(self) -> &'static str {
        match self {
            SignalKind::Cfi => "CFI",
            SignalKind::Cfv => "CFV",
            SignalKind::Bores => "BORES",
            SignalKind::Bonf => "BONF",
            SignalKind::Bofidx => "BOFIDX",
            SignalKind::Boedit => "BOEDIT",
            SignalKind::Ctrl => "CTRL",
            SignalKind::Ref => "REF",
        }
    }

    /// Tag name of the closer, for paired kinds.
    pub fn close_name(self) -> Option<&'static str> {
        match self {
            SignalKind::Bores => Some("EORES"),
            SignalKind::Bonf => Some("EONF"),
            SignalKind::Bofidx => Some("EOFIDX"),
            SignalKind::Boedit => Some("EOEDIT"),
            _ => None,
        }
    }

    pub fn from_open_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.open_name() == name)
    }

    pub fn from_close_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.close_name() == Some(name))
    }
}

impl fmt::Display for SignalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.open_name())
    }
}

/// Pixel dimensions carried by `<BORES>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Resolution {
    pub width: u32,
    pub height: u32,
}

impl Resolution {
    pub const fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

/// Total number of frames carried by `<BONF>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FrameCount(pub u32);

/// Whether the uploaded image opens or closes an image-to-video clip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FrameIndex {
    First,
    Last,
}

impl FrameIndex {
    pub fn as_str(self) -> &'static str {
        match self {
            FrameIndex::First => "First",
            FrameIndex::Last => "Last",
        }
    }
}

/// Which attachment is the mask and which is edited. Both ids are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EditRoles {
    pub mask_id: u32,
    pub source_id: u32,
}

/// One protocol token. The payload type is fixed by the variant, so a
/// kind/payload mismatch cannot be represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum SignalToken {
    #[serde(rename = "CFI")]
    ImageGeneration,
    #[serde(rename = "CFV")]
    VideoGeneration,
    #[serde(rename = "BORES")]
    Resolution(Resolution),
    #[serde(rename = "BONF")]
    FrameCount(FrameCount),
    #[serde(rename = "BOFIDX")]
    FrameIndex(FrameIndex),
    #[serde(rename = "BOEDIT")]
    EditRoles(EditRoles),
    #[serde(rename = "CTRL")]
    Control,
    #[serde(rename = "REF")]
    Reference,
}

impl SignalToken {
    pub fn kind(&self) -> SignalKind {
        match self {
            SignalToken::ImageGeneration => SignalKind::Cfi,
            SignalToken::VideoGeneration => SignalKind::Cfv,
            SignalToken::Resolution(_) => SignalKind::Bores,
            SignalToken::FrameCount(_) => SignalKind::Bonf,
            SignalToken::FrameIndex(_) => SignalKind::Bofidx,
            SignalToken::EditRoles(_) => SignalKind::Boedit,
            SignalToken::Control => SignalKind::Ctrl,
            SignalToken::Reference => SignalKind::Ref,
        }
    }

    /// Checks payload domain rules: positive integers, distinct edit roles.
    pub fn check_domain(&self) -> Result<(), String> {
        match *self {
            SignalToken::Resolution(r) if r.width == 0 || r.height == 0 => {
                Err(format!("resolution must be positive, got {r}"))
            }
            SignalToken::FrameCount(FrameCount(0)) => Err("frame count must be positive".into()),
            SignalToken::EditRoles(e) if e.mask_id == 0 || e.source_id == 0 => {
                Err("edit role ids are 1-based".into())
            }
            SignalToken::EditRoles(e) if e.mask_id == e.source_id => {
                Err(format!("mask_id equals source_id ({})", e.mask_id))
            }
            _ => Ok(()),
        }
    }

    /// Payload text as emitted by the serializer, if the kind is paired.
    pub fn payload_text(&self) -> Option<String> {
        match self {
            SignalToken::Resolution(r) => Some(format!("{},{}", r.width, r.height)),
            SignalToken::FrameCount(n) => Some(n.0.to_string()),
            SignalToken::FrameIndex(i) => Some(i.as_str().to_string()),
            SignalToken::EditRoles(e) => Some(format!("{},{}", e.mask_id, e.source_id)),
            _ => None,
        }
    }
}

impl fmt::Display for SignalToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = self.kind();
        match (self.payload_text(), kind.close_name()) {
            (Some(payload), Some(close)) => write!(f, "<{kind}>{payload}<{close}>"),
            _ => write!(f, "<{kind}>"),
        }
    }
}

/// Errors raised while lexing, parsing, or serializing protocol text.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GrammarError {
    #[error("unknown token <{name}> at {span:?}")]
    UnknownToken { name: String, span: Range<usize> },
    #[error("{kind} payload has wrong arity at {span:?}: {detail}")]
    PayloadArity { kind: SignalKind, span: Range<usize>, detail: String },
    #[error("{kind} payload out of domain at {span:?}: {detail}")]
    PayloadDomain { kind: SignalKind, span: Range<usize>, detail: String },
    #[error("duplicate {kind} token at {span:?}")]
    DuplicateToken { kind: SignalKind, span: Range<usize> },
    #[error("{kind} opened at {span:?} is never closed")]
    UnterminatedToken { kind: SignalKind, span: Range<usize> },
    #[error("closing tag for {kind} at {span:?} has no opener")]
    UnmatchedClose { kind: SignalKind, span: Range<usize> },
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
}

impl GrammarError {
    pub fn code(&self) -> &'static str {
        match self {
            GrammarError::UnknownToken { .. } => "UnknownToken",
            GrammarError::PayloadArity { .. } => "PayloadArity",
            GrammarError::PayloadDomain { .. } => "PayloadDomain",
            GrammarError::DuplicateToken { .. } => "DuplicateToken",
            GrammarError::UnterminatedToken { .. } => "UnterminatedToken",
            GrammarError::UnmatchedClose { .. } => "UnmatchedClose",
            GrammarError::InvariantViolation(_) => "InvariantViolation",
        }
    }
}
