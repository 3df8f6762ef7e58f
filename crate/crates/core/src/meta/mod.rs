//! Natural-language meta-information to concrete generation parameters.
//!
//! Resolution cues fall into four categories ordered by specificity:
//! explicit width/height, a standard term (`720P`, `4K`), an aspect ratio
//! (`16:9`), and a loose orientation (`horizontal`). The most specific cue
//! present wins. Durations and frame counts resolve to `<BONF>` values, with
//! durations snapped to `4n+1` frames.

mod presets;

use std::ops::Range;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

pub use presets::PresetTable;

use crate::grammar::{EditRoles, FrameCount, FrameIndex, Resolution, PAD_MARKER};
use crate::planner::{AttachmentKind, InputManifest};
use crate::task::TaskKind;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetaError {
    #[error("unknown resolution term {0:?}")]
    UnknownTerm(String),
    #[error("duration must be positive, got {0:?}")]
    NonPositiveDuration(String),
    #[error("frame count must be positive, got {0:?}")]
    NonPositiveFrameCount(String),
    #[error("cannot tell mask from source: {0}")]
    AmbiguousRoles(String),
    #[error("editing needs at least two visual attachments, found {0}")]
    InsufficientAttachments(usize),
    #[error("invalid preset table: {0}")]
    InvalidPresets(String),
}

impl MetaError {
    pub fn code(&self) -> &'static str {
        match self {
            MetaError::UnknownTerm(_) => "UnknownTerm",
            MetaError::NonPositiveDuration(_) => "NonPositiveDuration",
            MetaError::NonPositiveFrameCount(_) => "NonPositiveFrameCount",
            MetaError::AmbiguousRoles(_) => "AmbiguousRoles",
            MetaError::InsufficientAttachments(_) => "InsufficientAttachments",
            MetaError::InvalidPresets(_) => "InvalidPresets",
        }
    }
}

/// Declared in precedence order: earlier variants win.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CueCategory {
    ExplicitWH,
    StandardTerm,
    AspectRatio,
    Orientation,
    Unspecified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Horizontal,
    Vertical,
    Square,
}

impl Orientation {
    pub const ALL: [Orientation; 3] = [Orientation::Horizontal, Orientation::Vertical, Orientation::Square];

    /// Phrasings recognized by [`detect_resolution_cue`] for each orientation.
    pub fn phrases(self) -> &'static [&'static str] {
        match self {
            Orientation::Horizontal => &[
                "horizontal",
                "landscape-wide view",
                "landscape orientation",
                "landscape format",
                "landscape layout",
                "widescreen",
                "horizontal layout",
                "horizontally framed",
            ],
            Orientation::Vertical => &[
                "vertical",
                "portrait orientation",
                "portrait format",
                "portrait layout",
                "portrait mode",
                "vertical layout",
                "vertically framed",
            ],
            Orientation::Square => &[
                "square format",
                "square frame",
                "square canvas",
                "square composition",
                "square layout",
                "square shape",
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolutionCue {
    pub category: CueCategory,
    pub raw: String,
    /// Byte range of `raw` in the instruction it was detected in.
    #[serde(skip)]
    pub span: Option<Range<usize>>,
}

impl ResolutionCue {
    pub fn new(category: CueCategory, raw: impl Into<String>) -> Self {
        Self { category, raw: raw.into(), span: None }
    }

    pub fn unspecified() -> Self {
        Self::new(CueCategory::Unspecified, "")
    }
}

fn re(pattern: &str) -> Regex {
    Regex::new(pattern).expect("static regex")
}

const NUM: &str = r"(\d{1,5})";

static WH_PAIR: LazyLock<Regex> =
    LazyLock::new(|| re(r"(?i)\b(\d{3,5})\s*(?:px|pixels)?\s*(?:[x×*]|by)\s*(\d{3,5})(?:\s*(?:px|pixels)\b|\b)"));
static WIDTH_AND_HEIGHT: LazyLock<Regex> = LazyLock::new(|| {
    re(&format!(r"(?i)\b(width|height)\s+and\s+(?:the\s+)?(?:width|height)\b[^\d<>.;]{{0,24}}?{NUM}[^\d<>.;]{{1,16}}?{NUM}"))
});
static WIDTH_WORD: LazyLock<Regex> =
    LazyLock::new(|| re(&format!(r"(?i)\bwidth\b[^\d<>.;]{{0,24}}?{NUM}")));
static HEIGHT_WORD: LazyLock<Regex> =
    LazyLock::new(|| re(&format!(r"(?i)\bheight\b[^\d<>.;]{{0,24}}?{NUM}")));
static WIDTH_SUFFIX: LazyLock<Regex> =
    LazyLock::new(|| re(&format!(r"(?i)\b{NUM}\s*(?:px|pixels?)?\s*(?:wide\b|in width\b)")));
static HEIGHT_SUFFIX: LazyLock<Regex> = LazyLock::new(|| {
    re(&format!(r"(?i)\b{NUM}\s*(?:px|pixels?)?\s*(?:tall\b|high\b|in height\b)"))
});
static STANDARD_TERM: LazyLock<Regex> =
    LazyLock::new(|| re(r"(?i)\b(\d{3,4}p|\dk)\b"));
static RATIO: LazyLock<Regex> = LazyLock::new(|| re(r"\b(\d{1,2})\s*:\s*(\d{1,2})\b"));
static ORIENTATION: LazyLock<Regex> = LazyLock::new(|| {
    re(r"(?i)\b(horizontal(?:ly\s+framed|\s+layout)?|widescreen|landscape(?:-wide)?\s+(?:orientation|format|layout|view|mode)|vertical(?:ly\s+framed|\s+layout)?|portrait\s+(?:orientation|format|layout|mode)|square\s+(?:format|frame|canvas|composition|layout|shape))\b")
});

fn first_match(re: &Regex, text: &str) -> Option<(u32, Range<usize>)> {
    let caps = re.captures(text)?;
    let value = caps.get(1)?.as_str().parse().ok()?;
    Some((value, caps.get(0)?.range()))
}

/// Extracts `(width, height, span)` from an explicit width/height phrase.
pub fn explicit_dimensions(text: &str) -> Option<(u32, u32, Range<usize>)> {
    if let Some(c) = WH_PAIR.captures(text) {
        let w = c[1].parse().ok()?;
        let h = c[2].parse().ok()?;
        return Some((w, h, c.get(0)?.range()));
    }
    if let Some(c) = WIDTH_AND_HEIGHT.captures(text) {
        let a: u32 = c[2].parse().ok()?;
        let b: u32 = c[3].parse().ok()?;
        let span = c.get(0)?.range();
        return Some(if c[1].eq_ignore_ascii_case("width") { (a, b, span) } else { (b, a, span) });
    }
    let (w, ws) = first_match(&WIDTH_WORD, text).or_else(|| first_match(&WIDTH_SUFFIX, text))?;
    let (h, hs) = first_match(&HEIGHT_WORD, text).or_else(|| first_match(&HEIGHT_SUFFIX, text))?;
    Some((w, h, ws.start.min(hs.start)..ws.end.max(hs.end)))
}

pub(crate) fn parse_ratio(s: &str) -> Option<(u32, u32)> {
    let c = RATIO.captures(s.trim())?;
    let w: u32 = c[1].parse().ok()?;
    let h: u32 = c[2].parse().ok()?;
    (w > 0 && h > 0).then_some((w, h))
}

fn orientation_of(phrase: &str) -> Option<Orientation> {
    let p = phrase.to_ascii_lowercase();
    if p.starts_with("horizontal") || p.starts_with("widescreen") || p.starts_with("landscape") {
        Some(Orientation::Horizontal)
    } else if p.starts_with("vertical") || p.starts_with("portrait") {
        Some(Orientation::Vertical)
    } else if p.starts_with("square") {
        Some(Orientation::Square)
    } else {
        None
    }
}

/// Returns the highest-precedence resolution cue in `instruction`. Never fails.
pub fn detect_resolution_cue(instruction: &str) -> ResolutionCue {
    let cue = |category, span: Range<usize>| ResolutionCue {
        category,
        raw: instruction[span.clone()].to_string(),
        span: Some(span),
    };
    if let Some((_, _, span)) = explicit_dimensions(instruction) {
        return cue(CueCategory::ExplicitWH, span);
    }
    if let Some(m) = STANDARD_TERM.find(instruction) {
        return cue(CueCategory::StandardTerm, m.range());
    }
    if let Some(m) = RATIO.find(instruction) {
        if parse_ratio(m.as_str()).is_some() {
            return cue(CueCategory::AspectRatio, m.range());
        }
    }
    if let Some(m) = ORIENTATION.find(instruction) {
        return cue(CueCategory::Orientation, m.range());
    }
    ResolutionCue::unspecified()
}

/// Rounds to the nearest multiple of 8 (halves up), never below 16.
pub fn snap_dimension(v: u32) -> u32 {
    (v.saturating_add(4) / 8 * 8).max(16)
}

pub fn snap_resolution(r: Resolution) -> Resolution {
    Resolution { width: snap_dimension(r.width), height: snap_dimension(r.height) }
}

pub fn resolve_resolution(
    cue: &ResolutionCue,
    presets: &PresetTable,
    task: TaskKind,
) -> Result<Resolution, MetaError> {
    let unknown = || MetaError::UnknownTerm(cue.raw.clone());
    let raw = match cue.category {
        CueCategory::ExplicitWH => {
            let (width, height, _) = explicit_dimensions(&cue.raw).ok_or_else(unknown)?;
            Resolution { width, height }
        }
        CueCategory::StandardTerm => presets.standard_term(&cue.raw).ok_or_else(unknown)?,
        CueCategory::AspectRatio => presets.aspect_ratio(&cue.raw).ok_or_else(unknown)?,
        CueCategory::Orientation => {
            presets.orientation(orientation_of(cue.raw.trim()).ok_or_else(unknown)?)
        }
        CueCategory::Unspecified => presets
            .task_default(task)
            .ok_or_else(|| MetaError::UnknownTerm(format!("no default for {task}")))?,
    };
    Ok(snap_resolution(raw))
}

/// Snaps a frame total to the nearest `4n+1` value (halves up), minimum 5.
pub fn snap_frames(x: u32) -> u32 {
    let n = (x.max(1) - 1 + 2) / 4;
    (4 * n + 1).max(5)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrameSource {
    Explicit,
    Duration,
    Default,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameCue {
    pub source: FrameSource,
    pub frames: FrameCount,
    #[serde(skip)]
    pub span: Option<Range<usize>>,
}

static FRAMES: LazyLock<Regex> = LazyLock::new(|| re(r"(?i)(-?\d{1,6})\s*-?\s*frames?\b"));
static DURATION: LazyLock<Regex> =
    LazyLock::new(|| re(r"(?i)(-?\d+(?:\.\d+)?)\s*-?\s*(?:seconds?|secs?)\b"));

/// Frame cue with its source span. Explicit counts win over durations.
pub fn detect_frames(instruction: &str, presets: &PresetTable) -> Result<FrameCue, MetaError> {
    if let Some(c) = FRAMES.captures(instruction) {
        let raw = &c[1];
        let n: i64 = raw.parse().map_err(|_| MetaError::NonPositiveFrameCount(raw.into()))?;
        if n <= 0 {
            return Err(MetaError::NonPositiveFrameCount(raw.into()));
        }
        return Ok(FrameCue {
            source: FrameSource::Explicit,
            frames: FrameCount(n.min(u32::MAX as i64) as u32),
            span: c.get(0).map(|m| m.range()),
        });
    }
    if let Some(c) = DURATION.captures(instruction) {
        let raw = &c[1];
        let secs: f64 = raw.parse().map_err(|_| MetaError::NonPositiveDuration(raw.into()))?;
        if !(secs > 0.0) {
            return Err(MetaError::NonPositiveDuration(raw.into()));
        }
        let total = (secs * presets.fps_default as f64).round().min(u32::MAX as f64 - 4.0) as u32;
        return Ok(FrameCue {
            source: FrameSource::Duration,
            frames: FrameCount(snap_frames(total)),
            span: c.get(0).map(|m| m.range()),
        });
    }
    Ok(FrameCue {
        source: FrameSource::Default,
        frames: FrameCount(presets.frame_count_default),
        span: None,
    })
}

pub fn resolve_frames(instruction: &str, presets: &PresetTable) -> Result<FrameCount, MetaError> {
    detect_frames(instruction, presets).map(|c| c.frames)
}

static LAST_FRAME: LazyLock<Regex> = LazyLock::new(|| {
    re(r"(?i)\b(?:last|final|ending|closing|end)\s+(?:frame|shot|still)\b|\bend(?:s|ing)?\s+(?:with|on)\b")
});

/// Span of an explicit frame-position phrase (`as the last frame`, `opening frame`).
pub fn frame_index_span(instruction: &str) -> Option<Range<usize>> {
    static ANY: LazyLock<Regex> = LazyLock::new(|| {
        re(r"(?i)\b(?:(?:and\s+)?(?:use|treat|set|keep|place|make)\s+(?:it|this|that|the\s+\w+|this\s+\w+)\s+)?(?:as\s+)?(?:the\s+)?(?:first|opening|starting|initial|last|final|ending|closing|end)\s+(?:frame|shot|still)\b(?:\s+of\s+the\s+(?:video|clip))?")
    });
    ANY.find(instruction).map(|m| m.range())
}

/// `Last` when the instruction places the image at the end, `First` otherwise.
pub fn resolve_frame_index(instruction: &str) -> FrameIndex {
    if LAST_FRAME.is_match(instruction) {
        FrameIndex::Last
    } else {
        FrameIndex::First
    }
}

static MASK_WORD: LazyLock<Regex> = LazyLock::new(|| re(r"(?i)\bmask(?:s|ed)?\b"));
static SOURCE_WORD: LazyLock<Regex> =
    LazyLock::new(|| re(r"(?i)\b(?:source|original|to\s+(?:be\s+)?edit(?:ed)?)\b"));

/// Text between the previous pad marker (or sentence break) and each pad marker.
fn pad_lead_ins(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(at) = rest.find(PAD_MARKER) {
        let before = &rest[..at];
        let clause = before.rfind(['.', '!', '?', ';']).map_or(before, |i| &before[i + 1..]);
        out.push(clause);
        rest = &rest[at + PAD_MARKER.len()..];
    }
    out
}

/// Decides which attachment is the mask and which is edited.
///
/// A single attachment typed as a mask in the manifest decides the mask role.
/// Otherwise the clause leading into each `<PAD>` marker is searched for a
/// mask keyword; exactly one hit is required.
pub fn resolve_edit_roles(
    instruction: &str,
    manifest: &InputManifest,
) -> Result<EditRoles, MetaError> {
    let visual = manifest.visual_count();
    if visual < 2 {
        return Err(MetaError::InsufficientAttachments(visual));
    }
    let lead_ins = pad_lead_ins(instruction);
    let text_hits = |re: &Regex, among: &[u32]| -> Vec<u32> {
        if lead_ins.len() != manifest.attachments.len() {
            return Vec::new();
        }
        among.iter().copied().filter(|id| re.is_match(lead_ins[*id as usize - 1])).collect()
    };

    let all: Vec<u32> = manifest.attachments.iter().map(|a| a.id).collect();
    let typed: Vec<u32> = manifest
        .attachments
        .iter()
        .filter(|a| a.kind == AttachmentKind::Mask)
        .map(|a| a.id)
        .collect();
    let mask_id = match typed.as_slice() {
        [one] => *one,
        [] => match text_hits(&MASK_WORD, &all).as_slice() {
            [one] => *one,
            [] => return Err(MetaError::AmbiguousRoles("no attachment is described as the mask".into())),
            _ => return Err(MetaError::AmbiguousRoles("several attachments are described as the mask".into())),
        },
        _ => return Err(MetaError::AmbiguousRoles("several attachments are typed as masks".into())),
    };

    let rest: Vec<u32> = all.into_iter().filter(|id| *id != mask_id).collect();
    let source_id = match rest.as_slice() {
        [one] => *one,
        _ => match text_hits(&SOURCE_WORD, &rest).as_slice() {
            [one] => *one,
            _ => return Err(MetaError::AmbiguousRoles("cannot single out the source attachment".into())),
        },
    };
    Ok(EditRoles { mask_id, source_id })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn presets() -> PresetTable {
        PresetTable::default()
    }

    #[test]
    fn cue_categories() {
        let c = detect_resolution_cue("the width is 480 pixels and the height is 640 pixels");
        assert_eq!(c.category, CueCategory::ExplicitWH);
        assert_eq!(detect_resolution_cue("make it 720P please").category, CueCategory::StandardTerm);
        assert_eq!(detect_resolution_cue("aspect ratio is 16: 9").category, CueCategory::AspectRatio);
        assert_eq!(detect_resolution_cue("a horizontal shot").category, CueCategory::Orientation);
        assert_eq!(detect_resolution_cue("a nice sunset").category, CueCategory::Unspecified);
    }

    #[test]
    fn preset_goldens() {
        let p = presets();
        let t = TaskKind::TextToImage;
        let r = |cat, raw: &str| resolve_resolution(&ResolutionCue::new(cat, raw), &p, t).unwrap();
        assert_eq!(r(CueCategory::StandardTerm, "1080P"), Resolution::new(1920, 1080));
        assert_eq!(r(CueCategory::AspectRatio, "16:9"), Resolution::new(1280, 720));
        assert_eq!(r(CueCategory::Orientation, "horizontal"), Resolution::new(1280, 720));
        assert_eq!(
            r(CueCategory::ExplicitWH, "width is 480 pixels and the height is 640"),
            Resolution::new(480, 640)
        );
        assert_eq!(r(CueCategory::Unspecified, ""), Resolution::new(1024, 1024));
        // 854 is not a multiple of 8
        assert_eq!(r(CueCategory::StandardTerm, "480p"), Resolution::new(856, 480));
    }

    #[test]
    fn explicit_phrasings() {
        let cases = [
            ("This image's height is 640, with the width being 480", (480, 640)),
            ("a 1024x768 canvas", (1024, 768)),
            ("1920 × 1080 px", (1920, 1080)),
            ("480 pixels wide and 640 pixels tall", (480, 640)),
            ("width and height of 512 and 768", (512, 768)),
            ("height and width: 512, 768", (768, 512)),
        ];
        for (text, (w, h)) in cases {
            let (gw, gh, _) = explicit_dimensions(text).unwrap_or_else(|| panic!("{text}"));
            assert_eq!((gw, gh), (w, h), "{text}");
        }
    }

    #[test]
    fn explicit_beats_standard_term() {
        let text = "1080P quality, but the width is 640 and the height is 480";
        let cue = detect_resolution_cue(text);
        assert_eq!(cue.category, CueCategory::ExplicitWH);
        let r = resolve_resolution(&cue, &presets(), TaskKind::TextToImage).unwrap();
        assert_eq!(r, Resolution::new(640, 480));
    }

    #[test]
    fn unknown_term() {
        let cue = detect_resolution_cue("render it in 360p");
        assert_eq!(cue.category, CueCategory::StandardTerm);
        let err = resolve_resolution(&cue, &presets(), TaskKind::TextToImage).unwrap_err();
        assert_eq!(err.code(), "UnknownTerm");
    }

    #[test]
    fn snapping() {
        assert_eq!(snap_dimension(854), 856);
        assert_eq!(snap_dimension(852), 856);
        assert_eq!(snap_dimension(851), 848);
        assert_eq!(snap_dimension(3), 16);
        for v in (16..4096).step_by(8) {
            assert_eq!(snap_dimension(v), v);
        }
    }

    #[test]
    fn frames() {
        let p = presets();
        assert_eq!(resolve_frames("a 5 second clip", &p).unwrap(), FrameCount(81));
        assert_eq!(resolve_frames("exactly 49 frames", &p).unwrap(), FrameCount(49));
        assert_eq!(resolve_frames("a clip of the sea", &p).unwrap(), FrameCount(81));
        assert_eq!(resolve_frames("a 5-second clip, 33 frames", &p).unwrap(), FrameCount(33));
        assert_eq!(resolve_frames("0.1 seconds", &p).unwrap(), FrameCount(5));
        assert_eq!(resolve_frames("0 seconds long", &p).unwrap_err().code(), "NonPositiveDuration");
        assert_eq!(resolve_frames("0 frames", &p).unwrap_err().code(), "NonPositiveFrameCount");
    }

    #[test]
    fn frame_snap_is_4n_plus_1() {
        assert_eq!(snap_frames(80), 81);
        assert_eq!(snap_frames(79), 81);
        assert_eq!(snap_frames(78), 77);
        assert_eq!(snap_frames(1), 5);
        for x in 1..2000 {
            let s = snap_frames(x);
            assert_eq!(s % 4, 1);
            assert!(s >= 5);
            assert!(s.abs_diff(x) <= 2 || x < 5);
        }
    }

    #[test]
    fn frame_index_keywords() {
        assert_eq!(resolve_frame_index("use this image as the last frame"), FrameIndex::Last);
        assert_eq!(resolve_frame_index("animate this picture"), FrameIndex::First);
        assert_eq!(resolve_frame_index("start from this photo"), FrameIndex::First);
        assert_eq!(resolve_frame_index("the clip ends with this shot"), FrameIndex::Last);
    }

    #[test]
    fn edit_roles() {
        use AttachmentKind::*;
        let text = "This is the mask <PAD> and this is the source image <PAD>. Remove the hat";
        let m = InputManifest::with_kinds(text, &[Image, Image]);
        assert_eq!(resolve_edit_roles(text, &m).unwrap(), EditRoles { mask_id: 1, source_id: 2 });

        let text = "Here is the photo <PAD> and the mask <PAD>. Remove the hat";
        let m = InputManifest::with_kinds(text, &[Image, Image]);
        assert_eq!(resolve_edit_roles(text, &m).unwrap(), EditRoles { mask_id: 2, source_id: 1 });

        let m = InputManifest::with_kinds("fix it <PAD> <PAD>", &[Mask, Image]);
        assert_eq!(
            resolve_edit_roles("fix it <PAD> <PAD>", &m).unwrap(),
            EditRoles { mask_id: 1, source_id: 2 }
        );

        let text = "edit <PAD> using <PAD>";
        let m = InputManifest::with_kinds(text, &[Image, Image]);
        assert_eq!(resolve_edit_roles(text, &m).unwrap_err().code(), "AmbiguousRoles");

        let m = InputManifest::with_kinds("mask <PAD>", &[Image]);
        assert_eq!(resolve_edit_roles("mask <PAD>", &m).unwrap_err().code(), "InsufficientAttachments");
    }

    #[test]
    fn manifest_typing_beats_text() {
        use AttachmentKind::*;
        let text = "the mask <PAD> and the photo <PAD>";
        let m = InputManifest::with_kinds(text, &[Image, Mask]);
        assert_eq!(resolve_edit_roles(text, &m).unwrap(), EditRoles { mask_id: 2, source_id: 1 });
    }

    #[test]
    fn shipped_presets_validate() {
        let p = presets();
        assert_eq!(p.fps_default, 16);
        assert_eq!(p.frame_count_default, 81);
        let mut bad = p.clone();
        bad.task_defaults.remove(&TaskKind::ImageToVideo);
        assert_eq!(bad.validate().unwrap_err().code(), "InvalidPresets");
    }

    #[test]
    fn orientation_phrases_are_detected() {
        for o in Orientation::ALL {
            for phrase in o.phrases() {
                let cue = detect_resolution_cue(&format!("a scene in {phrase} please"));
                assert_eq!(cue.category, CueCategory::Orientation, "{phrase}");
                assert_eq!(orientation_of(&cue.raw), Some(o), "{phrase}");
            }
        }
    }
}
