use std::ops::Range;
use std::sync::LazyLock;

use regex::Regex;

use super::{
    has_protocol_tags, CanonicalRequest, PlanError, PlanMode, PlannerBackend, PlannerLexicon,
    PlannerOutput,
};
use crate::grammar::{self, ParsedOutput, SignalToken};
use crate::meta::{self, CueCategory, FrameSource, PresetTable};
use crate::router::derive_task_kind;
use crate::task::TaskKind;

/// Keyword-and-resolver planner standing in for the fine-tuned stage-one model.
#[derive(Debug, Clone)]
pub struct RuleBasedPlanner {
    lexicon: PlannerLexicon,
    presets: PresetTable,
}

/// What the planner read off a request before emitting tokens.
#[derive(Debug, Default)]
struct Signals {
    generation_verb: bool,
    image_noun: bool,
    video: bool,
    edit: bool,
    edit_verb: bool,
    control: bool,
    reference: bool,
    question: bool,
    resolution_cue: bool,
}

impl RuleBasedPlanner {
    pub fn new(lexicon: PlannerLexicon, presets: PresetTable) -> Self {
        Self { lexicon, presets }
    }

    pub fn presets(&self) -> &PresetTable {
        &self.presets
    }

    fn signals(&self, text: &str, request: &CanonicalRequest) -> Signals {
        let lx = &self.lexicon;
        // a malformed duration still signals video; the error surfaces when planning
        let frame_cue = meta::detect_frames(text, &self.presets)
            .map_or(true, |f| f.source != FrameSource::Default);
        Signals {
            generation_verb: lx.generation_verbs.is_match(text),
            image_noun: lx.image_nouns.is_match(text),
            video: lx.video_cues.is_match(text)
                || frame_cue
                || request.manifest.video_count() > 0
                    && (lx.edit_cues.is_match(text) || lx.control_cues.is_match(text)),
            edit: lx.edit_cues.is_match(text),
            edit_verb: lx.edit_verbs.is_match(text),
            control: lx.control_cues.is_match(text),
            reference: lx.reference_cues.is_match(text),
            question: lx.question_leads.is_match(text),
            resolution_cue: meta::detect_resolution_cue(text).category != CueCategory::Unspecified,
        }
    }

    fn generation_plan(
        &self,
        request: &CanonicalRequest,
        s: &Signals,
    ) -> Result<PlannerOutput, PlanError> {
        let text = request.text.as_str();
        let manifest = &request.manifest;
        let mut warnings = Vec::new();
        if s.control && s.reference {
            return Err(PlanError::PlanningAmbiguity(
                "both controllable and reference generation cues present".into(),
            ));
        }

        let mut tokens = vec![if s.video {
            SignalToken::VideoGeneration
        } else {
            SignalToken::ImageGeneration
        }];
        if s.edit {
            tokens.push(SignalToken::EditRoles(meta::resolve_edit_roles(text, manifest)?));
        }
        if s.control {
            tokens.push(SignalToken::Control);
        }
        if s.reference {
            tokens.push(SignalToken::Reference);
        }
        let image_to_video = s.video
            && !s.edit
            && !s.control
            && !s.reference
            && manifest.video_count() == 0
            && manifest.image_count() == 1;
        if image_to_video {
            tokens.push(SignalToken::FrameIndex(meta::resolve_frame_index(text)));
        }
        let frame_cue = meta::detect_frames(text, &self.presets)?;
        if s.video {
            tokens.push(SignalToken::FrameCount(frame_cue.frames));
        }

        let task = derive_task_kind(&tokens, manifest).unwrap_or(if s.video {
            TaskKind::TextToVideo
        } else {
            TaskKind::TextToImage
        });
        let cue = meta::detect_resolution_cue(text);
        let resolution = match meta::resolve_resolution(&cue, &self.presets, task) {
            Ok(r) => r,
            Err(err) => {
                warnings.push(format!("{}; using the {task} default", err));
                meta::resolve_resolution(&meta::ResolutionCue::unspecified(), &self.presets, task)?
            }
        };
        tokens.push(SignalToken::Resolution(resolution));

        let mut cut = Vec::new();
        cut.extend(cue.span.clone());
        cut.extend(frame_cue.span.clone());
        cut.extend(meta::frame_index_span(text));
        if s.edit {
            cut.extend(pad_clauses(text));
        }
        let prompt = self.clean_prompt(text, cut, &manifest.instruction);
        let raw = grammar::serialize(&ParsedOutput::new(prompt, tokens))?;
        Ok(PlannerOutput { raw, mode: PlanMode::Generation, warnings })
    }

    /// Strips meta-information phrases, pad markers, and the leading request
    /// verb phrase, leaving the visual description.
    fn clean_prompt(&self, text: &str, mut cut: Vec<Range<usize>>, fallback: &str) -> String {
        static PREPOSITION: LazyLock<Regex> = LazyLock::new(|| {
            Regex::new(r"(?i)\b(?:in|at|with|using|as)\s+(?:an?\s+|the\s+)?$").expect("static regex")
        });
        static TAGS: LazyLock<Regex> =
            LazyLock::new(|| Regex::new(r"<[A-Z]+>|<att:\s*\d+\s*>").expect("static regex"));
        static SPACE_PUNCT: LazyLock<Regex> =
            LazyLock::new(|| Regex::new(r"\s+([,.;:!?])").expect("static regex"));
        static REPEAT_PUNCT: LazyLock<Regex> =
            LazyLock::new(|| Regex::new(r"([,;:])(?:\s*[,;:])+").expect("static regex"));

        for range in &mut cut {
            if let Some(m) = PREPOSITION.find(&text[..range.start]) {
                range.start = m.start();
            }
        }
        cut.sort_by_key(|r| r.start);
        let mut kept = String::with_capacity(text.len());
        let mut pos = 0;
        for r in cut {
            if r.start > pos {
                kept.push_str(&text[pos..r.start]);
                kept.push(' ');
            }
            pos = pos.max(r.end);
        }
        kept.push_str(&text[pos.min(text.len())..]);

        let tidy = |s: &str| -> String {
            let s = TAGS.replace_all(s, " ");
            let s = s.split_whitespace().collect::<Vec<_>>().join(" ");
            let s = SPACE_PUNCT.replace_all(&s, "$1");
            let s = REPEAT_PUNCT.replace_all(&s, "$1");
            s.trim_matches(|c: char| c.is_whitespace() || ",;:-".contains(c)).to_string()
        };
        let kept = tidy(&kept);
        let prompt = tidy(&self.lexicon.lead_phrase.replace(&kept, ""));
        if prompt.is_empty() {
            tidy(fallback)
        } else {
            prompt
        }
    }
}

/// Clauses that mention an attachment. In an edit request these only say
/// which upload is the mask and which is the source.
fn pad_clauses(text: &str) -> Vec<Range<usize>> {
    static BOUNDARY: LazyLock<Regex> =
        LazyLock::new(|| Regex::new(r"[.;,!?]|\band\b").expect("static regex"));
    let mut out = Vec::new();
    let mut start = 0;
    let ends = BOUNDARY.find_iter(text).map(|m| (m.start(), m.end())).chain([(text.len(), text.len())]);
    for (end, next) in ends {
        if text[start..end].contains(grammar::PAD_MARKER) {
            out.push(start..next);
        }
        start = next;
    }
    out
}

impl PlannerBackend for RuleBasedPlanner {
    fn name(&self) -> &str {
        "rule"
    }

    fn plan(&self, request: &CanonicalRequest) -> Result<PlannerOutput, PlanError> {
        let text = request.text.as_str();
        if has_protocol_tags(text) {
            return Err(PlanError::PlanningAmbiguity(
                "instruction already contains protocol tags".into(),
            ));
        }
        let s = self.signals(text, request);
        let generation = s.generation_verb
            && (s.image_noun || s.video || s.resolution_cue || s.control || s.reference)
            || s.edit && (s.edit_verb || s.generation_verb);
        if !generation {
            return Ok(PlannerOutput {
                raw: request.manifest.instruction.clone(),
                mode: PlanMode::Understanding,
                warnings: Vec::new(),
            });
        }
        if s.question {
            return Err(PlanError::PlanningAmbiguity(
                "question phrasing combined with a generation request".into(),
            ));
        }
        if s.edit && request.manifest.visual_count() < 2 {
            return Err(PlanError::PlanningAmbiguity(format!(
                "editing cue with {} visual attachment(s); a mask and a source are required",
                request.manifest.visual_count()
            )));
        }
        self.generation_plan(request, &s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::{EditRoles, FrameCount, FrameIndex, Resolution};
    use crate::planner::{canonicalize, classify_mode, AttachmentKind, InputManifest};

    fn planner() -> RuleBasedPlanner {
        RuleBasedPlanner::new(PlannerLexicon::default(), PresetTable::default())
    }

    fn plan(text: &str, kinds: &[AttachmentKind]) -> Result<PlannerOutput, PlanError> {
        let m = InputManifest::with_kinds(text, kinds);
        planner().plan(&canonicalize(text, &m.attachments)?)
    }

    #[test]
    fn image_generation_golden() {
        let out = plan("Generate a picture of a dog on the beach in 1080P", &[]).unwrap();
        assert_eq!(out.mode, PlanMode::Generation);
        assert_eq!(out.raw, "a dog on the beach <CFI><BORES>1920,1080<EORES>");
    }

    #[test]
    fn understanding_passthrough() {
        let out = plan("Describe this image", &[AttachmentKind::Image]).unwrap();
        assert_eq!(out.mode, PlanMode::Understanding);
        assert_eq!(out.raw, "Describe this image");
        let out = plan("Describe this image <PAD>", &[AttachmentKind::Image]).unwrap();
        assert_eq!(out.mode, PlanMode::Understanding);
        assert_eq!(classify_mode(&out.raw).unwrap(), PlanMode::Understanding);
        assert_eq!(plan("what is 2+2", &[]).unwrap().mode, PlanMode::Understanding);
    }

    #[test]
    fn vertical_video_golden() {
        // oracle: orientation preset for "vertical", then 5 s x 16 fps = 80 -> nearest 4n+1
        let presets = PresetTable::default();
        let res = meta::resolve_resolution(
            &meta::ResolutionCue::new(CueCategory::Orientation, "vertical"),
            &presets,
            TaskKind::TextToVideo,
        )
        .unwrap();
        let frames = meta::snap_frames(5 * presets.fps_default);
        assert_eq!((res, frames), (Resolution::new(720, 1280), 81));

        let out = plan("Make a 5 second vertical video of rain", &[]).unwrap();
        assert_eq!(out.raw, "rain <CFV><BORES>720,1280<EORES><BONF>81<EONF>");
    }

    #[test]
    fn edit_golden() {
        let text = "This is the mask <att:1> and this is the source image <att:2>. Remove the hat";
        let out = plan(text, &[AttachmentKind::Image, AttachmentKind::Image]).unwrap();
        let parsed = grammar::parse(&out.raw).unwrap();
        assert_eq!(parsed.edit_roles(), Some(EditRoles { mask_id: 1, source_id: 2 }));
        assert!(parsed.contains(crate::grammar::SignalKind::Cfi));
        assert_eq!(parsed.resolution(), Some(Resolution::new(1024, 1024)));
        assert_eq!(parsed.prompt_text, "Remove the hat");
    }

    #[test]
    fn image_to_video_last_frame() {
        let out = plan("Animate this picture <PAD> and use it as the last frame", &[AttachmentKind::Image])
            .unwrap();
        let parsed = grammar::parse(&out.raw).unwrap();
        assert_eq!(parsed.frame_index(), Some(FrameIndex::Last));
        assert_eq!(parsed.frame_count(), Some(FrameCount(81)));
        assert_eq!(parsed.resolution(), Some(Resolution::new(832, 480)));
    }

    #[test]
    fn ambiguity_is_surfaced() {
        let err = plan("Remove the mask from the photo", &[]).unwrap_err();
        assert_eq!(err.code(), "PlanningAmbiguity");
        let err = plan(
            "Generate an image following the depth map <PAD> with the same person as the reference <PAD>",
            &[AttachmentKind::Image, AttachmentKind::Image],
        )
        .unwrap_err();
        assert_eq!(err.code(), "PlanningAmbiguity");
        let err = plan("What would you generate as a picture of a cat", &[]).unwrap_err();
        assert_eq!(err.code(), "PlanningAmbiguity");
    }

    #[test]
    fn unknown_term_falls_back_with_warning() {
        let out = plan("Generate a picture of a lake in 360p", &[]).unwrap();
        assert_eq!(grammar::parse(&out.raw).unwrap().resolution(), Some(Resolution::new(1024, 1024)));
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn protocol_tags_in_input_are_rejected() {
        assert_eq!(plan("what is <CFI>", &[]).unwrap_err().code(), "PlanningAmbiguity");
    }
}
