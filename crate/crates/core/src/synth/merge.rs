use std::collections::BTreeMap;
use std::sync::LazyLock;

use rand::seq::IndexedRandom;
use rand::Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{llm_combine, Category, LlmClient, SynthError, Template, TemplateBank};
use super::bank::{BaseInstruction, PLACEHOLDER};
use crate::grammar::{
    self, EditRoles, FrameCount, ParsedOutput, Resolution, SignalKind, SignalToken, PAD_MARKER,
};
use crate::meta::{self, PresetTable};
use crate::planner::AttachmentKind;
use crate::task::TaskKind;

const FRAME_CHOICES: [u32; 4] = [17, 33, 49, 81];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CombinerKind {
    Rule,
    Llm,
}

/// How filled templates are joined to the base instruction.
#[derive(Clone, Copy)]
pub enum Combiner<'a> {
    /// Splice at a sampled sentence boundary with a sampled connector.
    Rule,
    /// Ask a language model to weave the template in.
    Llm(&'a dyn LlmClient),
}

impl Combiner<'_> {
    pub fn kind(&self) -> CombinerKind {
        match self {
            Combiner::Rule => CombinerKind::Rule,
            Combiner::Llm(_) => CombinerKind::Llm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<u64>,
    pub template_ids: Vec<String>,
    pub categories: Vec<Category>,
    pub base_instruction_id: String,
    pub combiner: CombinerKind,
    pub task: TaskKind,
    /// Kinds of the attachments behind each `<PAD>` in `input`, in order.
    pub attachments: Vec<AttachmentKind>,
}

/// One line of a planning-data corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthRecord {
    pub input: String,
    pub label: String,
    pub meta: RecordMeta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Plain,
    Mask,
    Source,
}

#[derive(Debug, Clone, Copy)]
struct Slot {
    kind: AttachmentKind,
    role: Role,
}

struct Filled<'t> {
    template: &'t Template,
    text: String,
    values: BTreeMap<&'static str, String>,
    /// Indices into the slot table, by role.
    mask: Option<usize>,
    source: Option<usize>,
}

fn marker(slot: usize) -> String {
    format!("<PAD:{slot}>")
}

static MARKER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"<PAD:(\d+)>").expect("static regex"));

fn check_compatibility(base: &BaseInstruction, templates: &[&Template]) -> Result<(), SynthError> {
    let task = base.task;
    let incompatible = |category, reason: &str| SynthError::IncompatibleCategory {
        category,
        task,
        reason: reason.to_string(),
    };
    for t in templates {
        if let Some(reason) = t.category.incompatibility(task) {
            return Err(incompatible(t.category, reason));
        }
    }
    for group in [&Category::RESOLUTION[..], &Category::FRAMES[..]] {
        let hits: Vec<_> = templates.iter().filter(|t| group.contains(&t.category)).collect();
        if hits.len() > 1 {
            return Err(incompatible(hits[1].category, "conflicts with another template of the same kind"));
        }
    }
    for c in Category::ALL {
        if templates.iter().filter(|t| t.category == c).count() > 1 {
            return Err(incompatible(c, "category used twice"));
        }
    }
    if let Some(required) = Category::required_for(task) {
        if !templates.iter().any(|t| t.category == required) {
            return Err(incompatible(required, "required for this task but missing"));
        }
    }
    Ok(())
}

fn sample_value<R: Rng + ?Sized>(
    name: &str,
    bank: &TemplateBank,
    presets: &PresetTable,
    rng: &mut R,
) -> String {
    let pick = |items: Vec<&String>, rng: &mut R| -> String {
        items.choose(rng).map(|s| s.to_string()).unwrap_or_default()
    };
    match name {
        "W" | "H" => (rng.random_range(32..=256u32) * 8).to_string(),
        "TERM" => {
            let term = pick(presets.standard_terms.keys().collect(), rng);
            if rng.random_bool(0.5) {
                term.to_lowercase()
            } else {
                term
            }
        }
        "RATIO" => pick(presets.aspect_ratios.keys().collect(), rng),
        "ORIENT" => pick(bank.orientations().keys().collect(), rng),
        "SECONDS" => rng.random_range(1..=10u32).to_string(),
        "FRAMES" => FRAME_CHOICES.choose(rng).expect("non-empty").to_string(),
        "POSITION" => pick(bank.positions().keys().collect(), rng),
        "COND" => pick(bank.control_conditions().iter().collect(), rng),
        "REF" => pick(bank.reference_phrases().iter().collect(), rng),
        other => unreachable!("placeholder {other} is rejected by bank validation"),
    }
}

fn fill<'t, R: Rng + ?Sized>(
    template: &'t Template,
    task: TaskKind,
    slots: &mut Vec<Slot>,
    bank: &TemplateBank,
    presets: &PresetTable,
    rng: &mut R,
) -> Filled<'t> {
    let mut values = BTreeMap::new();
    let mut mask = None;
    let mut source = None;
    let mut out = String::with_capacity(template.surface.len() + 16);
    let mut last = 0;
    for caps in PLACEHOLDER.captures_iter(&template.surface) {
        let m = caps.get(0).expect("whole match");
        out.push_str(&template.surface[last..m.start()]);
        last = m.end();
        let name = caps.get(1).expect("group").as_str();
        let visual = if task.is_video() { AttachmentKind::Video } else { AttachmentKind::Image };
        let slot = match (name, template.category) {
            ("PAD", Category::ControlCue) => Some(Slot { kind: visual, role: Role::Plain }),
            ("PAD", _) => Some(Slot { kind: AttachmentKind::Image, role: Role::Plain }),
            ("MASK", _) => {
                let kind = if rng.random_bool(0.5) { AttachmentKind::Mask } else { AttachmentKind::Image };
                Some(Slot { kind, role: Role::Mask })
            }
            ("SOURCE", _) => Some(Slot { kind: visual, role: Role::Source }),
            _ => None,
        };
        match slot {
            Some(slot) => {
                let index = slots.len();
                match slot.role {
                    Role::Mask => mask = Some(index),
                    Role::Source => source = Some(index),
                    Role::Plain => {}
                }
                slots.push(slot);
                out.push_str(&marker(index));
            }
            None => {
                let value = sample_value(name, bank, presets, rng);
                out.push_str(&value);
                let key = template
                    .category
                    .placeholders()
                    .iter()
                    .copied()
                    .find(|p| *p == name)
                    .expect("validated placeholder");
                values.insert(key, value);
            }
        }
    }
    out.push_str(&template.surface[last..]);
    Filled { template, text: out, values, mask, source }
}

fn sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0;
    let bytes = text.as_bytes();
    for (i, c) in text.char_indices() {
        if matches!(c, '.' | '!' | '?') && bytes.get(i + 1).is_some_and(|b| b.is_ascii_whitespace()) {
            out.push(text[start..i].trim().to_string());
            start = i + 1;
        }
    }
    let tail = text[start..].trim().trim_end_matches(['.', '!', '?']).trim();
    if !tail.is_empty() {
        out.push(tail.to_string());
    }
    out
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn decapitalize(s: &str) -> String {
    let mut chars = s.chars();
    match (chars.next(), chars.clone().next()) {
        (Some(c), Some(n)) if c.is_uppercase() && n.is_lowercase() => {
            c.to_lowercase().chain(chars).collect()
        }
        _ => s.to_string(),
    }
}

fn rule_splice<R: Rng + ?Sized>(base: &str, filled: &[Filled<'_>], bank: &TemplateBank, rng: &mut R) -> String {
    // (text, from base)
    let mut segments: Vec<(String, bool)> = sentences(base).into_iter().map(|s| (s, true)).collect();
    for f in filled {
        let at = rng.random_range(0..=segments.len());
        segments.insert(at, (f.text.clone(), false));
    }
    let mut out = String::new();
    let mut prev_base = false;
    for (i, (text, is_base)) in segments.iter().enumerate() {
        if i == 0 {
            out.push_str(&capitalize(text));
        } else {
            let connector = if prev_base && *is_base {
                ". "
            } else {
                bank.connectors().choose(rng).expect("validated non-empty").as_str()
            };
            out.push_str(connector);
            if connector.trim_end().ends_with(['.', '!', '?']) {
                out.push_str(&capitalize(text));
            } else {
                out.push_str(&decapitalize(text));
            }
        }
        prev_base = *is_base;
    }
    if rng.random_bool(0.5) {
        out.push('.');
    }
    out
}

fn label_fragment(
    filled: &Filled<'_>,
    ids: &[u32],
    bank: &TemplateBank,
    presets: &PresetTable,
) -> Result<Vec<SignalToken>, SynthError> {
    let value = |name: &str| filled.values.get(name).map(String::as_str).unwrap_or_default();
    let number = |name: &str| -> Result<u32, SynthError> {
        value(name)
            .parse()
            .map_err(|_| SynthError::BankValidation(format!("{name} value {:?} is not a number", value(name))))
    };
    let missing = |what: &str| {
        SynthError::BankValidation(format!("template {}: no preset for {what}", filled.template.id))
    };
    Ok(match filled.template.category {
        Category::ExplicitWH => vec![SignalToken::Resolution(meta::snap_resolution(Resolution::new(
            number("W")?,
            number("H")?,
        )))],
        Category::StandardTerm => vec![SignalToken::Resolution(meta::snap_resolution(
            presets.standard_term(value("TERM")).ok_or_else(|| missing(value("TERM")))?,
        ))],
        Category::AspectRatio => vec![SignalToken::Resolution(meta::snap_resolution(
            presets.aspect_ratio(value("RATIO")).ok_or_else(|| missing(value("RATIO")))?,
        ))],
        Category::Orientation => {
            let o = bank.orientations().get(value("ORIENT")).ok_or_else(|| missing(value("ORIENT")))?;
            vec![SignalToken::Resolution(meta::snap_resolution(presets.orientation(*o)))]
        }
        Category::DurationSeconds => {
            let total = number("SECONDS")? * presets.fps_default;
            vec![SignalToken::FrameCount(FrameCount(meta::snap_frames(total)))]
        }
        Category::FrameCountExplicit => vec![SignalToken::FrameCount(FrameCount(number("FRAMES")?))],
        Category::FrameIndexCue => {
            let p = bank.positions().get(value("POSITION")).ok_or_else(|| missing(value("POSITION")))?;
            vec![SignalToken::FrameIndex(*p)]
        }
        Category::EditRoleCue => {
            let (mask, source) = filled.mask.zip(filled.source).expect("edit templates carry both slots");
            vec![SignalToken::EditRoles(EditRoles { mask_id: ids[mask], source_id: ids[source] })]
        }
        Category::ControlCue => vec![SignalToken::Control],
        Category::ReferenceCue => vec![SignalToken::Reference],
    })
}

/// Tokens every plan for `task` carries before any template applies.
fn base_tokens(task: TaskKind, presets: &PresetTable) -> Result<BTreeMap<SignalKind, SignalToken>, SynthError> {
    let mut tokens = BTreeMap::new();
    let mut put = |t: SignalToken| {
        tokens.insert(t.kind(), t);
    };
    put(if task.is_video() { SignalToken::VideoGeneration } else { SignalToken::ImageGeneration });
    let default = presets
        .task_default(task)
        .ok_or_else(|| SynthError::InvalidConfig(format!("no default resolution for {task}")))?;
    put(SignalToken::Resolution(meta::snap_resolution(default)));
    if task.is_video() {
        put(SignalToken::FrameCount(FrameCount(presets.frame_count_default)));
    }
    if task == TaskKind::ImageToVideo {
        put(SignalToken::FrameIndex(grammar::FrameIndex::First));
    }
    Ok(tokens)
}

/// Merges templates into a base with the deterministic splice combiner.
pub fn merge<R: Rng + ?Sized>(
    base: &BaseInstruction,
    templates: &[&Template],
    bank: &TemplateBank,
    presets: &PresetTable,
    rng: &mut R,
) -> Result<SynthRecord, SynthError> {
    merge_with(base, templates, bank, presets, Combiner::Rule, rng)
}

pub fn merge_with<R: Rng + ?Sized>(
    base: &BaseInstruction,
    templates: &[&Template],
    bank: &TemplateBank,
    presets: &PresetTable,
    combiner: Combiner<'_>,
    rng: &mut R,
) -> Result<SynthRecord, SynthError> {
    base.validate()?;
    check_compatibility(base, templates)?;

    let mut slots = Vec::new();
    let mut base_text = String::new();
    for (i, part) in base.instruction.split(PAD_MARKER).enumerate() {
        if i > 0 {
            base_text.push_str(&marker(slots.len()));
            slots.push(Slot { kind: AttachmentKind::Image, role: Role::Plain });
        }
        base_text.push_str(part);
    }
    let filled: Vec<Filled> =
        templates.iter().map(|t| fill(t, base.task, &mut slots, bank, presets, rng)).collect();

    let merged = match combiner {
        Combiner::Rule => rule_splice(&base_text, &filled, bank, rng),
        Combiner::Llm(client) => {
            let mut text = base_text;
            for f in &filled {
                let mut required: Vec<String> = f.values.values().cloned().collect();
                required.extend(MARKER.find_iter(&f.text).map(|m| m.as_str().to_string()));
                text = llm_combine(&text, &f.text, &required, client)?;
            }
            text
        }
    };

    // attachment ids follow the textual order of the slots
    let mut ids = vec![0u32; slots.len()];
    let mut attachments = Vec::with_capacity(slots.len());
    for caps in MARKER.captures_iter(&merged) {
        let slot: usize = caps[1].parse().expect("digits");
        if slot >= slots.len() || ids[slot] != 0 {
            return Err(SynthError::MalformedRemoteReply { missing: format!("duplicated slot {}", &caps[0]) });
        }
        attachments.push(slots[slot].kind);
        ids[slot] = attachments.len() as u32;
    }
    if let Some(slot) = ids.iter().position(|id| *id == 0) {
        return Err(SynthError::MalformedRemoteReply { missing: marker(slot) });
    }
    let input = MARKER.replace_all(&merged, PAD_MARKER).into_owned();
    if input.matches(PAD_MARKER).count() != slots.len() {
        return Err(SynthError::MalformedRemoteReply { missing: "extra <PAD> markers".into() });
    }

    let mut tokens = base_tokens(base.task, presets)?;
    for f in &filled {
        for t in label_fragment(f, &ids, bank, presets)? {
            tokens.insert(t.kind(), t);
        }
    }
    let label = grammar::serialize(&ParsedOutput::new(base.prompt.clone(), tokens.into_values().collect()))?;

    Ok(SynthRecord {
        input,
        label,
        meta: RecordMeta {
            seed: None,
            index: None,
            template_ids: templates.iter().map(|t| t.id.clone()).collect(),
            categories: templates.iter().map(|t| t.category).collect(),
            base_instruction_id: base.id.clone(),
            combiner: combiner.kind(),
            task: base.task,
            attachments,
        },
    })
}
