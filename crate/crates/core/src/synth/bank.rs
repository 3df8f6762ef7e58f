use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{Category, SynthError};
use crate::grammar::{FrameIndex, PAD_MARKER};
use crate::meta::Orientation;
use crate::planner::{LexiconSpec, PlannerLexicon};
use crate::task::TaskKind;

pub(super) static PLACEHOLDER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"<([A-Z]+)>").expect("static regex"));

/// One phrasing of a meta-information cue, e.g. `"make it <W>x<H>"`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Template {
    pub id: String,
    pub category: Category,
    pub surface: String,
}

impl Template {
    /// Placeholder names in order of appearance, `PAD` included.
    pub fn placeholders(&self) -> Vec<&str> {
        PLACEHOLDER
            .captures_iter(&self.surface)
            .map(|c| c.get(1).expect("group").as_str())
            .collect()
    }

    pub fn pad_slots(&self) -> usize {
        self.surface.matches(PAD_MARKER).count()
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |why: String| SynthError::BankValidation(format!("template {}: {why}", self.id));
        let found = self.placeholders();
        for name in self.category.placeholders() {
            let n = found.iter().filter(|f| *f == name).count();
            if n != 1 {
                return Err(bad(format!("{} expects <{name}> once, found {n}", self.category)));
            }
        }
        let allowed: BTreeSet<&str> =
            self.category.placeholders().iter().copied().chain(["PAD"]).collect();
        if let Some(stray) = found.iter().find(|f| !allowed.contains(*f)) {
            return Err(bad(format!("<{stray}> is not a {} placeholder", self.category)));
        }
        if !self.category.pad_slots().contains(&self.pad_slots()) {
            return Err(bad(format!(
                "{} attachment slot(s), {} allows {:?}",
                self.pad_slots(),
                self.category,
                self.category.pad_slots()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BankFile {
    version: u32,
    lexicon: LexiconSpec,
    connectors: Vec<String>,
    orientations: BTreeMap<String, Orientation>,
    positions: BTreeMap<String, FrameIndex>,
    control_conditions: Vec<String>,
    reference_phrases: Vec<String>,
    templates: Vec<Template>,
}

/// Templates grouped by category, plus the shared vocabulary and value
/// tables used to fill them.
#[derive(Debug, Clone)]
pub struct TemplateBank {
    file: BankFile,
    lexicon: PlannerLexicon,
    by_category: BTreeMap<Category, Vec<usize>>,
    warnings: Vec<String>,
}

static DEFAULT_BANK: LazyLock<TemplateBank> = LazyLock::new(|| {
    TemplateBank::from_json(include_str!("../../data/template_bank.json"))
        .expect("shipped template bank is valid")
});

impl Default for TemplateBank {
    fn default() -> Self {
        DEFAULT_BANK.clone()
    }
}

impl TemplateBank {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, SynthError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| SynthError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(json: &str) -> Result<Self, SynthError> {
        let file: BankFile =
            serde_json::from_str(json).map_err(|e| SynthError::BankValidation(e.to_string()))?;
        Self::from_file(file)
    }

    fn from_file(file: BankFile) -> Result<Self, SynthError> {
        let bad = SynthError::BankValidation;
        let lexicon = PlannerLexicon::compile(file.lexicon.clone())
            .map_err(|e| bad(format!("lexicon: {e}")))?;
        let mut ids = BTreeSet::new();
        let mut by_category: BTreeMap<Category, Vec<usize>> = BTreeMap::new();
        for (i, t) in file.templates.iter().enumerate() {
            t.validate()?;
            if !ids.insert(t.id.as_str()) {
                return Err(bad(format!("duplicate template id {}", t.id)));
            }
            by_category.entry(t.category).or_default().push(i);
        }
        if file.connectors.is_empty() {
            return Err(bad("no connectors".into()));
        }
        for (name, values, re) in [
            ("control condition", &file.control_conditions, &lexicon.control_cues),
            ("reference phrase", &file.reference_phrases, &lexicon.reference_cues),
        ] {
            if values.is_empty() {
                return Err(bad(format!("no {name}s")));
            }
            if let Some(v) = values.iter().find(|v| !re.is_match(v)) {
                return Err(bad(format!("{name} {v:?} is not covered by the lexicon")));
            }
        }
        if file.orientations.is_empty() || file.positions.is_empty() {
            return Err(bad("orientation and position tables must be non-empty".into()));
        }
        let mut warnings = Vec::new();
        for c in Category::ALL {
            match by_category.get(&c).map_or(0, Vec::len) {
                0 => warnings.push(format!("category {c} has no templates")),
                n if n < 100 => warnings.push(format!("category {c} has {n} templates (fewer than 100)")),
                _ => {}
            }
        }
        for w in &warnings {
            tracing::warn!("{w}");
        }
        Ok(Self { file, lexicon, by_category, warnings })
    }

    pub fn version(&self) -> u32 {
        self.file.version
    }

    pub fn lexicon(&self) -> &PlannerLexicon {
        &self.lexicon
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn templates(&self) -> &[Template] {
        &self.file.templates
    }

    pub fn category(&self, c: Category) -> impl Iterator<Item = &Template> + '_ {
        self.by_category
            .get(&c)
            .into_iter()
            .flatten()
            .map(|i| &self.file.templates[*i])
    }

    pub fn count(&self, c: Category) -> usize {
        self.by_category.get(&c).map_or(0, Vec::len)
    }

    pub fn template(&self, id: &str) -> Option<&Template> {
        self.file.templates.iter().find(|t| t.id == id)
    }

    pub fn connectors(&self) -> &[String] {
        &self.file.connectors
    }

    pub fn orientations(&self) -> &BTreeMap<String, Orientation> {
        &self.file.orientations
    }

    pub fn positions(&self) -> &BTreeMap<String, FrameIndex> {
        &self.file.positions
    }

    pub fn control_conditions(&self) -> &[String] {
        &self.file.control_conditions
    }

    pub fn reference_phrases(&self) -> &[String] {
        &self.file.reference_phrases
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.file).expect("bank serializes")
    }
}

/// A plain instruction with no meta-information, and the prompt it describes.
///
/// Image-to-video bases carry their own `<PAD>` for the animated image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaseInstruction {
    pub id: String,
    pub task: TaskKind,
    pub instruction: String,
    pub prompt: String,
}

impl BaseInstruction {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |why: &str| SynthError::BankValidation(format!("base {}: {why}", self.id));
        if !self.task.is_generation() {
            return Err(bad("task must be a generation task"));
        }
        let pads = self.instruction.matches(PAD_MARKER).count();
        let want = usize::from(self.task == TaskKind::ImageToVideo);
        if pads != want {
            return Err(bad("image-to-video bases need exactly one <PAD>, others none"));
        }
        if self.prompt.trim().is_empty() || self.prompt.contains('<') {
            return Err(bad("prompt must be non-empty plain text"));
        }
        Ok(())
    }
}

static DEFAULT_BASES: &str = include_str!("../../data/bases.json");

pub fn load_bases(path: Option<&Path>) -> Result<Vec<BaseInstruction>, SynthError> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| SynthError::Io(format!("{}: {e}", p.display())))?,
        None => DEFAULT_BASES.to_string(),
    };
    let bases: Vec<BaseInstruction> =
        serde_json::from_str(&text).map_err(|e| SynthError::BankValidation(e.to_string()))?;
    for b in &bases {
        b.validate()?;
    }
    Ok(bases)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_bank_has_100_per_category() {
        let bank = TemplateBank::default();
        for c in Category::ALL {
            assert_eq!(bank.count(c), 100, "{c}");
        }
        assert!(bank.warnings().is_empty());
    }

    #[test]
    fn placeholder_mismatch_is_rejected() {
        let t = Template { id: "x".into(), category: Category::ExplicitWH, surface: "h=<H>".into() };
        assert_eq!(t.validate().unwrap_err().code(), "BankValidation");
        let t = Template { id: "x".into(), category: Category::StandardTerm, surface: "<TERM> <W>".into() };
        assert!(t.validate().is_err());
        let t = Template { id: "x".into(), category: Category::ControlCue, surface: "the <COND>".into() };
        assert!(t.validate().is_err());
    }

    #[test]
    fn empty_category_warns() {
        let mut file = DEFAULT_BANK.file.clone();
        file.templates.retain(|t| t.category != Category::AspectRatio);
        let bank = TemplateBank::from_file(file).unwrap();
        assert!(bank.warnings().iter().any(|w| w.contains("AspectRatio has no templates")));
    }

    #[test]
    fn shipped_bases_validate() {
        let bases = load_bases(None).unwrap();
        let tasks: BTreeSet<_> = bases.iter().map(|b| b.task).collect();
        let generation: BTreeSet<_> = TaskKind::ALL.into_iter().filter(|t| t.is_generation()).collect();
        assert_eq!(tasks, generation);
    }
}
