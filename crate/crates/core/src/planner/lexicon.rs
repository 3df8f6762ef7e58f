use regex::Regex;
use serde::{Deserialize, Serialize};

/// Keyword lists the rule planner classifies with. They ship inside the
/// template bank so the synthesizer and planner read the same vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconSpec {
    pub generation_verbs: Vec<String>,
    pub image_nouns: Vec<String>,
    pub video_cues: Vec<String>,
    pub edit_cues: Vec<String>,
    pub edit_verbs: Vec<String>,
    pub control_cues: Vec<String>,
    pub reference_cues: Vec<String>,
    pub question_leads: Vec<String>,
}

/// Compiled form of [`LexiconSpec`].
#[derive(Debug, Clone)]
pub struct PlannerLexicon {
    spec: LexiconSpec,
    pub(crate) generation_verbs: Regex,
    pub(crate) image_nouns: Regex,
    pub(crate) video_cues: Regex,
    pub(crate) edit_cues: Regex,
    pub(crate) edit_verbs: Regex,
    pub(crate) control_cues: Regex,
    pub(crate) reference_cues: Regex,
    pub(crate) question_leads: Regex,
    pub(crate) lead_phrase: Regex,
}

fn alternation(words: &[String]) -> String {
    let mut words: Vec<&str> = words.iter().map(|w| w.trim()).filter(|w| !w.is_empty()).collect();
    // longest first so multi-word phrases win over their prefixes
    words.sort_by_key(|w| std::cmp::Reverse(w.len()));
    if words.is_empty() {
        // matches nothing
        return r"[^\s\S]".to_string();
    }
    words
        .iter()
        .map(|w| regex::escape(w).replace(r"\ ", r"\s+").replace(' ', r"\s+"))
        .collect::<Vec<_>>()
        .join("|")
}

fn phrase_regex(words: &[String]) -> Result<Regex, regex::Error> {
    Regex::new(&format!(r"(?i)\b(?:{})\b", alternation(words)))
}

impl PlannerLexicon {
    pub fn compile(spec: LexiconSpec) -> Result<Self, regex::Error> {
        let nouns: Vec<String> =
            spec.image_nouns.iter().chain(&spec.video_cues).cloned().collect();
        let lead_phrase = Regex::new(&format!(
            r"(?i)^\s*(?:please\s+)?(?:{verbs})\s+(?:me\s+)?(?:(?:a|an|the|some)\s+)?(?:(?:{nouns})\s+)?(?:of|showing|depicting|about|where|in\s+which|that\s+shows)?\s*",
            verbs = alternation(&spec.generation_verbs),
            nouns = alternation(&nouns),
        ))?;
        Ok(Self {
            generation_verbs: phrase_regex(&spec.generation_verbs)?,
            image_nouns: phrase_regex(&spec.image_nouns)?,
            video_cues: phrase_regex(&spec.video_cues)?,
            edit_cues: phrase_regex(&spec.edit_cues)?,
            edit_verbs: phrase_regex(&spec.edit_verbs)?,
            control_cues: phrase_regex(&spec.control_cues)?,
            reference_cues: phrase_regex(&spec.reference_cues)?,
            question_leads: Regex::new(&format!(
                r"(?i)^\s*(?:{})\b",
                alternation(&spec.question_leads)
            ))?,
            lead_phrase,
            spec,
        })
    }

    pub fn spec(&self) -> &LexiconSpec {
        &self.spec
    }
}

impl Default for PlannerLexicon {
    fn default() -> Self {
        crate::synth::TemplateBank::default().lexicon().clone()
    }
}
