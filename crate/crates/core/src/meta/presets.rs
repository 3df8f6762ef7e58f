use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MetaError, Orientation};
use crate::grammar::Resolution;
use crate::task::TaskKind;

/// Term and ratio lookups plus per-task fallbacks.
///
/// Only the `1080P` and `16:9` entries of the shipped table come from the
/// method description. Everything else is editable configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PresetTable {
    pub standard_terms: BTreeMap<String, Resolution>,
    pub aspect_ratios: BTreeMap<String, Resolution>,
    pub orientations: BTreeMap<Orientation, Resolution>,
    pub task_defaults: BTreeMap<TaskKind, Resolution>,
    pub fps_default: u32,
    pub frame_count_default: u32,
}

const DEFAULT_PRESETS: &str = include_str!("../../data/presets.json");

impl Default for PresetTable {
    fn default() -> Self {
        let table: PresetTable =
            serde_json::from_str(DEFAULT_PRESETS).expect("shipped preset table parses");
        table.validate().expect("shipped preset table validates");
        table
    }
}

fn normalize_term(term: &str) -> String {
    term.chars().filter(|c| !c.is_whitespace()).collect::<String>().to_ascii_uppercase()
}

impl PresetTable {
    pub fn from_json(json: &str) -> Result<Self, MetaError> {
        let table: PresetTable =
            serde_json::from_str(json).map_err(|e| MetaError::InvalidPresets(e.to_string()))?;
        table.validate()?;
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MetaError> {
        let path = path.as_ref();
        let json = std::fs::read_to_string(path)
            .map_err(|e| MetaError::InvalidPresets(format!("{}: {e}", path.display())))?;
        Self::from_json(&json)
    }

    pub fn validate(&self) -> Result<(), MetaError> {
        let all = self
            .standard_terms
            .iter()
            .chain(&self.aspect_ratios)
            .map(|(k, r)| (k.clone(), *r))
            .chain(self.orientations.iter().map(|(k, r)| (format!("{k:?}"), *r)))
            .chain(self.task_defaults.iter().map(|(k, r)| (k.to_string(), *r)));
        for (key, r) in all {
            if r.width < 16 || r.height < 16 {
                return Err(MetaError::InvalidPresets(format!(
                    "{key} maps to {r}, below the 16px minimum"
                )));
            }
        }
        for task in TaskKind::ALL.into_iter().filter(|t| t.is_generation()) {
            if !self.task_defaults.contains_key(&task) {
                return Err(MetaError::InvalidPresets(format!("no task default for {task}")));
            }
        }
        for o in Orientation::ALL {
            if !self.orientations.contains_key(&o) {
                return Err(MetaError::InvalidPresets(format!("no preset for {o:?}")));
            }
        }
        if self.fps_default == 0 || self.frame_count_default == 0 {
            return Err(MetaError::InvalidPresets(
                "fps_default and frame_count_default must be positive".into(),
            ));
        }
        for key in self.aspect_ratios.keys() {
            if super::parse_ratio(key).is_none() {
                return Err(MetaError::InvalidPresets(format!("{key:?} is not a W:H ratio")));
            }
        }
        Ok(())
    }

    /// Case- and whitespace-insensitive term lookup, e.g. `1080p`.
    pub fn standard_term(&self, term: &str) -> Option<Resolution> {
        let want = normalize_term(term);
        self.standard_terms.iter().find(|(k, _)| normalize_term(k) == want).map(|(_, r)| *r)
    }

    pub fn aspect_ratio(&self, ratio: &str) -> Option<Resolution> {
        let want = super::parse_ratio(ratio)?;
        self.aspect_ratios
            .iter()
            .find(|(k, _)| super::parse_ratio(k) == Some(want))
            .map(|(_, r)| *r)
    }

    pub fn orientation(&self, o: Orientation) -> Resolution {
        self.orientations[&o]
    }

    pub fn task_default(&self, task: TaskKind) -> Option<Resolution> {
        self.task_defaults.get(&task).copied()
    }
}
