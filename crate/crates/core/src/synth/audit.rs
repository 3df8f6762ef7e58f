use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Category, SynthError, SynthRecord};
use crate::grammar::{self, SignalKind, SignalToken};
use crate::planner::{canonicalize, InputManifest, PlanMode, PlannerBackend};
use crate::task::TaskKind;

const MAX_MISMATCHES: usize = 20;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub records: usize,
    pub parsed: usize,
    pub agreed: usize,
}

impl Tally {
    fn add(&mut self, parsed: bool, agreed: bool) {
        self.records += 1;
        self.parsed += usize::from(parsed);
        self.agreed += usize::from(agreed);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mismatch {
    pub line: usize,
    pub input: String,
    pub label: String,
    /// Planner output, or the error it raised.
    pub planned: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub records: usize,
    pub parse_rate: f64,
    pub planner_agreement_rate: f64,
    pub per_category: BTreeMap<Category, Tally>,
    pub per_task: BTreeMap<TaskKind, Tally>,
    pub mismatches: Vec<Mismatch>,
}

fn token_set(tokens: Vec<SignalToken>) -> BTreeMap<SignalKind, SignalToken> {
    tokens.into_iter().map(|t| (t.kind(), t)).collect()
}

struct Outcome {
    record: Option<SynthRecord>,
    parsed: bool,
    agreed: bool,
    mismatch: Option<Mismatch>,
}

fn check(line: usize, text: &str, planner: &dyn PlannerBackend) -> Outcome {
    let Ok(record) = serde_json::from_str::<SynthRecord>(text) else {
        return Outcome { record: None, parsed: false, agreed: false, mismatch: None };
    };
    let label = grammar::parse(&record.label);
    let parsed = label.is_ok();
    let planned = InputManifest::with_kinds(record.input.as_str(), &record.meta.attachments);
    let planned = canonicalize(&record.input, &planned.attachments)
        .and_then(|request| planner.plan(&request));
    let (agreed, planned_text) = match (&label, planned) {
        (Ok(label), Ok(out)) if out.mode == PlanMode::Generation => match grammar::parse(&out.raw) {
            Ok(p) => (token_set(p.tokens) == token_set(label.tokens.clone()), out.raw),
            Err(e) => (false, format!("{}: {e}", e.code())),
        },
        (_, Ok(out)) => (false, out.raw),
        (_, Err(e)) => (false, format!("{}: {e}", e.code())),
    };
    let mismatch = (!agreed).then(|| Mismatch {
        line,
        input: record.input.clone(),
        label: record.label.clone(),
        planned: planned_text,
    });
    Outcome { record: Some(record), parsed, agreed, mismatch }
}

/// Audits JSONL lines. Lines that do not decode count as unparsed and
/// disagreeing records.
pub fn audit_records<'a>(lines: impl IntoIterator<Item = &'a str>, planner: &dyn PlannerBackend) -> AuditReport {
    let lines: Vec<(usize, &str)> = lines
        .into_iter()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l))
        .collect();
    let outcomes: Vec<Outcome> = lines.par_iter().map(|(i, l)| check(*i, l, planner)).collect();

    let mut per_category: BTreeMap<Category, Tally> = BTreeMap::new();
    let mut per_task: BTreeMap<TaskKind, Tally> = BTreeMap::new();
    let mut mismatches = Vec::new();
    let (mut parsed, mut agreed) = (0usize, 0usize);
    for o in &outcomes {
        parsed += usize::from(o.parsed);
        agreed += usize::from(o.agreed);
        if let Some(r) = &o.record {
            per_task.entry(r.meta.task).or_default().add(o.parsed, o.agreed);
            for c in &r.meta.categories {
                per_category.entry(*c).or_default().add(o.parsed, o.agreed);
            }
        }
        if let Some(m) = &o.mismatch {
            if mismatches.len() < MAX_MISMATCHES {
                mismatches.push(m.clone());
            }
        }
    }
    let n = outcomes.len();
    let rate = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    AuditReport {
        records: n,
        parse_rate: rate(parsed),
        planner_agreement_rate: rate(agreed),
        per_category,
        per_task,
        mismatches,
    }
}

pub fn audit_corpus(path: impl AsRef<Path>, planner: &dyn PlannerBackend) -> Result<AuditReport, SynthError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| SynthError::Io(format!("{}: {e}", path.display())))?;
    Ok(audit_records(text.lines(), planner))
}
