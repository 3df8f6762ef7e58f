//! Synthesize a planning corpus, then audit it against the rule planner.
//!
//! cargo run --release --example synth_corpus -- 2000 7

use unison::meta::PresetTable;
use unison::planner::RuleBasedPlanner;
use unison::synth::{audit_corpus, load_bases, synthesize_corpus, SynthConfig, TemplateBank};

fn main() {
    let mut args = std::env::args().skip(1);
    let n = args.next().map_or(1000, |s| s.parse().expect("record count"));
    let seed = args.next().map_or(7, |s| s.parse().expect("seed"));

    let bank = TemplateBank::default();
    let bases = load_bases(None).expect("shipped bases");
    let presets = PresetTable::default();
    let dir = tempfile::tempdir().expect("temp dir");
    let out = dir.path().join("corpus.jsonl");

    let summary = synthesize_corpus(&SynthConfig::new(n, seed), &bank, &bases, &presets, None, &out).expect("synthesis");
    println!("{} records, sha256 {}", summary.n, summary.sha256);
    for (task, count) in &summary.per_task {
        println!("  {task:<20} {count}");
    }
    let text = std::fs::read_to_string(&out).expect("corpus");
    for line in text.lines().take(3) {
        let v: serde_json::Value = serde_json::from_str(line).expect("record");
        println!("\n  input {}\n  label {}", v["input"], v["label"]);
    }

    let planner = RuleBasedPlanner::new(bank.lexicon().clone(), presets);
    let report = audit_corpus(&out, &planner).expect("audit");
    println!("\nparse rate {:.4}, planner agreement {:.4}", report.parse_rate, report.planner_agreement_rate);
}
