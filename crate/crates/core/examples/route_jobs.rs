//! Derive task kinds, validate plans and dispatch jobs to mock backends.

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Duration;

use unison::grammar::parse;
use unison::meta::PresetTable;
use unison::planner::{AttachmentKind, InputManifest};
use unison::router::{build_job, derive_task_kind, dispatch, validate_plan, BackendRegistry, MockBackend, RouteLimits, TaskKind};

fn main() {
    use AttachmentKind::*;
    let presets = PresetTable::default();
    let limits = RouteLimits::default();

    let video_only: BTreeSet<_> = TaskKind::ALL.into_iter().filter(|t| t.is_generation() && t.is_video()).collect();
    let mut registry = BackendRegistry::new();
    registry
        .register(Arc::new(MockBackend::with_capabilities("video-farm", video_only).with_latency(Duration::from_millis(20))))
        .register(Arc::new(MockBackend::new("catch-all")));

    let plans: [(&str, &[AttachmentKind]); 7] = [
        ("a fox <CFI><BORES>1920,1080<EORES>", &[]),
        ("rain <CFV><BORES>720,1280<EORES><BONF>81<EONF>", &[]),
        ("waves <CFV><BOFIDX>Last<EOFIDX>", &[Image]),
        ("Remove the hat <CFI><BOEDIT>1,2<EOEDIT>", &[Mask, Image]),
        ("dance <CFV><CTRL>", &[Video]),
        ("a fox <CFI>", &[Video]),
        ("a fox <CFI><BONF>81<EONF>", &[]),
    ];
    for (raw, kinds) in plans {
        let manifest = InputManifest::with_kinds("", kinds);
        let parsed = parse(raw).expect("valid grammar");
        print!("{raw:<50} {kinds:?}: ");
        match derive_task_kind(&parsed.tokens, &manifest) {
            Ok(task) => print!("{task}"),
            Err(e) => {
                println!("{}", e.code());
                continue;
            }
        }
        let report = validate_plan(&parsed, &manifest, &limits);
        if !report.is_empty() {
            println!(" invalid: {report}");
            continue;
        }
        let job = build_job(&parsed, &manifest, &presets, &limits).expect("validated");
        let handle = dispatch(&job, &registry).expect("capable backend");
        let status = loop {
            let s = registry.poll(&handle).expect("known job");
            if s.is_terminal() {
                break s;
            }
            std::thread::sleep(Duration::from_millis(5));
        };
        println!(" -> {} {status:?}", handle.backend);
    }
}
