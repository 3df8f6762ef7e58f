//! Run the rule planner on instructions, with optional attachments given as
//! `--image`, `--video` or `--mask` flags before the instruction.
//!
//! cargo run --example plan_instruction -- --mask --image "This is the mask <att:1> and this is the source image <att:2>. Remove the hat"

use unison::planner::{canonicalize, AttachmentKind, InputManifest, PlannerBackend, RuleBasedPlanner};

fn main() {
    let planner = RuleBasedPlanner::new(Default::default(), Default::default());
    let mut kinds = Vec::new();
    let mut instructions = Vec::new();
    for arg in std::env::args().skip(1) {
        match arg.as_str() {
            "--image" => kinds.push(AttachmentKind::Image),
            "--video" => kinds.push(AttachmentKind::Video),
            "--mask" => kinds.push(AttachmentKind::Mask),
            _ => instructions.push((arg, std::mem::take(&mut kinds))),
        }
    }
    if instructions.is_empty() {
        instructions = vec![
            ("Generate a picture of a dog on the beach in 1080P".into(), vec![]),
            ("Make a 5 second vertical video of rain".into(), vec![]),
            ("Animate this picture <att:1> and use it as the last frame".into(), vec![AttachmentKind::Image]),
            (
                "This is the mask <att:1> and this is the source image <att:2>. Remove the hat".into(),
                vec![AttachmentKind::Mask, AttachmentKind::Image],
            ),
            ("Describe this image".into(), vec![AttachmentKind::Image]),
        ];
    }
    for (text, kinds) in instructions {
        let manifest = InputManifest::with_kinds(text.as_str(), &kinds);
        let result = canonicalize(&text, &manifest.attachments).map_err(Into::into).and_then(|c| {
            println!("canonical {}", c.text);
            planner.plan(&c)
        });
        match result {
            Ok(out) => println!("{:?}: {}", out.mode, out.raw),
            Err(e) => println!("error {}: {e}", e.code()),
        }
        println!();
    }
}
