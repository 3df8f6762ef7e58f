//! Resolve resolution and frame-count cues against the shipped preset table.

use unison::meta::{detect_frames, detect_resolution_cue, resolve_frame_index, resolve_resolution, PresetTable};
use unison::task::TaskKind;

fn main() {
    let presets = PresetTable::default();
    let phrases = [
        "a fox in 1080P",
        "a beach at 16:9",
        "the width is 480 pixels and the height is 640",
        "a 4K poster, width 1000 height 700",
        "a vertical clip",
        "a square frame",
        "a quiet harbor",
    ];
    for phrase in phrases {
        let cue = detect_resolution_cue(phrase);
        let res = resolve_resolution(&cue, &presets, TaskKind::TextToImage).expect("resolvable");
        println!("{phrase:<48} {:<12?} -> {res}", cue.category);
    }
    println!();
    for phrase in ["a 5 second video", "make it 7 secs", "with 50 frames", "a video of rain"] {
        let f = detect_frames(phrase, &presets).expect("valid frame cue");
        println!("{phrase:<48} {:<12?} -> {} frames", f.source, f.frames.0);
    }
    println!();
    for phrase in ["use the photo as the last frame", "animate this picture"] {
        println!("{phrase:<48} -> {:?}", resolve_frame_index(phrase));
    }
}
