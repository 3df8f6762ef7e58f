//! Seeded generators shared by the integration tests.
#![allow(dead_code)]

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use unison::grammar::{
    serialize, EditRoles, FrameCount, FrameIndex, ParsedOutput, Resolution, SignalKind, SignalToken,
};

const WORDS: &[&str] = &[
    "a", "fox", "running", "through", "snow", "café", "under", "neon", "lights", "50%", "x<y", "a > b",
    "<lower>", "<1>", "<>", "rain,", "slow-motion", "日本", "city.", "the", "<PAD>", "mask", "dog",
];

pub fn random_prompt<R: Rng>(rng: &mut R) -> String {
    let n = rng.random_range(0..8);
    let mut out = String::new();
    for _ in 0..n {
        // odd spacing on purpose; the canonical form collapses it
        out.push_str([" ", "  ", "\t", "\n "].choose(rng).unwrap());
        out.push_str(WORDS.choose(rng).unwrap());
    }
    out
}

pub fn random_token<R: Rng>(kind: SignalKind, rng: &mut R) -> SignalToken {
    match kind {
        SignalKind::Cfi => SignalToken::ImageGeneration,
        SignalKind::Cfv => SignalToken::VideoGeneration,
        SignalKind::Bores => SignalToken::Resolution(Resolution::new(
            rng.random_range(1..=8192),
            rng.random_range(1..=8192),
        )),
        SignalKind::Bonf => SignalToken::FrameCount(FrameCount(rng.random_range(1..=2000))),
        SignalKind::Bofidx => {
            SignalToken::FrameIndex(if rng.random_bool(0.5) { FrameIndex::First } else { FrameIndex::Last })
        }
        SignalKind::Boedit => {
            let mask_id = rng.random_range(1..=9);
            let mut source_id = rng.random_range(1..=8);
            if source_id >= mask_id {
                source_id += 1;
            }
            SignalToken::EditRoles(EditRoles { mask_id, source_id })
        }
        SignalKind::Ctrl => SignalToken::Control,
        SignalKind::Ref => SignalToken::Reference,
    }
}

/// A grammar-valid plan: random prompt, random subset of kinds in random order.
pub fn random_plan<R: Rng>(rng: &mut R) -> ParsedOutput {
    let mut kinds: Vec<SignalKind> =
        SignalKind::ALL.into_iter().filter(|_| rng.random_bool(0.4)).collect();
    kinds.shuffle(rng);
    let tokens = kinds.into_iter().map(|k| random_token(k, rng)).collect();
    ParsedOutput::new(random_prompt(rng), tokens)
}

pub const MUTATION_CLASSES: [&str; 6] = [
    "UnknownToken",
    "PayloadArity",
    "PayloadDomain",
    "DuplicateToken",
    "UnterminatedToken",
    "UnmatchedClose",
];

fn with_paired<R: Rng>(plan: &mut ParsedOutput, rng: &mut R) -> SignalKind {
    if let Some(t) = plan.tokens.iter().find(|t| t.kind().is_paired()) {
        return t.kind();
    }
    let kind = *[SignalKind::Bores, SignalKind::Bonf, SignalKind::Bofidx, SignalKind::Boedit].choose(rng).unwrap();
    plan.tokens.push(random_token(kind, rng));
    kind
}

fn bad_payload<R: Rng>(kind: SignalKind, class: &str, rng: &mut R) -> String {
    let n: u32 = rng.random_range(1..=4000);
    match (kind, class) {
        (SignalKind::Bores, "PayloadDomain") => {
            [format!("0,{n}"), format!("{n},0"), format!("-{n},{n}"), format!("{n},99999999999")]
                .choose(rng)
                .unwrap()
                .clone()
        }
        (SignalKind::Bores, _) => {
            [format!("{n}"), format!("{n},{n},{n}"), format!("{n}x{n}"), String::new(), "a,b".into()]
                .choose(rng)
                .unwrap()
                .clone()
        }
        (SignalKind::Bonf, "PayloadDomain") => "0".into(),
        (SignalKind::Bonf, _) => [format!("{n},{n}"), "many".into(), String::new()].choose(rng).unwrap().clone(),
        (SignalKind::Boedit, "PayloadDomain") => {
            let id = rng.random_range(1..=9);
            [format!("{id},{id}"), format!("0,{id}")].choose(rng).unwrap().clone()
        }
        (SignalKind::Boedit, _) => [format!("{n}"), "1,2,3".into(), "mask,source".into()].choose(rng).unwrap().clone(),
        (SignalKind::Bofidx, "PayloadDomain") => ["Middle", "First,Last", "2"].choose(rng).unwrap().to_string(),
        (SignalKind::Bofidx, _) => ["", "  "].choose(rng).unwrap().to_string(),
        _ => unreachable!("{kind} has no payload"),
    }
}

/// Corrupts a random valid plan so that strict parsing must fail with `class`.
pub fn mutate<R: Rng>(class: &str, rng: &mut R) -> String {
    let mut plan = random_plan(rng);
    match class {
        "UnknownToken" => {
            let text = serialize(&plan).unwrap();
            let name = ["WAT", "CFX", "EOF", "BOX", "EOEDITX", "IMG"].choose(rng).unwrap();
            let at = boundary(&text, rng);
            format!("{}<{name}>{}", &text[..at], &text[at..])
        }
        "PayloadArity" | "PayloadDomain" => {
            let kind = with_paired(&mut plan, rng);
            let text = serialize(&plan).unwrap();
            let good = plan.tokens.iter().find(|t| t.kind() == kind).unwrap().to_string();
            let bad = format!("<{kind}>{}<{}>", bad_payload(kind, class, rng), kind.close_name().unwrap());
            text.replacen(&good, &bad, 1)
        }
        "DuplicateToken" => {
            if plan.tokens.is_empty() {
                plan.tokens.push(random_token(*SignalKind::ALL.choose(rng).unwrap(), rng));
            }
            let text = serialize(&plan).unwrap();
            let kind = plan.tokens.choose(rng).unwrap().kind();
            // a second, well-formed token of the same kind
            format!("{text}{}", random_token(kind, rng))
        }
        "UnterminatedToken" => {
            let kind = with_paired(&mut plan, rng);
            let text = serialize(&plan).unwrap();
            let close = format!("<{}>", kind.close_name().unwrap());
            text.replacen(&close, "", 1)
        }
        "UnmatchedClose" => {
            let text = serialize(&plan).unwrap();
            let kind = *[SignalKind::Bores, SignalKind::Bonf, SignalKind::Bofidx, SignalKind::Boedit].choose(rng).unwrap();
            // before the first token, so the closer cannot pair with anything
            let at = text.match_indices('<').map(|(i, _)| i).find(|i| tag_starts(&text, *i)).unwrap_or(text.len());
            let at = rng.random_range(0..=at);
            let at = (0..=at).rev().find(|i| text.is_char_boundary(*i)).unwrap();
            format!("{}<{}>{}", &text[..at], kind.close_name().unwrap(), &text[at..])
        }
        other => panic!("unknown mutation class {other}"),
    }
}

fn tag_starts(text: &str, at: usize) -> bool {
    let rest = &text.as_bytes()[at + 1..];
    let n = rest.iter().take_while(|b| b.is_ascii_uppercase()).count();
    n > 0 && rest.get(n) == Some(&b'>')
}

/// A char boundary that is not inside a paired token's payload.
fn boundary<R: Rng>(text: &str, rng: &mut R) -> usize {
    let mut ok = vec![0, text.len()];
    let mut depth = false;
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'<' && tag_starts(text, i) {
            let end = i + text[i..].find('>').unwrap() + 1;
            let name = &text[i + 1..end - 1];
            if SignalKind::from_open_name(name).is_some_and(SignalKind::is_paired) {
                depth = true;
            } else if SignalKind::from_close_name(name).is_some() {
                depth = false;
            }
            if !depth {
                ok.push(end);
            }
            i = end;
            continue;
        }
        if !depth && text.is_char_boundary(i) {
            ok.push(i);
        }
        i += 1;
    }
    *ok.choose(rng).unwrap()
}
