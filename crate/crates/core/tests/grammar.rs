mod common;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use unison::grammar::{parse, parse_with, serialize, tokenize, ParseMode};

#[test]
fn serialize_then_parse_is_canonical() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..2000 {
        let plan = common::random_plan(&mut rng);
        let text = serialize(&plan).unwrap();
        let canonical = plan.canonical().unwrap();
        assert_eq!(parse(&text).unwrap(), canonical, "{text}");
        // canonical text is a fixed point
        assert_eq!(serialize(&canonical).unwrap(), text);
        for (tok, span) in canonical.tokens.iter().zip(&canonical.spans) {
            assert_eq!(&text[span.clone()], tok.to_string());
        }
    }
}

#[test]
fn corrupted_plans_fail_with_their_class() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut seen = BTreeMap::new();
    for i in 0..1200 {
        let class = common::MUTATION_CLASSES[i % common::MUTATION_CLASSES.len()];
        let text = common::mutate(class, &mut rng);
        let err = parse(&text).expect_err(&text);
        assert_eq!(err.code(), class, "{text}");
        *seen.entry(class).or_insert(0) += 1;
        // lenient mode never fails and reports the same problem
        let (_, warnings) = parse_with(&text, ParseMode::Lenient).unwrap();
        assert!(warnings.iter().any(|w| w.code == class), "{text}: {warnings:?}");
    }
    assert_eq!(seen.len(), common::MUTATION_CLASSES.len());
}

#[test]
fn tokenize_rejects_only_unknown_tags() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..300 {
        let text = serialize(&common::random_plan(&mut rng)).unwrap();
        let lexemes = tokenize(&text).unwrap();
        let joined: String = lexemes.iter().map(|l| l.surface).collect();
        assert_eq!(joined, text);
        let bad = common::mutate("UnknownToken", &mut rng);
        assert_eq!(tokenize(&bad).unwrap_err().code(), "UnknownToken");
    }
}
