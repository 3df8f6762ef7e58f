//! Parse stage-one output strings, print their tokens, and show the
//! canonical serialization.
//!
//! cargo run --example parse_tokens -- "A cat. <CFV><BORES>1920, 1080<EORES>"

use unison::grammar::{parse, parse_with, serialize, tokenize, ParseMode};

fn main() {
    let mut inputs: Vec<String> = std::env::args().skip(1).collect();
    if inputs.is_empty() {
        inputs = [
            "A cat. <CFV><BORES>1920, 1080<EORES>",
            "<BOEDIT>1,2<EOEDIT><CFI>Remove the hat",
            "<BORES>1280<EORES>",
            "a fox <CFI><BONF>81",
        ]
        .map(String::from)
        .to_vec();
    }
    for text in &inputs {
        println!("input     {text:?}");
        match tokenize(text) {
            Ok(items) => println!("lexemes   {}", items.len()),
            Err(e) => println!("lexemes   error {}", e.code()),
        }
        match parse(text) {
            Ok(parsed) => {
                println!("prompt    {:?}", parsed.prompt_text);
                for t in &parsed.tokens {
                    println!("token     {:<6} {}", t.kind().open_name(), t.payload_text().unwrap_or_default());
                }
                println!("canonical {}", serialize(&parsed).expect("parsed output serializes"));
            }
            Err(e) => {
                println!("strict    {}: {e}", e.code());
                let (parsed, warnings) = parse_with(text, ParseMode::Lenient).expect("lenient parse");
                println!("lenient   {} token(s), {} warning(s)", parsed.tokens.len(), warnings.len());
            }
        }
        println!();
    }
}
