use std::ops::Range;

use super::{GrammarError, SignalKind};

/// Surface-level item of protocol text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LexItem<'a> {
    Text(&'a str),
    /// The `<PAD>` attachment marker.
    Pad,
    TokenOpen(SignalKind),
    TokenClose(SignalKind),
    /// Raw text between a paired opener and the next tag.
    PayloadText(&'a str),
    /// A `<[A-Z]+>` sequence outside the alphabet. Never returned by [`tokenize`].
    Unknown(&'a str),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexeme<'a> {
    pub item: LexItem<'a>,
    pub span: Range<usize>,
    pub surface: &'a str,
}

/// Lexes `text` into items whose surfaces concatenate back to `text`.
///
/// Fails on the first tag-shaped sequence that is not part of the alphabet.
pub fn tokenize(text: &str) -> Result<Vec<Lexeme<'_>>, GrammarError> {
    let items = lex(text);
    if let Some(bad) = items.iter().find(|l| matches!(l.item, LexItem::Unknown(_))) {
        let LexItem::Unknown(name) = bad.item else { unreachable!() };
        return Err(GrammarError::UnknownToken { name: name.to_string(), span: bad.span.clone() });
    }
    Ok(items)
}

/// Finds a `<[A-Z]+>` tag starting exactly at byte `at`. Returns the end offset.
fn tag_at(bytes: &[u8], at: usize) -> Option<usize> {
    if bytes.get(at) != Some(&b'<') {
        return None;
    }
    let mut i = at + 1;
    while i < bytes.len() && bytes[i].is_ascii_uppercase() {
        i += 1;
    }
    (i > at + 1 && bytes.get(i) == Some(&b'>')).then_some(i + 1)
}

fn next_tag(bytes: &[u8], from: usize) -> Option<(usize, usize)> {
    let mut i = from;
    while i < bytes.len() {
        if bytes[i] == b'<' {
            if let Some(end) = tag_at(bytes, i) {
                return Some((i, end));
            }
        }
        i += 1;
    }
    None
}

/// Lossless lexing that keeps unknown tags as [`LexItem::Unknown`].
pub(crate) fn lex(text: &str) -> Vec<Lexeme<'_>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut pos = 0;
    let mut in_payload = false;

    while pos < bytes.len() {
        let (start, end) = match next_tag(bytes, pos) {
            Some(t) => t,
            None => (bytes.len(), bytes.len()),
        };
        if start > pos {
            let s = &text[pos..start];
            let item = if in_payload { LexItem::PayloadText(s) } else { LexItem::Text(s) };
            out.push(Lexeme { item, span: pos..start, surface: s });
        }
        if start == bytes.len() {
            break;
        }
        // tag bytes are ASCII so these slices fall on char boundaries
        let name = &text[start + 1..end - 1];
        let item = if name == "PAD" {
            LexItem::Pad
        } else if let Some(kind) = SignalKind::from_open_name(name) {
            LexItem::TokenOpen(kind)
        } else if let Some(kind) = SignalKind::from_close_name(name) {
            LexItem::TokenClose(kind)
        } else {
            LexItem::Unknown(name)
        };
        in_payload = matches!(item, LexItem::TokenOpen(k) if k.is_paired());
        out.push(Lexeme { item, span: start..end, surface: &text[start..end] });
        pos = end;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn items(text: &str) -> Vec<LexItem<'_>> {
        tokenize(text).unwrap().into_iter().map(|l| l.item).collect()
    }

    #[test]
    fn single_flag() {
        assert_eq!(items("<CFI>"), vec![LexItem::TokenOpen(SignalKind::Cfi)]);
    }

    #[test]
    fn plain_text() {
        assert_eq!(items("a cat"), vec![LexItem::Text("a cat")]);
    }

    #[test]
    fn resolution_payload() {
        assert_eq!(
            items("<BORES>1920, 1080<EORES>"),
            vec![
                LexItem::TokenOpen(SignalKind::Bores),
                LexItem::PayloadText("1920, 1080"),
                LexItem::TokenClose(SignalKind::Bores),
            ]
        );
    }

    #[test]
    fn angle_bracket_text_is_not_a_tag() {
        assert_eq!(items("a < b and <c> and <Cfi>"), vec![LexItem::Text("a < b and <c> and <Cfi>")]);
        assert_eq!(items("<<CFV>"), vec![LexItem::Text("<"), LexItem::TokenOpen(SignalKind::Cfv)]);
    }

    #[test]
    fn pad_marker() {
        assert_eq!(
            items("see <PAD>."),
            vec![LexItem::Text("see "), LexItem::Pad, LexItem::Text(".")]
        );
    }

    #[test]
    fn unknown_tag_reports_span() {
        let err = tokenize("abc <XYZ> d").unwrap_err();
        assert_eq!(err, GrammarError::UnknownToken { name: "XYZ".into(), span: 4..9 });
    }

    proptest! {
        #[test]
        fn lexing_is_lossless(text in "(\\PC|<CFI>|<BORES>|<EORES>|<PAD>|<Q>|<)*") {
            let joined: String = lex(&text).iter().map(|l| l.surface).collect();
            prop_assert_eq!(joined, text.clone());
            for l in lex(&text) {
                prop_assert_eq!(&text[l.span.clone()], l.surface);
            }
        }
    }
}
