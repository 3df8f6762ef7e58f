use std::collections::BTreeSet;
use std::ops::Range;

use serde::Serialize;

use super::lexer::{lex, LexItem};
use super::{
    EditRoles, FrameCount, FrameIndex, GrammarError, Resolution, SignalKind, SignalToken,
};

/// Strict parsing fails on the first malformed span. Lenient parsing drops
/// malformed spans and reports each one as a warning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    #[default]
    Strict,
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParseWarning {
    pub code: &'static str,
    pub message: String,
    pub span: Range<usize>,
}

impl From<GrammarError> for ParseWarning {
    fn from(err: GrammarError) -> Self {
        let span = match &err {
            GrammarError::UnknownToken { span, .. }
            | GrammarError::PayloadArity { span, .. }
            | GrammarError::PayloadDomain { span, .. }
            | GrammarError::DuplicateToken { span, .. }
            | GrammarError::UnterminatedToken { span, .. }
            | GrammarError::UnmatchedClose { span, .. } => span.clone(),
            GrammarError::InvariantViolation(_) => 0..0,
        };
        ParseWarning { code: err.code(), message: err.to_string(), span }
    }
}

/// Stage-one output split into its residual prompt and signal tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParsedOutput {
    pub prompt_text: String,
    pub tokens: Vec<SignalToken>,
    /// Byte range of each token in the parsed source, parallel to `tokens`.
    pub spans: Vec<Range<usize>>,
}

impl ParsedOutput {
    /// Builds an output with no source spans, e.g. for serialization.
    pub fn new(prompt_text: impl Into<String>, tokens: Vec<SignalToken>) -> Self {
        Self { prompt_text: prompt_text.into(), tokens, spans: Vec::new() }
    }

    pub fn token(&self, kind: SignalKind) -> Option<&SignalToken> {
        self.tokens.iter().find(|t| t.kind() == kind)
    }

    pub fn contains(&self, kind: SignalKind) -> bool {
        self.token(kind).is_some()
    }

    pub fn kinds(&self) -> BTreeSet<SignalKind> {
        self.tokens.iter().map(SignalToken::kind).collect()
    }

    pub fn resolution(&self) -> Option<Resolution> {
        self.tokens.iter().find_map(|t| match t {
            SignalToken::Resolution(r) => Some(*r),
            _ => None,
        })
    }

    pub fn frame_count(&self) -> Option<FrameCount> {
        self.tokens.iter().find_map(|t| match t {
            SignalToken::FrameCount(n) => Some(*n),
            _ => None,
        })
    }

    pub fn frame_index(&self) -> Option<FrameIndex> {
        self.tokens.iter().find_map(|t| match t {
            SignalToken::FrameIndex(i) => Some(*i),
            _ => None,
        })
    }

    pub fn edit_roles(&self) -> Option<EditRoles> {
        self.tokens.iter().find_map(|t| match t {
            SignalToken::EditRoles(e) => Some(*e),
            _ => None,
        })
    }

    /// Canonical form: normalized prompt, tokens in kind order, spans as laid
    /// out by [`serialize`].
    pub fn canonical(&self) -> Result<ParsedOutput, GrammarError> {
        render(self).map(|(_, canonical)| canonical)
    }
}

/// Strict parse.
pub fn parse(text: &str) -> Result<ParsedOutput, GrammarError> {
    parse_with(text, ParseMode::Strict).map(|(out, _)| out)
}

pub fn parse_with(
    text: &str,
    mode: ParseMode,
) -> Result<(ParsedOutput, Vec<ParseWarning>), GrammarError> {
    let items = lex(text);
    let mut warnings = Vec::new();
    let mut fail = |err: GrammarError| -> Result<(), GrammarError> {
        match mode {
            ParseMode::Strict => Err(err),
            ParseMode::Lenient => {
                warnings.push(ParseWarning::from(err));
                Ok(())
            }
        }
    };

    let mut prompt = String::new();
    let mut tokens: Vec<SignalToken> = Vec::new();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < items.len() {
        let lexeme = &items[i];
        i += 1;
        match lexeme.item {
            LexItem::Text(s) | LexItem::PayloadText(s) => prompt.push_str(s),
            LexItem::Pad => prompt.push_str(lexeme.surface),
            LexItem::Unknown(name) => {
                prompt.push(' ');
                fail(GrammarError::UnknownToken {
                    name: name.to_string(),
                    span: lexeme.span.clone(),
                })?;
            }
            LexItem::TokenClose(kind) => {
                prompt.push(' ');
                fail(GrammarError::UnmatchedClose { kind, span: lexeme.span.clone() })?;
            }
            LexItem::TokenOpen(kind) => {
                prompt.push(' ');
                let (token, span) = if kind.is_paired() {
                    let mut j = i;
                    let payload = match items.get(j).map(|l| l.item) {
                        Some(LexItem::PayloadText(p)) => {
                            j += 1;
                            p
                        }
                        _ => "",
                    };
                    let closed = matches!(
                        items.get(j).map(|l| l.item),
                        Some(LexItem::TokenClose(k)) if k == kind
                    );
                    if !closed {
                        // the opener alone is dropped; its payload falls back to text
                        fail(GrammarError::UnterminatedToken { kind, span: lexeme.span.clone() })?;
                        continue;
                    }
                    let span = lexeme.span.start..items[j].span.end;
                    i = j + 1;
                    match parse_payload(kind, payload, span.clone()) {
                        Ok(token) => (token, span),
                        Err(err) => {
                            fail(err)?;
                            continue;
                        }
                    }
                } else {
                    (flag(kind), lexeme.span.clone())
                };
                if tokens.iter().any(|t| t.kind() == kind) {
                    fail(GrammarError::DuplicateToken { kind, span })?;
                    continue;
                }
                tokens.push(token);
                spans.push(span);
            }
        }
    }

    let prompt_text = normalize_ws(&prompt);
    Ok((ParsedOutput { prompt_text, tokens, spans }, warnings))
}

fn flag(kind: SignalKind) -> SignalToken {
    match kind {
        SignalKind::Cfi => SignalToken::ImageGeneration,
        SignalKind::Cfv => SignalToken::VideoGeneration,
        SignalKind::Ctrl => SignalToken::Control,
        SignalKind::Ref => SignalToken::Reference,
        _ => unreachable!("{kind} is paired"),
    }
}

fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

enum IntField {
    NotInteger,
    OutOfRange,
    Value(u32),
}

fn int_field(s: &str) -> IntField {
    let digits = s.strip_prefix(['+', '-']).unwrap_or(s);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return IntField::NotInteger;
    }
    match s.parse::<i64>() {
        Ok(v) if v >= 1 && v <= u32::MAX as i64 => IntField::Value(v as u32),
        _ => IntField::OutOfRange,
    }
}

fn parse_ints<const N: usize>(
    kind: SignalKind,
    payload: &str,
    span: &Range<usize>,
) -> Result<[u32; N], GrammarError> {
    let parts: Vec<&str> = payload.split(',').map(str::trim).collect();
    let arity = |detail: String| GrammarError::PayloadArity { kind, span: span.clone(), detail };
    if parts.len() != N {
        return Err(arity(format!("expected {N} comma-separated integers, got {payload:?}")));
    }
    let mut out = [0u32; N];
    for (slot, part) in out.iter_mut().zip(&parts) {
        *slot = match int_field(part) {
            IntField::Value(v) => v,
            IntField::NotInteger => return Err(arity(format!("{part:?} is not an integer"))),
            IntField::OutOfRange => {
                return Err(GrammarError::PayloadDomain {
                    kind,
                    span: span.clone(),
                    detail: format!("{part} is not a positive 32-bit integer"),
                })
            }
        };
    }
    Ok(out)
}

fn parse_payload(
    kind: SignalKind,
    payload: &str,
    span: Range<usize>,
) -> Result<SignalToken, GrammarError> {
    let token = match kind {
        SignalKind::Bores => {
            let [width, height] = parse_ints::<2>(kind, payload, &span)?;
            SignalToken::Resolution(Resolution { width, height })
        }
        SignalKind::Bonf => {
            let [n] = parse_ints::<1>(kind, payload, &span)?;
            SignalToken::FrameCount(FrameCount(n))
        }
        SignalKind::Bofidx => {
            let value = payload.trim();
            if value.is_empty() {
                return Err(GrammarError::PayloadArity {
                    kind,
                    span,
                    detail: "empty frame index".into(),
                });
            }
            match value.to_ascii_lowercase().as_str() {
                "first" => SignalToken::FrameIndex(FrameIndex::First),
                "last" => SignalToken::FrameIndex(FrameIndex::Last),
                _ => {
                    return Err(GrammarError::PayloadDomain {
                        kind,
                        span,
                        detail: format!("{value:?} is not first or last"),
                    })
                }
            }
        }
        SignalKind::Boedit => {
            let [mask_id, source_id] = parse_ints::<2>(kind, payload, &span)?;
            SignalToken::EditRoles(EditRoles { mask_id, source_id })
        }
        _ => unreachable!("{kind} is a flag"),
    };
    token
        .check_domain()
        .map_err(|detail| GrammarError::PayloadDomain { kind, span, detail })?;
    Ok(token)
}

/// Canonical text: prompt first, then tokens in kind order with no spaces
/// between them and no spaces inside payloads.
pub fn serialize(parsed: &ParsedOutput) -> Result<String, GrammarError> {
    render(parsed).map(|(text, _)| text)
}

fn render(parsed: &ParsedOutput) -> Result<(String, ParsedOutput), GrammarError> {
    let prompt = normalize_ws(&parsed.prompt_text);
    if let Some(l) = lex(&prompt).iter().find(|l| !matches!(l.item, LexItem::Text(_) | LexItem::Pad))
    {
        return Err(GrammarError::InvariantViolation(format!(
            "prompt text contains tag {:?}",
            l.surface
        )));
    }
    let mut tokens = parsed.tokens.clone();
    tokens.sort_by_key(SignalToken::kind);
    for pair in tokens.windows(2) {
        if pair[0].kind() == pair[1].kind() {
            return Err(GrammarError::InvariantViolation(format!(
                "duplicate {} token",
                pair[0].kind()
            )));
        }
    }
    for t in &tokens {
        t.check_domain().map_err(GrammarError::InvariantViolation)?;
    }

    let mut text = prompt.clone();
    if !text.is_empty() && !tokens.is_empty() {
        text.push(' ');
    }
    let mut spans = Vec::with_capacity(tokens.len());
    for t in &tokens {
        let start = text.len();
        text.push_str(&t.to_string());
        spans.push(start..text.len());
    }
    Ok((text, ParsedOutput { prompt_text: prompt, tokens, spans }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prompt_and_tokens() {
        let out = parse("A cat. <CFV><BORES>1920,1080<EORES>").unwrap();
        assert_eq!(out.prompt_text, "A cat.");
        assert_eq!(
            out.tokens,
            vec![SignalToken::VideoGeneration, SignalToken::Resolution(Resolution::new(1920, 1080))]
        );
        assert_eq!(out.spans, vec![7..12, 12..35]);
    }

    #[test]
    fn resolution_needs_two_values() {
        let err = parse("<BORES>1280<EORES>").unwrap_err();
        assert_eq!(err.code(), "PayloadArity");
    }

    #[test]
    fn edit_roles_then_prompt() {
        let out = parse("<BOEDIT>1,2<EOEDIT><CFI>Remove the hat").unwrap();
        assert_eq!(
            out.tokens,
            vec![
                SignalToken::EditRoles(EditRoles { mask_id: 1, source_id: 2 }),
                SignalToken::ImageGeneration
            ]
        );
        assert_eq!(out.prompt_text, "Remove the hat");
    }

    #[test]
    fn payload_whitespace_is_tolerated() {
        let out = parse("<BORES> 1920 , 1080 <EORES>").unwrap();
        assert_eq!(out.resolution(), Some(Resolution::new(1920, 1080)));
    }

    #[test]
    fn frame_index_is_case_insensitive() {
        assert_eq!(parse("<BOFIDX>LAST<EOFIDX>").unwrap().frame_index(), Some(FrameIndex::Last));
        assert_eq!(parse("<BOFIDX>first<EOFIDX>").unwrap().frame_index(), Some(FrameIndex::First));
        assert_eq!(parse("<BOFIDX>middle<EOFIDX>").unwrap_err().code(), "PayloadDomain");
        assert_eq!(parse("<BOFIDX> <EOFIDX>").unwrap_err().code(), "PayloadArity");
    }

    #[test]
    fn error_classes() {
        let cases = [
            ("<BORES>0,720<EORES>", "PayloadDomain"),
            ("<BORES>-4,720<EORES>", "PayloadDomain"),
            ("<BORES>99999999999,720<EORES>", "PayloadDomain"),
            ("<BORES>a,720<EORES>", "PayloadArity"),
            ("<BORES><EORES>", "PayloadArity"),
            ("<BONF>81,2<EONF>", "PayloadArity"),
            ("<BONF>0<EONF>", "PayloadDomain"),
            ("<BOEDIT>1<EOEDIT>", "PayloadArity"),
            ("<BOEDIT>2,2<EOEDIT>", "PayloadDomain"),
            ("<CFI><CFI>", "DuplicateToken"),
            ("<BONF>81<EONF><BONF>17<EONF>", "DuplicateToken"),
            ("<BONF>81", "UnterminatedToken"),
            ("<BONF>81<EORES>", "UnterminatedToken"),
            ("<BORES>1920<CFI>1080<EORES>", "UnterminatedToken"),
            ("x <EONF>", "UnmatchedClose"),
            ("<CFI><WAT>", "UnknownToken"),
        ];
        for (text, code) in cases {
            assert_eq!(parse(text).unwrap_err().code(), code, "{text}");
        }
    }

    #[test]
    fn lenient_mode_collects_warnings() {
        let (out, warnings) =
            parse_with("a <CFI><CFI> b <BONF>x<EONF> <XYZ> <BORES>640,480", ParseMode::Lenient)
                .unwrap();
        assert_eq!(out.tokens, vec![SignalToken::ImageGeneration]);
        let codes: Vec<_> = warnings.iter().map(|w| w.code).collect();
        assert_eq!(codes, vec!["DuplicateToken", "PayloadArity", "UnknownToken", "UnterminatedToken"]);
        assert_eq!(out.prompt_text, "a b 640,480");
    }

    #[test]
    fn serialize_canonical_forms() {
        let p = ParsedOutput::new("A dog", vec![SignalToken::ImageGeneration]);
        assert_eq!(serialize(&p).unwrap(), "A dog <CFI>");
        let p = ParsedOutput::new(
            "",
            vec![SignalToken::FrameCount(FrameCount(81)), SignalToken::VideoGeneration],
        );
        assert_eq!(serialize(&p).unwrap(), "<CFV><BONF>81<EONF>");
    }

    #[test]
    fn serialize_rejects_invalid_plans() {
        let dup = ParsedOutput::new("", vec![SignalToken::Control, SignalToken::Control]);
        assert_eq!(serialize(&dup).unwrap_err().code(), "InvariantViolation");
        let same = ParsedOutput::new(
            "",
            vec![SignalToken::EditRoles(EditRoles { mask_id: 1, source_id: 1 })],
        );
        assert_eq!(serialize(&same).unwrap_err().code(), "InvariantViolation");
        let tag_in_prompt = ParsedOutput::new("a <CFI> b", vec![]);
        assert_eq!(serialize(&tag_in_prompt).unwrap_err().code(), "InvariantViolation");
    }

    #[test]
    fn pad_marker_stays_in_prompt() {
        let out = parse("This is the mask <PAD> and the source <PAD>. <CFI>").unwrap();
        assert_eq!(out.prompt_text, "This is the mask <PAD> and the source <PAD>.");
        assert_eq!(parse(&serialize(&out).unwrap()).unwrap(), out.canonical().unwrap());
    }
}
