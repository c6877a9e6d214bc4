//! Model inputs for (mutant, test) pairs.
//!
//! The code part of every sequence is the enclosing function only; the test
//! part is the whole test block. Three representations are supported:
//!
//! * token diff: `<CLS> … a <BEFORE> == <AFTER> != <ENDDIFF> b … <SEP> test`
//! * line diff: the whole original line after `<BEFORE>`, the whole mutated
//!   line after `<AFTER>`
//! * no diff: two plain `<CLS> code <SEP> test` sequences, one for the original
//!   method and one for the mutated method
//!
//! Sequences longer than the window keep their prefix and are flagged as
//! truncated.

use std::collections::HashMap;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::groundtruth::Verdict;
use crate::minilang::{lex_lenient, Span};
use crate::mutation::Mutant;

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const CLS: u32 = 2;
pub const SEP: u32 = 3;
pub const BEFORE: u32 = 4;
pub const AFTER: u32 = 5;
pub const ENDDIFF: u32 = 6;

pub const RESERVED_TOKENS: [&str; 7] = ["<PAD>", "<UNK>", "<CLS>", "<SEP>", "<BEFORE>", "<AFTER>", "<ENDDIFF>"];

/// Identifiers longer than this are split into sub-tokens.
pub const SPLIT_THRESHOLD: usize = 16;
pub const DEFAULT_WINDOW: usize = 256;
pub const MAX_WINDOW: usize = 1024;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EncodeError {
    #[error("mutant {id}: span {start}..{end} lies outside the method ({method_start}..{method_end})")]
    SpanOutsideMethod { id: String, start: usize, end: usize, method_start: usize, method_end: usize },
    #[error("vocabulary max_size must exceed the 7 reserved tokens, got {0}")]
    VocabTooSmall(usize),
    #[error("window must be in 1..={MAX_WINDOW}, got {0}")]
    BadWindow(usize),
    #[error("example is not a diff encoding")]
    NotADiff,
    #[error("token id {0} is outside the vocabulary")]
    UnknownId(u32),
    #[error("invalid vocabulary file: {0}")]
    BadVocab(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpannedToken {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

/// MiniLang lexical tokens with long identifiers split.
pub fn tokenize(text: &str) -> Vec<String> {
    tokenize_with(text, SPLIT_THRESHOLD)
}

/// As [`tokenize`] with an explicit split threshold; `0` splits every identifier.
pub fn tokenize_with(text: &str, split_over: usize) -> Vec<String> {
    tokenize_spanned(text, split_over).into_iter().map(|t| t.text).collect()
}

/// Tokens with byte ranges; sub-tokens share their identifier's range.
pub fn tokenize_spanned(text: &str, split_over: usize) -> Vec<SpannedToken> {
    let mut out = Vec::new();
    for tok in lex_lenient(text) {
        let surface = tok.text();
        let is_ident = matches!(tok.kind, crate::minilang::TokenKind::Ident(_));
        if is_ident && surface.chars().count() > split_over {
            let parts = split_identifier(&surface);
            if !parts.is_empty() {
                out.extend(parts.into_iter().map(|p| SpannedToken { text: p, start: tok.start, end: tok.end }));
                continue;
            }
        }
        out.push(SpannedToken { text: surface, start: tok.start, end: tok.end });
    }
    out
}

/// Splits on `_` and camelCase boundaries: `parseHTTPHeader_v2` →
/// `parse`, `HTTP`, `Header`, `v2`.
pub fn split_identifier(ident: &str) -> Vec<String> {
    let mut parts = Vec::new();
    for chunk in ident.split('_').filter(|c| !c.is_empty()) {
        let chars: Vec<char> = chunk.chars().collect();
        let mut cur = String::new();
        for (i, &c) in chars.iter().enumerate() {
            if i > 0 && c.is_ascii_uppercase() {
                let prev = chars[i - 1];
                let next_lower = chars.get(i + 1).is_some_and(|n| n.is_ascii_lowercase());
                if prev.is_ascii_lowercase() || prev.is_ascii_digit() || (prev.is_ascii_uppercase() && next_lower) {
                    parts.push(std::mem::take(&mut cur));
                }
            }
            cur.push(c);
        }
        if !cur.is_empty() {
            parts.push(cur);
        }
    }
    parts
}

/// Token ↔ id map with the reserved markers at fixed ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Reserved tokens followed by the most frequent corpus tokens, ties
    /// broken lexicographically, up to `max_size` entries.
    pub fn build<S: AsRef<str>>(corpus: &[Vec<S>], max_size: usize) -> Result<Vocabulary, EncodeError> {
        if max_size <= RESERVED_TOKENS.len() {
            return Err(EncodeError::VocabTooSmall(max_size));
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for seq in corpus {
            for t in seq {
                let t = t.as_ref();
                if !RESERVED_TOKENS.contains(&t) {
                    *counts.entry(t).or_default() += 1;
                }
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let tokens = RESERVED_TOKENS
            .iter()
            .map(|s| s.to_string())
            .chain(ranked.into_iter().take(max_size - RESERVED_TOKENS.len()).map(|(t, _)| t.to_string()))
            .collect();
        Ok(Self::from_tokens(tokens))
    }

    fn from_tokens(tokens: Vec<String>) -> Vocabulary {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Vocabulary { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn ids<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Content hash of the id assignment.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update([0u8]);
        }
        hex::encode(&h.finalize()[..16])
    }

    /// `vocab.json`: `{token: id}` in id order.
    pub fn to_json(&self) -> String {
        let map: IndexMap<&str, u32> = self.tokens.iter().enumerate().map(|(i, t)| (t.as_str(), i as u32)).collect();
        serde_json::to_string_pretty(&map).expect("vocab serializes")
    }

    pub fn from_json(text: &str) -> Result<Vocabulary, EncodeError> {
        let map: IndexMap<String, u32> = serde_json::from_str(text).map_err(|e| EncodeError::BadVocab(e.to_string()))?;
        let mut tokens = vec![None; map.len()];
        for (t, id) in map {
            let slot = tokens
                .get_mut(id as usize)
                .ok_or_else(|| EncodeError::BadVocab(format!("id {id} is not dense")))?;
            if slot.replace(t).is_some() {
                return Err(EncodeError::BadVocab(format!("id {id} assigned twice")));
            }
        }
        let tokens: Vec<String> = tokens
            .into_iter()
            .collect::<Option<_>>()
            .ok_or_else(|| EncodeError::BadVocab("ids are not dense".into()))?;
        if tokens.len() < RESERVED_TOKENS.len() || tokens[..RESERVED_TOKENS.len()] != RESERVED_TOKENS {
            return Err(EncodeError::BadVocab("reserved tokens missing or misplaced".into()));
        }
        Ok(Self::from_tokens(tokens))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    TokenDiff,
    LineDiff,
    NoDiff,
}

impl Representation {
    pub fn name(self) -> &'static str {
        match self {
            Representation::TokenDiff => "token_diff",
            Representation::LineDiff => "line_diff",
            Representation::NoDiff => "no_diff",
        }
    }
}

impl std::str::FromStr for Representation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "token-diff" | "token_diff" => Ok(Representation::TokenDiff),
            "line-diff" | "line_diff" => Ok(Representation::LineDiff),
            "no-diff" | "no_diff" => Ok(Representation::NoDiff),
            other => Err(format!("unknown representation `{other}` (expected token-diff, line-diff or no-diff)")),
        }
    }
}

/// Which half of a no-diff pair an example is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodeVersion {
    Original,
    Mutated,
}

/// Inputs of the name/line feature baseline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureInputs {
    pub method_name: Vec<u32>,
    pub test_name: Vec<u32>,
    pub before_line: Vec<u32>,
    pub after_line: Vec<u32>,
    pub operator: usize,
    pub sub_operator: usize,
}

/// One line of `dataset.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedExample {
    pub mutant_id: String,
    pub test_id: String,
    #[serde(default)]
    pub project: String,
    pub representation: Representation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<CodeVersion>,
    pub ids: Vec<u32>,
    pub label: Option<Verdict>,
    pub truncated: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<FeatureInputs>,
}

impl EncodedExample {
    pub fn is_detected(&self) -> Option<bool> {
        self.label.map(Verdict::is_detected)
    }
}

/// Source text of the function enclosing a mutant, with its byte offset in
/// the file the mutant's span refers to.
#[derive(Debug, Clone, Copy)]
pub struct MethodSource<'a> {
    pub text: &'a str,
    pub offset: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct TestSource<'a> {
    pub id: &'a str,
    pub text: &'a str,
}

impl<'a> MethodSource<'a> {
    fn local_span(&self, mutant: &Mutant) -> Result<Span, EncodeError> {
        let end = self.offset + self.text.len();
        if mutant.span.start < self.offset || mutant.span.end > end || self.text.get(mutant.span.start - self.offset..mutant.span.end - self.offset).is_none() {
            return Err(EncodeError::SpanOutsideMethod {
                id: mutant.id.clone(),
                start: mutant.span.start,
                end: mutant.span.end,
                method_start: self.offset,
                method_end: end,
            });
        }
        Ok(Span::new(mutant.span.start - self.offset, mutant.span.end - self.offset))
    }
}

fn finish(
    mut ids: Vec<u32>,
    window: usize,
    mutant: &Mutant,
    test: TestSource,
    representation: Representation,
    version: Option<CodeVersion>,
) -> EncodedExample {
    let truncated = ids.len() > window;
    ids.truncate(window);
    EncodedExample {
        mutant_id: mutant.id.clone(),
        test_id: test.id.to_string(),
        project: mutant.project.clone(),
        representation,
        version,
        ids,
        label: None,
        truncated,
        features: None,
    }
}

fn check_window(window: usize) -> Result<(), EncodeError> {
    if window == 0 || window > MAX_WINDOW {
        return Err(EncodeError::BadWindow(window));
    }
    Ok(())
}

/// Splits `text` into the tokens fully before `span`, inside it, and after it.
fn tokens_around(text: &str, span: Span) -> (Vec<String>, Vec<String>, Vec<String>) {
    let (mut pre, mut mid, mut post) = (Vec::new(), Vec::new(), Vec::new());
    for t in tokenize_spanned(text, SPLIT_THRESHOLD) {
        if t.end <= span.start {
            pre.push(t.text);
        } else if t.start >= span.end {
            post.push(t.text);
        } else {
            mid.push(t.text);
        }
    }
    (pre, mid, post)
}

fn diff_sequence(vocab: &Vocabulary, pre: &[String], before: &[String], after: &[String], post: &[String], test: &str) -> Vec<u32> {
    let mut ids = vec![CLS];
    ids.extend(vocab.ids(pre));
    ids.push(BEFORE);
    ids.extend(vocab.ids(before));
    ids.push(AFTER);
    ids.extend(vocab.ids(after));
    ids.push(ENDDIFF);
    ids.extend(vocab.ids(post));
    ids.push(SEP);
    ids.extend(vocab.ids(&tokenize(test)));
    ids
}

/// Token-level diff: markers wrap exactly the mutated tokens.
pub fn encode_token_diff(
    method: MethodSource,
    mutant: &Mutant,
    test: TestSource,
    vocab: &Vocabulary,
    window: usize,
) -> Result<EncodedExample, EncodeError> {
    check_window(window)?;
    let span = method.local_span(mutant)?;
    let (pre, before, post) = tokens_around(method.text, span);
    let after = tokenize(&mutant.after_text);
    let ids = diff_sequence(vocab, &pre, &before, &after, &post, test.text);
    Ok(finish(ids, window, mutant, test, Representation::TokenDiff, None))
}

/// Byte range of the full line(s) holding `span`, clipped to `text`.
fn line_range(text: &str, span: Span) -> Span {
    let start = text[..span.start].rfind('\n').map(|i| i + 1).unwrap_or(0);
    let end = text[span.end..].find('\n').map(|i| span.end + i).unwrap_or(text.len());
    Span::new(start, end)
}

fn mutated_text(text: &str, span: Span, replacement: &str) -> String {
    format!("{}{}{}", &text[..span.start], replacement, &text[span.end..])
}

/// The original and mutated text of the mutated line(s).
pub fn mutated_lines(method: MethodSource, mutant: &Mutant) -> Result<(String, String), EncodeError> {
    let span = method.local_span(mutant)?;
    let lines = line_range(method.text, span);
    let original = &method.text[lines.start..lines.end];
    let rel = Span::new(span.start - lines.start, span.end - lines.start);
    Ok((original.to_string(), mutated_text(original, rel, &mutant.after_text)))
}

/// Line-level diff: markers wrap the whole original and mutated line.
pub fn encode_line_diff(
    method: MethodSource,
    mutant: &Mutant,
    test: TestSource,
    vocab: &Vocabulary,
    window: usize,
) -> Result<EncodedExample, EncodeError> {
    check_window(window)?;
    let span = method.local_span(mutant)?;
    let lines = line_range(method.text, span);
    let (pre, before, post) = tokens_around(method.text, lines);
    let (_, mutated_line) = mutated_lines(method, mutant)?;
    let after = tokenize(&mutated_line);
    let ids = diff_sequence(vocab, &pre, &before, &after, &post, test.text);
    Ok(finish(ids, window, mutant, test, Representation::LineDiff, None))
}

/// No diff: `(original, mutated)`. The original's label is always undetected.
pub fn encode_no_diff(
    method: MethodSource,
    mutant: &Mutant,
    test: TestSource,
    vocab: &Vocabulary,
    window: usize,
) -> Result<(EncodedExample, EncodedExample), EncodeError> {
    check_window(window)?;
    let span = method.local_span(mutant)?;
    let test_ids = vocab.ids(&tokenize(test.text));
    let plain = |code: &str| {
        let mut ids = vec![CLS];
        ids.extend(vocab.ids(&tokenize(code)));
        ids.push(SEP);
        ids.extend(&test_ids);
        ids
    };
    let mut original = finish(plain(method.text), window, mutant, test, Representation::NoDiff, Some(CodeVersion::Original));
    original.label = Some(Verdict::Undetected);
    let mutated_code = mutated_text(method.text, span, &mutant.after_text);
    let mutated = finish(plain(&mutated_code), window, mutant, test, Representation::NoDiff, Some(CodeVersion::Mutated));
    Ok((original, mutated))
}

/// Baseline inputs: name sub-tokens (always split), mutated line before and
/// after, and operator codes. `test_name` is the bare test name.
pub fn feature_inputs(method: MethodSource, mutant: &Mutant, test_name: &str, vocab: &Vocabulary) -> Result<FeatureInputs, EncodeError> {
    let (before, after) = mutated_lines(method, mutant)?;
    Ok(FeatureInputs {
        method_name: vocab.ids(&tokenize_with(&mutant.function, 0)),
        test_name: vocab.ids(&tokenize_with(test_name, 0)),
        before_line: vocab.ids(&tokenize(&before)),
        after_line: vocab.ids(&tokenize(&after)),
        operator: mutant.operator.kind.index(),
        sub_operator: mutant.operator.sub_operator_id(),
    })
}

/// Token streams recovered from a diff encoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoded {
    /// Code part with the `<AFTER>` side dropped.
    pub original: Vec<String>,
    /// Code part with the `<BEFORE>` side dropped.
    pub mutated: Vec<String>,
    pub test: Vec<String>,
}

impl Decoded {
    pub fn to_text(&self) -> String {
        format!("{}\n<SEP>\n{}", self.mutated.join(" "), self.test.join(" "))
    }
}

/// Inverts a token- or line-diff encoding.
pub fn decode(example: &EncodedExample, vocab: &Vocabulary) -> Result<Decoded, EncodeError> {
    if example.representation == Representation::NoDiff {
        return Err(EncodeError::NotADiff);
    }
    #[derive(PartialEq)]
    enum Zone {
        Common,
        Before,
        After,
        Test,
    }
    let mut zone = Zone::Common;
    let mut out = Decoded { original: Vec::new(), mutated: Vec::new(), test: Vec::new() };
    let mut saw_triple = false;
    for &id in example.ids.iter().skip(1) {
        match id {
            BEFORE => zone = Zone::Before,
            AFTER => zone = Zone::After,
            ENDDIFF => {
                zone = Zone::Common;
                saw_triple = true;
            }
            SEP if zone == Zone::Common => zone = Zone::Test,
            _ => {
                let tok = vocab.token(id).ok_or(EncodeError::UnknownId(id))?.to_string();
                match zone {
                    Zone::Common => {
                        out.original.push(tok.clone());
                        out.mutated.push(tok);
                    }
                    Zone::Before => out.original.push(tok),
                    Zone::After => out.mutated.push(tok),
                    Zone::Test => out.test.push(tok),
                }
            }
        }
    }
    if !saw_triple && !example.truncated {
        return Err(EncodeError::NotADiff);
    }
    Ok(out)
}

/// Checks `<CLS> t* <BEFORE> t+ <AFTER> t+ <ENDDIFF> t* <SEP> t*` on an
/// untruncated sequence.
pub fn has_marker_grammar(ids: &[u32]) -> bool {
    let markers = [CLS, SEP, BEFORE, AFTER, ENDDIFF];
    if ids.first() != Some(&CLS) {
        return false;
    }
    let pos = |m: u32| -> Option<usize> {
        let mut it = ids.iter().enumerate().filter(|(_, &x)| x == m);
        let first = it.next()?.0;
        it.next().is_none().then_some(first)
    };
    let (Some(b), Some(a), Some(e), Some(s)) = (pos(BEFORE), pos(AFTER), pos(ENDDIFF), pos(SEP)) else {
        return false;
    };
    if ids[1..].contains(&CLS) {
        return false;
    }
    let non_marker = |r: std::ops::Range<usize>| ids[r].iter().all(|x| !markers.contains(x));
    b < a && a < e && e < s && a - b > 1 && e - a > 1 && non_marker(1..b) && non_marker(e + 1..s) && non_marker(s + 1..ids.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minilang::parse;
    use crate::mutation::generate_mutants;

    fn method_of<'a>(program: &'a crate::minilang::Program, m: &Mutant) -> MethodSource<'a> {
        let f = program.function(&m.function).unwrap();
        MethodSource { text: program.slice(f.span), offset: f.span.start }
    }

    fn vocab_for(texts: &[&str]) -> Vocabulary {
        let ops = "! ( ) true false == != < <= > >= + - * / % && ||";
        let corpus: Vec<Vec<String>> = texts.iter().chain([&ops]).map(|t| tokenize(t)).collect();
        Vocabulary::build(&corpus, 2048).unwrap()
    }

    fn render(ids: &[u32], v: &Vocabulary) -> String {
        ids.iter().map(|&i| v.token(i).unwrap()).collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn tokenizer_rules() {
        assert_eq!(tokenize("a+1"), ["a", "+", "1"]);
        assert_eq!(tokenize("testNextHour"), ["testNextHour"]);
        assert_eq!(tokenize_with("testNextHour", 0), ["test", "Next", "Hour"]);
        assert_eq!(tokenize("countPositiveValuesInArray"), ["count", "Positive", "Values", "In", "Array"]);
        assert_eq!(split_identifier("parseHTTPHeader_v2"), ["parse", "HTTP", "Header", "v2"]);
        assert_eq!(tokenize("LAST_HOUR_IN_DAY"), ["LAST_HOUR_IN_DAY"]);
        assert_eq!(tokenize("a $ b"), ["a", "$", "b"]);
    }

    #[test]
    fn vocab_capacity_and_ties() {
        let empty: Vec<Vec<String>> = vec![];
        assert_eq!(Vocabulary::build(&empty, 10).unwrap().len(), 7);
        let corpus = vec![vec!["b", "a", "c", "c"]];
        let v = Vocabulary::build(&corpus, 10).unwrap();
        assert_eq!(v.len(), 10);
        assert_eq!(&v.tokens()[7..], ["c", "a", "b"]);
        let v8 = Vocabulary::build(&corpus, 8).unwrap();
        assert_eq!(v8.tokens()[7], "c");
        assert_eq!(v8.id("a"), UNK);
        assert!(matches!(Vocabulary::build(&corpus, 7), Err(EncodeError::VocabTooSmall(7))));
    }

    #[test]
    fn vocab_json_round_trip() {
        let v = vocab_for(&["fn f(a){return a+1;}"]);
        let back = Vocabulary::from_json(&v.to_json()).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.hash(), v.hash());
        assert!(Vocabulary::from_json(r#"{"x": 0}"#).is_err());
    }

    #[test]
    fn token_diff_matches_the_marker_layout() {
        let src = "fn f(a, b) {\n  if (a == b) { return 1; }\n  return 0;\n}\ntest t { assert_eq(f(1, 1), 1); }";
        let p = parse(src).unwrap();
        let m = generate_mutants(&p).into_iter().find(|m| m.after == ["!="]).unwrap();
        let v = vocab_for(&[src]);
        let test = TestSource { id: "t", text: p.slice(p.tests[0].span) };
        let ex = encode_token_diff(method_of(&p, &m), &m, test, &v, 256).unwrap();
        let text = render(&ex.ids, &v);
        assert!(text.starts_with("<CLS> fn f ( a , b ) {"));
        assert!(text.contains("if ( a <BEFORE> == <AFTER> != <ENDDIFF> b ) {"), "{text}");
        assert!(text.contains("} <SEP> test t {"));
        assert!(has_marker_grammar(&ex.ids));
        assert!(!ex.truncated);
        assert_eq!(ex.representation, Representation::TokenDiff);
    }

    #[test]
    fn line_diff_wraps_whole_lines() {
        let src = "fn f(a, b) {\n  if (a == b) { return 1; }\n  return 0;\n}\ntest t { assert_eq(f(1, 1), 1); }";
        let p = parse(src).unwrap();
        let m = generate_mutants(&p).into_iter().find(|m| m.after == ["!="]).unwrap();
        let v = vocab_for(&[src]);
        let test = TestSource { id: "t", text: p.slice(p.tests[0].span) };
        let ex = encode_line_diff(method_of(&p, &m), &m, test, &v, 256).unwrap();
        let text = render(&ex.ids, &v);
        assert!(
            text.contains("{ <BEFORE> if ( a == b ) { return 1 ; } <AFTER> if ( a != b ) { return 1 ; } <ENDDIFF> return 0 ;"),
            "{text}"
        );
        assert!(has_marker_grammar(&ex.ids));
    }

    #[test]
    fn single_line_method_line_diff() {
        let src = "fn f(a){return a+1;} test t{assert_eq(f(1),2);}";
        let p = parse(src).unwrap();
        let m = &generate_mutants(&p)[0];
        let v = vocab_for(&[src]);
        let test = TestSource { id: "t", text: p.slice(p.tests[0].span) };
        let ex = encode_line_diff(method_of(&p, m), m, test, &v, 256).unwrap();
        let text = render(&ex.ids, &v);
        assert!(text.starts_with("<CLS> <BEFORE> fn f ( a ) { return a + 1 ; } <AFTER> fn f ( a ) { return a - 1 ; } <ENDDIFF> <SEP>"), "{text}");
    }

    #[test]
    fn no_diff_pair() {
        let src = "fn f(a, b) {\n  if (a == b) { return 1; }\n  return 0;\n}\ntest t { assert_eq(f(1, 1), 1); }";
        let p = parse(src).unwrap();
        let m = generate_mutants(&p).into_iter().find(|m| m.after == ["!="]).unwrap();
        let v = vocab_for(&[src]);
        let test = TestSource { id: "t", text: p.slice(p.tests[0].span) };
        let (orig, mutated) = encode_no_diff(method_of(&p, &m), &m, test, &v, 256).unwrap();
        assert!(render(&orig.ids, &v).contains("if ( a == b )"));
        assert!(render(&mutated.ids, &v).contains("if ( a != b )"));
        assert_eq!(orig.label, Some(Verdict::Undetected));
        assert_eq!(mutated.label, None);
        assert_eq!(orig.version, Some(CodeVersion::Original));
        assert!(![BEFORE, AFTER, ENDDIFF].iter().any(|x| mutated.ids.contains(x)));
        assert_eq!(mutated.ids.iter().filter(|&&x| x == SEP).count(), 1);
    }

    #[test]
    fn truncation_keeps_the_prefix() {
        let src = "fn f(a){return a+1;} test t{assert_eq(f(1),2);}";
        let p = parse(src).unwrap();
        let m = &generate_mutants(&p)[0];
        let v = vocab_for(&[src]);
        let test = TestSource { id: "t", text: p.slice(p.tests[0].span) };
        let full = encode_token_diff(method_of(&p, m), m, test, &v, 256).unwrap();
        let cut = encode_token_diff(method_of(&p, m), m, test, &v, 8).unwrap();
        assert!(cut.truncated);
        assert_eq!(cut.ids.len(), 8);
        assert_eq!(cut.ids, full.ids[..8]);
        assert!(matches!(encode_token_diff(method_of(&p, m), m, test, &v, 0), Err(EncodeError::BadWindow(0))));
    }

    #[test]
    fn span_outside_method() {
        let src = "fn f(a){return a+1;} fn g(a){return a*2;} test t{assert_eq(f(1),2);}";
        let p = parse(src).unwrap();
        let ms = generate_mutants(&p);
        let in_g = ms.iter().find(|m| m.function == "g").unwrap();
        let f = p.function("f").unwrap();
        let method = MethodSource { text: p.slice(f.span), offset: f.span.start };
        let v = vocab_for(&[src]);
        let test = TestSource { id: "t", text: "" };
        assert!(matches!(encode_token_diff(method, in_g, test, &v, 64), Err(EncodeError::SpanOutsideMethod { .. })));
    }

    #[test]
    fn decode_round_trips() {
        let src = "fn f(a, b) {\n  while (a < b && b > 0) { a = a + 1; }\n  return a;\n}\ntest t { assert_eq(f(1, 3), 3); }";
        let p = parse(src).unwrap();
        let v = vocab_for(&[src, "! ( ) true false != <= >= > < == - * / % ||"]);
        let test = TestSource { id: "t", text: p.slice(p.tests[0].span) };
        for m in generate_mutants(&p) {
            let method = method_of(&p, &m);
            let mutated_method = mutated_text(method.text, method.local_span(&m).unwrap(), &m.after_text);
            for ex in [
                encode_token_diff(method, &m, test, &v, 256).unwrap(),
                encode_line_diff(method, &m, test, &v, 256).unwrap(),
            ] {
                let d = decode(&ex, &v).unwrap();
                assert_eq!(d.original, tokenize(method.text));
                assert_eq!(d.mutated, tokenize(&mutated_method), "{:?}", m.operator.kind);
                assert_eq!(d.test, tokenize(test.text));
            }
        }
    }

    #[test]
    fn marker_grammar_rejects_malformed() {
        assert!(has_marker_grammar(&[CLS, 9, BEFORE, 10, AFTER, 11, ENDDIFF, SEP, 12]));
        assert!(!has_marker_grammar(&[CLS, BEFORE, AFTER, 11, ENDDIFF, SEP]));
        assert!(!has_marker_grammar(&[CLS, AFTER, 10, BEFORE, 11, ENDDIFF, SEP]));
        assert!(!has_marker_grammar(&[9, BEFORE, 10, AFTER, 11, ENDDIFF, SEP]));
        assert!(!has_marker_grammar(&[CLS, BEFORE, 10, AFTER, 11, ENDDIFF, SEP, SEP]));
    }
}
