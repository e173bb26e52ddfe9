//! Negatives cut from long documents with a sliding window of random size.

use std::ops::Range;

use rand::Rng;

use crate::rng;

/// Splits on whitespace and extracts `[[ ... ]]` relevant-span markers.
/// Returns the tokens (markers stripped) and the token ranges of the spans.
pub fn parse_marked(document: &str) -> (Vec<String>, Vec<Range<usize>>) {
    let mut tokens = Vec::new();
    let mut spans = Vec::new();
    let mut open: Option<usize> = None;
    for raw in document.split_whitespace() {
        let mut tok = raw;
        if let Some(rest) = tok.strip_prefix("[[") {
            open.get_or_insert(tokens.len());
            tok = rest;
        }
        let closes = tok.ends_with("]]");
        if closes {
            tok = &tok[..tok.len() - 2];
        }
        if !tok.is_empty() {
            tokens.push(tok.to_string());
        }
        if closes {
            if let Some(start) = open.take() {
                spans.push(start..tokens.len());
            }
        }
    }
    if let Some(start) = open {
        spans.push(start..tokens.len());
    }
    (tokens, spans)
}

/// Non-overlapping windows of uniformly random length in
/// `[min_len, max_len]` that avoid every marked relevant span. Stride equals
/// the current window length. Documents of at most `min_len` tokens yield
/// nothing.
pub fn sliding_window_negatives(document: &str, min_len: usize, max_len: usize, seed: u64) -> Vec<String> {
    let (tokens, spans) = parse_marked(document);
    if min_len == 0 || max_len < min_len || tokens.len() <= min_len {
        return Vec::new();
    }
    let mut r = rng::rng(seed);
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < tokens.len() {
        let len = r.gen_range(min_len..=max_len);
        if pos + len > tokens.len() {
            break;
        }
        let window = pos..pos + len;
        if let Some(span) = spans.iter().find(|s| s.start < window.end && window.start < s.end) {
            pos = span.end;
            continue;
        }
        out.push(tokens[window].join(" "));
        pos += len;
    }
    out
}
