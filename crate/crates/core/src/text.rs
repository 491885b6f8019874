//! Tokenization and keyword normalization shared by the index, the query
//! expander and keyword extraction.
//!
//! Tokens are Unicode words, case-folded, never stemmed: "instanton" and
//! "instantons" are distinct terms.

use unicode_segmentation::UnicodeSegmentation;

/// Unicode words with their byte offsets. A combining mark after whitespace
/// segments together with the whitespace, which is trimmed off here.
fn words(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.unicode_word_indices().filter_map(|(at, w)| {
        let t = w.trim_start();
        let at = at + w.len() - t.len();
        let t = t.trim_end();
        (!t.is_empty()).then_some((at, t))
    })
}

/// Case-folded Unicode words of `text`.
pub fn tokenize(text: &str) -> Vec<String> {
    words(text).map(|(_, w)| fold(w)).collect()
}

/// Tokens with their byte offsets in `text`.
pub fn tokenize_with_offsets(text: &str) -> Vec<(usize, String)> {
    words(text).map(|(at, w)| (at, fold(w))).collect()
}

/// Tokens with their byte span `[start, end)` in `text`.
pub fn word_spans(text: &str) -> Vec<(usize, usize, String)> {
    words(text).map(|(at, w)| (at, at + w.len(), fold(w))).collect()
}

fn fold(word: &str) -> String {
    word.to_lowercase()
}

/// Canonical keyword text: tokens joined by single spaces.
///
/// Idempotent: `normalize_keyword(&normalize_keyword(k)) == normalize_keyword(k)`.
pub fn normalize_keyword(keyword: &str) -> String {
    tokenize(keyword).join(" ")
}

/// Largest char boundary `<= at`.
pub(crate) fn floor_boundary(s: &str, mut at: usize) -> usize {
    if at >= s.len() {
        return s.len();
    }
    while !s.is_char_boundary(at) {
        at -= 1;
    }
    at
}

/// Smallest char boundary `>= at`.
pub(crate) fn ceil_boundary(s: &str, mut at: usize) -> usize {
    if at >= s.len() {
        return s.len();
    }
    while !s.is_char_boundary(at) {
        at += 1;
    }
    at
}

/// Truncate to at most `max` bytes on a char boundary, marking the cut.
pub(crate) fn truncate_chars(s: &str, max: usize) -> String {
    if s.len() <= max {
        return s.to_string();
    }
    let cut = floor_boundary(s, max);
    format!("{} …", s[..cut].trim_end())
}
