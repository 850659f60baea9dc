//! Language codes, tokenization, surface normalization and character-offset helpers.
//!
//! All spans in this crate are half-open intervals of Unicode scalar values
//! (`char` offsets), never byte offsets.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Supported corpus languages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Lang {
    #[serde(rename = "zh")]
    Zh,
    #[serde(rename = "en")]
    En,
}

impl Lang {
    pub const ALL: [Lang; 2] = [Lang::Zh, Lang::En];

    pub fn code(self) -> &'static str {
        match self {
            Lang::Zh => "zh",
            Lang::En => "en",
        }
    }
}

impl fmt::Display for Lang {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unsupported language code `{0}` (expected zh or en)")]
pub struct UnknownLang(pub String);

impl FromStr for Lang {
    type Err = UnknownLang;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zh" => Ok(Lang::Zh),
            "en" => Ok(Lang::En),
            other => Err(UnknownLang(other.to_string())),
        }
    }
}

/// CJK ideographs plus CJK punctuation and fullwidth forms.
pub fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3000..=0x303F
        | 0x3400..=0x4DBF
        | 0x4E00..=0x9FFF
        | 0xF900..=0xFAFF
        | 0xFF00..=0xFFEF
        | 0x20000..=0x2A6DF
        | 0x2A700..=0x2EBEF
        | 0x30000..=0x3134F)
}

/// Splits `text` into tokens.
///
/// `zh`: every CJK codepoint is a token and every maximal run of non-CJK,
/// non-whitespace characters is a token. `en`: whitespace-delimited runs.
pub fn tokens(text: &str, lang: Lang) -> Vec<&str> {
    match lang {
        Lang::En => text.split_whitespace().collect(),
        Lang::Zh => {
            let mut out = Vec::new();
            let mut run_start: Option<usize> = None;
            for (i, c) in text.char_indices() {
                if c.is_whitespace() || is_cjk(c) {
                    if let Some(s) = run_start.take() {
                        out.push(&text[s..i]);
                    }
                    if is_cjk(c) {
                        out.push(&text[i..i + c.len_utf8()]);
                    }
                } else if run_start.is_none() {
                    run_start = Some(i);
                }
            }
            if let Some(s) = run_start {
                out.push(&text[s..]);
            }
            out
        }
    }
}

pub fn count_tokens(text: &str, lang: Lang) -> usize {
    tokens(text, lang).len()
}

/// Trim, collapse internal whitespace to single spaces, and case-fold for `en`.
pub fn normalize_surface(s: &str, lang: Lang) -> String {
    let collapsed = s.split_whitespace().collect::<Vec<_>>().join(" ");
    match lang {
        Lang::En => collapsed.to_lowercase(),
        Lang::Zh => collapsed,
    }
}

/// Number of chars in `s`.
pub fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// Byte offset of char index `idx`; `None` past the end.
pub fn char_to_byte(s: &str, idx: usize) -> Option<usize> {
    if idx == 0 {
        return Some(0);
    }
    let mut count = 0;
    for (b, _) in s.char_indices() {
        if count == idx {
            return Some(b);
        }
        count += 1;
    }
    (count == idx).then_some(s.len())
}

/// Slice by char offsets `[start, end)`.
pub fn slice_chars(s: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let b0 = char_to_byte(s, start)?;
    let b1 = char_to_byte(s, end)?;
    Some(&s[b0..b1])
}

/// Maps byte offsets to char offsets for one string.
pub struct CharMap {
    /// `byte_starts[i]` is the byte offset of char `i`; last entry is `len`.
    byte_starts: Vec<usize>,
}

impl CharMap {
    pub fn new(s: &str) -> Self {
        let mut byte_starts: Vec<usize> = s.char_indices().map(|(b, _)| b).collect();
        byte_starts.push(s.len());
        CharMap { byte_starts }
    }

    pub fn char_of_byte(&self, byte: usize) -> usize {
        match self.byte_starts.binary_search(&byte) {
            Ok(i) => i,
            Err(i) => i,
        }
    }

    pub fn byte_of_char(&self, ch: usize) -> usize {
        self.byte_starts[ch.min(self.byte_starts.len() - 1)]
    }

    pub fn len_chars(&self) -> usize {
        self.byte_starts.len() - 1
    }
}

/// True when a match `[b0, b1)` (byte offsets) in `text` does not split an
/// alphanumeric word (en) or a digit run (numbers in any language).
pub fn is_bounded_match(text: &str, b0: usize, b1: usize, lang: Lang) -> bool {
    let before = text[..b0].chars().next_back();
    let after = text[b1..].chars().next();
    let first = text[b0..b1].chars().next();
    let last = text[b0..b1].chars().next_back();
    let joins = |outer: Option<char>, inner: Option<char>| match (outer, inner) {
        (Some(o), Some(i)) => {
            (o.is_ascii_digit() && i.is_ascii_digit())
                || (lang == Lang::En
                    && o.is_alphanumeric()
                    && i.is_alphanumeric()
                    && !is_cjk(o)
                    && !is_cjk(i))
        }
        _ => false,
    };
    !joins(before, first) && !joins(after, last)
}

/// Non-overlapping, left-to-right occurrences of `needle` in `text` as char spans,
/// respecting [`is_bounded_match`].
pub fn find_occurrences(text: &str, needle: &str, lang: Lang) -> Vec<(usize, usize)> {
    if needle.is_empty() {
        return Vec::new();
    }
    let map = CharMap::new(text);
    let mut out = Vec::new();
    let mut from = 0;
    while let Some(pos) = text[from..].find(needle) {
        let b0 = from + pos;
        let b1 = b0 + needle.len();
        if is_bounded_match(text, b0, b1, lang) {
            out.push((map.char_of_byte(b0), map.char_of_byte(b1)));
            from = b1;
        } else {
            // advance one char past the rejected start
            from = b0 + text[b0..].chars().next().map_or(1, char::len_utf8);
        }
    }
    out
}

/// Naive sentence splitter over `.!?。！？`; keeps the terminator with its sentence.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut iter = text.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        let end = i + c.len_utf8();
        let terminal = match c {
            '。' | '！' | '？' => true,
            '.' | '!' | '?' => iter.peek().is_none_or(|(_, n)| n.is_whitespace()),
            _ => false,
        };
        if terminal {
            let s = text[start..end].trim();
            if !s.is_empty() {
                out.push(s);
            }
            start = end;
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zh_tokenizer_counts_cjk_and_runs() {
        assert_eq!(count_tokens("蒂姆·库克 born 1960年", Lang::Zh), 8);
        assert_eq!(tokens("苹果公司CEO", Lang::Zh), vec!["苹", "果", "公", "司", "CEO"]);
        assert_eq!(count_tokens("", Lang::Zh), 0);
    }

    #[test]
    fn en_tokenizer_splits_whitespace() {
        assert_eq!(count_tokens("  Tim Cook\n is  CEO. ", Lang::En), 4);
    }

    #[test]
    fn normalization_rules() {
        assert_eq!(normalize_surface("  Steve   Jobs ", Lang::En), "steve jobs");
        assert_eq!(normalize_surface(" 蘋果  公司", Lang::Zh), "蘋果 公司");
        assert_eq!(normalize_surface("Apple", Lang::Zh), "Apple");
    }

    #[test]
    fn char_slicing() {
        let s = "蒂姆 Cook";
        assert_eq!(slice_chars(s, 0, 2), Some("蒂姆"));
        assert_eq!(slice_chars(s, 3, 7), Some("Cook"));
        assert_eq!(slice_chars(s, 3, 8), None);
        let map = CharMap::new(s);
        assert_eq!(map.char_of_byte(s.find('C').unwrap()), 3);
        assert_eq!(map.len_chars(), 7);
    }

    #[test]
    fn occurrences_respect_word_and_digit_boundaries() {
        assert_eq!(find_occurrences("Pineapple and Apple", "Apple", Lang::En), vec![(14, 19)]);
        assert_eq!(find_occurrences("in 1828 and 828 m", "828", Lang::En), vec![(12, 15)]);
        assert_eq!(find_occurrences("苹果和苹果", "苹果", Lang::Zh), vec![(0, 2), (3, 5)]);
    }

    #[test]
    fn sentence_split() {
        assert_eq!(
            split_sentences("He was born in 1960. He is CEO of Apple Inc. now"),
            vec!["He was born in 1960.", "He is CEO of Apple Inc.", "now"]
        );
        assert_eq!(split_sentences("他出生了。他是CEO。"), vec!["他出生了。", "他是CEO。"]);
    }
}
