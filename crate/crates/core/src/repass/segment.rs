//! Rule-based sentence segmentation.
//!
//! A sentence ends at `.`, `!` or `?` (optionally followed by closing quotes
//! or brackets) when whitespace follows and the next non-space character is
//! an uppercase letter, a digit, an opening quote or bracket, or the end of
//! the text. A `.` closing a known abbreviation does not end a sentence. Blank lines always end a sentence. Sentences
//! come back with whitespace collapsed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::collapse_whitespace;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SplitSource {
    Answer,
    Passage,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceSplit {
    pub sentences: Vec<String>,
    pub source: SplitSource,
}

impl SentenceSplit {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.sentences.iter().map(String::as_str)
    }
}

const ABBREVIATIONS: &[&str] = &[
    "e.g", "i.e", "etc", "cf", "vs", "viz", "mr", "mrs", "ms", "dr", "no", "nos", "art", "arts",
    "sec", "secs", "para", "paras", "ch", "fig", "approx", "inc", "ltd", "co", "corp", "st", "jr",
    "sr", "u.s", "u.k", "u.a.e", "rev", "vol", "pp",
];

const CLOSERS: &[char] = &['"', '\'', '\u{201d}', '\u{2019}', ')', ']'];
const OPENERS: &[char] = &['"', '\'', '\u{201c}', '\u{2018}', '(', '['];

fn starts_sentence(c: char) -> bool {
    c.is_uppercase() || c.is_ascii_digit() || OPENERS.contains(&c)
}

/// Whether the `.` ending `before` belongs to a known abbreviation.
fn is_abbreviation(before: &str) -> bool {
    let token = before
        .rsplit(char::is_whitespace)
        .next()
        .unwrap_or("")
        .trim_start_matches(|c: char| OPENERS.contains(&c));
    ABBREVIATIONS.contains(&token.to_lowercase().as_str())
}

/// Byte ranges of the raw sentence spans of `text`.
fn spans(text: &str) -> Vec<(usize, usize)> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if c == '\n' {
            // blank line: newline, optional horizontal space, newline
            let mut j = i + 1;
            while j < chars.len() && chars[j].1 != '\n' && chars[j].1.is_whitespace() {
                j += 1;
            }
            if j < chars.len() && chars[j].1 == '\n' {
                out.push((start, pos));
                while j < chars.len() && chars[j].1.is_whitespace() {
                    j += 1;
                }
                start = chars.get(j).map_or(text.len(), |&(p, _)| p);
                i = j;
                continue;
            }
        }
        if matches!(c, '.' | '!' | '?') {
            let mut j = i + 1;
            while j < chars.len() && CLOSERS.contains(&chars[j].1) {
                j += 1;
            }
            let end = chars.get(j).map_or(text.len(), |&(p, _)| p);
            let followed_by_space = j == chars.len() || chars[j].1.is_whitespace();
            if followed_by_space {
                let mut k = j;
                while k < chars.len() && chars[k].1.is_whitespace() {
                    k += 1;
                }
                let next_ok = k == chars.len() || starts_sentence(chars[k].1);
                let abbrev = c == '.' && is_abbreviation(&text[start..pos]);
                if next_ok && !abbrev {
                    out.push((start, end));
                    start = chars.get(k).map_or(text.len(), |&(p, _)| p);
                    i = k;
                    continue;
                }
            }
        }
        i += 1;
    }
    if start < text.len() {
        out.push((start, text.len()));
    }
    out.retain(|&(a, b)| !text[a..b].trim().is_empty());
    out
}

pub fn segment_sentences(text: &str) -> Result<SentenceSplit> {
    segment_as(text, SplitSource::Answer)
}

pub fn segment_as(text: &str, source: SplitSource) -> Result<SentenceSplit> {
    if text.trim().is_empty() {
        return Err(Error::invalid("cannot segment empty text"));
    }
    let sentences = spans(text)
        .into_iter()
        .map(|(a, b)| collapse_whitespace(&text[a..b]))
        .filter(|s| !s.is_empty())
        .collect();
    Ok(SentenceSplit { sentences, source })
}

/// Joins sentences with single spaces where that keeps them apart under
/// [`segment_sentences`], and with a blank line otherwise, so that
/// segmenting the result yields the input sentences again.
pub fn join_sentences<S: AsRef<str>>(sentences: &[S]) -> String {
    let mut out = String::new();
    let mut prev: Option<&str> = None;
    for s in sentences {
        let s = s.as_ref();
        if let Some(p) = prev {
            let candidate = format!("{p} {s}");
            let apart = spans(&candidate).len() == 2;
            out.push_str(if apart { " " } else { "\n\n" });
        }
        out.push_str(s);
        prev = Some(s);
    }
    out
}
