//! Sentence segmentation and the tokenizers shared by retrieval, metrics and
//! corpus statistics.

use serde::{Deserialize, Serialize};

/// Abbreviations after which a period never ends a sentence (they precede a
/// name or a number).
const TITLE_ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "st", "mt", "ft", "vs", "gen", "sen", "rep", "gov", "capt",
    "lt", "col", "sgt", "rev", "hon", "pres", "vol", "fig", "jan", "feb", "mar", "apr", "jun",
    "jul", "aug", "sep", "sept", "oct", "nov", "dec",
];

/// Abbreviations that may end a sentence; the period only splits when the
/// next word is capitalized.
const TRAILING_ABBREVIATIONS: &[&str] = &[
    "etc", "inc", "ltd", "co", "corp", "jr", "sr", "approx", "dept", "est", "e.g", "i.e", "a.m",
    "p.m", "u.s", "u.k", "d.c", "ph.d",
];

const CLOSERS: &[char] = &['"', '\'', ')', ']', '}', '\u{201d}', '\u{2019}', '\u{bb}'];

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | '\u{2026}')
}

/// Splits a turn into sentences on `.`, `!` and `?` (including runs like `?!`
/// and trailing quotes/brackets) when followed by whitespace, guarding a fixed
/// abbreviation list, single-letter initials and dotted acronyms.
///
/// Every returned sentence is non-empty and trimmed; text with no boundary is
/// returned whole.
pub fn segment_sentences(text: &str) -> Vec<String> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut sentences = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;

    while i < chars.len() {
        let (_, c) = chars[i];
        if !is_terminal(c) {
            i += 1;
            continue;
        }
        let run_start = i;
        let mut j = i;
        while j < chars.len() && is_terminal(chars[j].1) {
            j += 1;
        }
        while j < chars.len() && CLOSERS.contains(&chars[j].1) {
            j += 1;
        }
        let at_end = j >= chars.len();
        if !at_end && !chars[j].1.is_whitespace() {
            i = j.max(i + 1);
            continue;
        }
        let terminal_run: String = chars[run_start..j]
            .iter()
            .map(|&(_, c)| c)
            .filter(|c| is_terminal(*c))
            .collect();
        let next_word = next_word_after(&chars, j);
        // a quoted or bracketed terminator followed by lowercase continues the sentence
        let closed = chars[run_start..j]
            .iter()
            .any(|&(_, c)| CLOSERS.contains(&c));
        let continues = closed
            && next_word
                .as_deref()
                .and_then(|w| w.chars().find(|c| c.is_alphanumeric()))
                .is_some_and(char::is_lowercase);
        if !at_end
            && (continues || !is_boundary(&chars, run_start, &terminal_run, next_word.as_deref()))
        {
            i = j;
            continue;
        }
        let end_byte = if at_end { text.len() } else { chars[j].0 };
        push_trimmed(&mut sentences, &text[start..end_byte]);
        start = end_byte;
        i = j;
    }
    push_trimmed(&mut sentences, &text[start..]);
    if sentences.is_empty() && !text.trim().is_empty() {
        sentences.push(text.trim().to_string());
    }
    sentences
}

fn push_trimmed(out: &mut Vec<String>, span: &str) {
    let trimmed = span.trim();
    if !trimmed.is_empty() {
        out.push(trimmed.to_string());
    }
}

fn next_word_after(chars: &[(usize, char)], mut j: usize) -> Option<String> {
    while j < chars.len() && chars[j].1.is_whitespace() {
        j += 1;
    }
    let word: String = chars[j..]
        .iter()
        .map(|&(_, c)| c)
        .take_while(|c| !c.is_whitespace())
        .collect();
    (!word.is_empty()).then_some(word)
}

fn starts_upper(word: Option<&str>) -> bool {
    word.and_then(|w| w.chars().find(|c| c.is_alphanumeric()))
        .is_some_and(|c| c.is_uppercase() || c.is_numeric())
}

fn is_boundary(
    chars: &[(usize, char)],
    run_start: usize,
    terminal_run: &str,
    next_word: Option<&str>,
) -> bool {
    if terminal_run.contains('!') || terminal_run.contains('?') {
        return true;
    }
    if terminal_run.chars().count() > 1 || terminal_run.contains('\u{2026}') {
        // ellipsis: only a boundary when a new sentence visibly starts
        return starts_upper(next_word);
    }
    let mut k = run_start;
    while k > 0 && !chars[k - 1].1.is_whitespace() {
        k -= 1;
    }
    let word: String = chars[k..run_start]
        .iter()
        .map(|&(_, c)| c)
        .filter(|c| c.is_alphanumeric() || *c == '.')
        .collect::<String>()
        .to_lowercase();
    if word.is_empty() {
        return true;
    }
    if TITLE_ABBREVIATIONS.contains(&word.as_str()) {
        return false;
    }
    if word == "no" {
        // "No. 5" versus a one-word answer
        return !next_word
            .and_then(|w| w.chars().next())
            .is_some_and(|c| c.is_ascii_digit());
    }
    let single_initial = word.chars().count() == 1
        && chars[k..run_start]
            .iter()
            .any(|&(_, c)| c.is_alphabetic() && c.is_uppercase());
    if single_initial {
        return false;
    }
    let dotted_acronym = word.contains('.')
        && word
            .split('.')
            .all(|part| part.chars().count() <= 2 && !part.is_empty());
    if TRAILING_ABBREVIATIONS.contains(&word.as_str()) || dotted_acronym {
        return starts_upper(next_word);
    }
    true
}

/// Tokenizer switches for the retrieval index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizerConfig {
    pub lowercase: bool,
    pub strip_punct: bool,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig {
            lowercase: true,
            strip_punct: true,
        }
    }
}

/// Whitespace tokenization; punctuation characters are deleted from inside
/// tokens when `strip_punct` is set, so `don't` becomes `dont`.
pub fn index_tokens(text: &str, config: TokenizerConfig) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|raw| {
            let tok: String = if config.strip_punct {
                raw.chars().filter(|c| c.is_alphanumeric()).collect()
            } else {
                raw.to_string()
            };
            if tok.is_empty() {
                None
            } else if config.lowercase {
                Some(tok.to_lowercase())
            } else {
                Some(tok)
            }
        })
        .collect()
}

/// Lowercased whitespace tokens with every punctuation character split off as
/// its own token. Used by all text-generation metrics.
pub fn metric_tokens(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for raw in text.split_whitespace() {
        let mut current = String::new();
        for c in raw.chars() {
            if c.is_alphanumeric() {
                current.extend(c.to_lowercase());
            } else {
                if !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
                tokens.push(c.to_string());
            }
        }
        if !current.is_empty() {
            tokens.push(current);
        }
    }
    tokens
}

/// Number of whitespace-separated words once punctuation is stripped;
/// tokens made only of punctuation do not count.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace()
        .filter(|tok| tok.chars().any(|c| c.is_alphanumeric()))
        .count()
}
