//! Word-level tokenization and small lexical helpers.
//!
//! Words are maximal runs of alphanumeric characters; every other
//! non-whitespace character is a token of its own. Offsets are counted in
//! Unicode scalar values, not bytes.

use crate::types::Token;

/// Split `text` into word tokens with character offsets.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut start = 0usize;
    let mut pos = 0usize;

    for ch in text.chars() {
        if ch.is_alphanumeric() {
            if current.is_empty() {
                start = pos;
            }
            current.push(ch);
        } else {
            if !current.is_empty() {
                push(&mut tokens, std::mem::take(&mut current), start, pos);
            }
            if !ch.is_whitespace() {
                push(&mut tokens, ch.to_string(), pos, pos + 1);
            }
        }
        pos += 1;
    }
    if !current.is_empty() {
        push(&mut tokens, current, start, pos);
    }
    tokens
}

fn push(tokens: &mut Vec<Token>, text: String, start: usize, end: usize) {
    let index = tokens.len();
    tokens.push(Token {
        text,
        index,
        char_start: start,
        char_end: end,
    });
}

/// Rebuild the source string of a token sequence from its offsets.
///
/// Gaps between tokens are filled with spaces, so text whose only whitespace
/// is the ASCII space round-trips exactly.
pub fn layout(tokens: &[Token]) -> String {
    let Some(first) = tokens.first() else {
        return String::new();
    };
    let mut out = String::new();
    let mut cursor = first.char_start;
    for token in tokens {
        for _ in cursor..token.char_start {
            out.push(' ');
        }
        out.push_str(&token.text);
        cursor = token.char_end;
    }
    out
}

/// Split running text into sentences, returning `(char_start, sentence)` pairs.
///
/// A sentence ends at `.`, `!` or `?` followed by whitespace and an uppercase
/// letter, digit or quote. Common abbreviations do not end a sentence.
pub fn split_sentences(text: &str) -> Vec<(usize, String)> {
    const ABBREVIATIONS: &[&str] = &[
        "mr", "mrs", "ms", "dr", "st", "jr", "sr", "prof", "vs", "no", "inc", "co", "ltd", "gen",
        "col", "lt", "sgt", "mt", "ft", "u.s", "e.g", "i.e",
    ];
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut begin = 0usize;
    let mut i = 0usize;
    while i < chars.len() {
        let ch = chars[i];
        if matches!(ch, '.' | '!' | '?') {
            let mut j = i + 1;
            while j < chars.len() && matches!(chars[j], '"' | '\'' | ')' | '\u{201d}') {
                j += 1;
            }
            let mut k = j;
            while k < chars.len() && chars[k].is_whitespace() {
                k += 1;
            }
            let boundary = k > j
                && k < chars.len()
                && (chars[k].is_uppercase()
                    || chars[k].is_ascii_digit()
                    || matches!(chars[k], '"' | '\u{201c}'));
            let abbreviation = ch == '.' && {
                let word: String = chars[begin..i]
                    .iter()
                    .rev()
                    .take_while(|c| c.is_alphanumeric() || **c == '.')
                    .collect::<String>()
                    .chars()
                    .rev()
                    .collect::<String>()
                    .to_lowercase();
                ABBREVIATIONS.contains(&word.as_str()) || (word.chars().count() == 1 && word.chars().all(char::is_uppercase))
            };
            if boundary && !abbreviation {
                push_sentence(&mut out, &chars, begin, j);
                begin = k;
                i = k;
                continue;
            }
        }
        i += 1;
    }
    push_sentence(&mut out, &chars, begin, chars.len());
    out
}

fn push_sentence(out: &mut Vec<(usize, String)>, chars: &[char], begin: usize, end: usize) {
    let mut b = begin;
    while b < end && chars[b].is_whitespace() {
        b += 1;
    }
    let mut e = end;
    while e > b && chars[e - 1].is_whitespace() {
        e -= 1;
    }
    if e > b {
        out.push((b, chars[b..e].iter().collect()));
    }
}

/// Case-folded comparison key for a single word.
pub fn key(word: &str) -> String {
    word.to_lowercase()
}

/// Lowercased word with punctuation stripped; `None` for pure punctuation.
pub fn content_key(word: &str) -> Option<String> {
    let k: String = word
        .chars()
        .filter(|c| !is_punctuation(*c))
        .flat_map(char::to_lowercase)
        .collect();
    (!k.is_empty()).then_some(k)
}

pub fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{2018}' | '\u{2019}' | '\u{201c}' | '\u{201d}' | '\u{2013}' | '\u{2014}' | '\u{2026}'
                | '\u{00ab}' | '\u{00bb}' | '\u{00bf}' | '\u{00a1}'
        )
}

pub fn is_punct_token(word: &str) -> bool {
    !word.is_empty() && word.chars().all(is_punctuation)
}

pub fn is_capitalized(word: &str) -> bool {
    word.chars().next().is_some_and(char::is_uppercase)
}

const PRONOUNS: &[&str] = &[
    "i", "me", "my", "mine", "myself", "he", "him", "his", "himself", "she", "her", "hers",
    "herself", "it", "its", "itself", "we", "us", "our", "they", "them", "their", "you", "your",
];

pub fn is_pronoun(word: &str) -> bool {
    PRONOUNS.contains(&key(word).as_str())
}

const FUNCTION_WORDS: &[&str] = &[
    "a", "an", "the", "this", "that", "these", "those", "in", "on", "at", "of", "for", "to",
    "from", "by", "with", "and", "or", "but", "as", "after", "before", "during", "when", "while",
    "if", "although", "though", "which", "what", "who", "whom", "whose", "where", "why", "how",
    "is", "was", "are", "were", "be", "there", "here", "then", "also", "however", "meanwhile",
];

/// Pronouns and closed-class words that never head a named entity on their own.
pub fn is_function_word(word: &str) -> bool {
    let k = key(word);
    FUNCTION_WORDS.contains(&k.as_str()) || PRONOUNS.contains(&k.as_str())
}

/// Digit- or date-shaped tokens.
pub fn is_value_like(word: &str) -> bool {
    const MONTHS: &[&str] = &[
        "january", "february", "march", "april", "may", "june", "july", "august", "september",
        "october", "november", "december",
    ];
    word.chars().any(|c| c.is_ascii_digit()) || MONTHS.contains(&key(word).as_str())
}

/// Maximal runs of capitalized tokens, as half-open `(start, end)` ranges.
///
/// Lowercase connectors ("of", "de", "von", ...) are absorbed when they sit
/// between two capitalized tokens. Leading function words are trimmed unless
/// the word is a determiner opening a longer run ("The Mask Of Fu Manchu"),
/// and runs made only of function words are discarded.
pub fn capitalized_runs(words: &[&str]) -> Vec<(usize, usize)> {
    const CONNECTORS: &[&str] = &["of", "de", "von", "van", "der", "la", "du", "da", "del"];
    let mut runs = Vec::new();
    let mut i = 0;
    while i < words.len() {
        if !is_capitalized(words[i]) {
            i += 1;
            continue;
        }
        let start = i;
        let mut end = i + 1;
        loop {
            if end < words.len() && is_capitalized(words[end]) {
                end += 1;
            } else if end + 1 < words.len()
                && CONNECTORS.contains(&words[end])
                && is_capitalized(words[end + 1])
            {
                end += 2;
            } else {
                break;
            }
        }
        let mut s = start;
        while s < end {
            let k = key(words[s]);
            let determiner = matches!(k.as_str(), "the" | "a" | "an") && end - s > 1;
            if is_function_word(words[s]) && !determiner {
                s += 1;
            } else {
                break;
            }
        }
        if s < end {
            runs.push((s, end));
        }
        i = end;
    }
    runs
}
