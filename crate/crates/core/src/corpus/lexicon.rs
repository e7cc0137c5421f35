use serde::{Deserialize, Serialize};

use crate::text;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconEntry {
    /// Lowercase surface form, possibly several words ("more recently").
    pub surface: String,
    /// Surface forms of the opposite polarity.
    #[serde(default)]
    pub partners: Vec<String>,
}

/// Comparative operators recognised in questions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparativeLexicon {
    entries: Vec<LexiconEntry>,
}

impl Default for ComparativeLexicon {
    /// The six operators of the comparison subset.
    fn default() -> Self {
        let e = |s: &str, p: &[&str]| LexiconEntry {
            surface: s.into(),
            partners: p.iter().map(|x| x.to_string()).collect(),
        };
        Self {
            entries: vec![
                e("earlier", &["later"]),
                e("later", &["earlier"]),
                e("first", &["later"]),
                e("more recently", &["earlier"]),
                e("older", &["younger"]),
                e("younger", &["older"]),
            ],
        }
    }
}

impl ComparativeLexicon {
    pub fn new(entries: Vec<LexiconEntry>) -> crate::Result<Self> {
        let mut lex = Self { entries: Vec::new() };
        for e in entries {
            lex = lex.with_entry(&e.surface, &e.partners.iter().map(String::as_str).collect::<Vec<_>>())?;
        }
        if lex.entries.is_empty() {
            return Err(crate::Error::InvalidInput("comparative lexicon is empty".into()));
        }
        Ok(lex)
    }

    /// Add (or replace) an entry; the surface form is lowercased.
    pub fn with_entry(mut self, surface: &str, partners: &[&str]) -> crate::Result<Self> {
        let surface = surface.trim().to_lowercase();
        if text::tokenize(&surface).is_empty() {
            return Err(crate::Error::InvalidInput("empty lexicon entry".into()));
        }
        self.entries.retain(|e| e.surface != surface);
        self.entries.push(LexiconEntry {
            surface,
            partners: partners.iter().map(|p| p.to_lowercase()).collect(),
        });
        Ok(self)
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    pub fn contains(&self, surface: &str) -> bool {
        let s = surface.to_lowercase();
        self.entries.iter().any(|e| e.surface == s)
    }

    /// Leftmost operator occurrence in `words`, preferring the longest entry
    /// at that position. Returns a half-open token range.
    pub fn find(&self, words: &[&str]) -> Option<std::ops::Range<usize>> {
        let keys: Vec<String> = words.iter().map(|w| text::key(w)).collect();
        let mut patterns: Vec<Vec<String>> = self
            .entries
            .iter()
            .map(|e| text::tokenize(&e.surface).into_iter().map(|t| t.text).collect())
            .collect();
        patterns.sort_by_key(|p| std::cmp::Reverse(p.len()));
        for start in 0..keys.len() {
            for p in &patterns {
                if keys[start..].starts_with(p) {
                    return Some(start..start + p.len());
                }
            }
        }
        None
    }
}
