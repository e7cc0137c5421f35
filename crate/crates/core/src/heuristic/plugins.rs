use std::collections::BTreeMap;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::text;

use super::{normalized_tokens, wh_mapping, EntityType};

/// A typed entity over a half-open word range of a sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityMention {
    pub start: usize,
    pub end: usize,
    pub label: EntityType,
}

pub trait EntityRecognizer: Send + Sync {
    fn name(&self) -> &str;
    /// Entities in word order.
    fn entities(&self, words: &[&str]) -> Vec<EntityMention>;
}

pub trait SentenceEmbedder: Send + Sync {
    fn name(&self) -> &str;
    fn embed(&self, text: &str) -> Vec<f64>;
}

pub trait EntityTypeClassifier: Send + Sync {
    fn name(&self) -> &str;
    fn classify(&self, question: &str) -> EntityType;
}

const PLACES: &[&str] = &[
    "afghanistan", "africa", "america", "amsterdam", "argentina", "asia", "athens", "australia",
    "austria", "berlin", "boston", "brazil", "california", "canada", "chicago", "china", "dublin",
    "egypt", "england", "europe", "france", "germany", "greece", "hawaii", "india", "ireland",
    "italy", "japan", "kenya", "london", "los angeles", "madrid", "mexico", "moscow", "new york",
    "nigeria", "norway", "paris", "poland", "portugal", "rome", "russia", "scotland", "spain",
    "sweden", "texas", "tokyo", "uk", "us", "usa", "united kingdom", "united states", "vienna",
    "wales", "warsaw", "washington",
];

const ORG_HEADS: &[&str] = &[
    "university", "college", "inc", "inc.", "corporation", "company", "corp", "ltd", "fc", "club",
    "party", "institute", "ministry", "bank", "records", "studios", "association", "society",
    "council", "committee", "league", "school", "foundation",
];

const EVENT_HEADS: &[&str] = &["war", "cup", "olympics", "championship", "festival", "revolution"];

fn is_year(word: &str) -> bool {
    word.len() == 4 && word.chars().all(|c| c.is_ascii_digit()) && matches!(word.parse::<u32>(), Ok(1000..=2100))
}

fn is_month(word: &str) -> bool {
    text::is_value_like(word) && !word.chars().any(|c| c.is_ascii_digit())
}

fn value_label(words: &[&str]) -> EntityType {
    if words.iter().any(|w| is_month(w) || is_year(w)) {
        EntityType::Date
    } else if words.iter().any(|w| {
        let k = text::key(w);
        ["st", "nd", "rd", "th"].iter().any(|s| k.ends_with(s)) && k.starts_with(|c: char| c.is_ascii_digit())
    }) {
        EntityType::Ordinal
    } else {
        EntityType::Cardinal
    }
}

fn name_label(words: &[&str]) -> EntityType {
    let joined = words.iter().map(|w| text::key(w)).collect::<Vec<_>>().join(" ");
    let last = text::key(words[words.len() - 1]);
    if PLACES.contains(&joined.as_str()) {
        EntityType::Gpe
    } else if ORG_HEADS.contains(&last.as_str()) {
        EntityType::Org
    } else if EVENT_HEADS.contains(&last.as_str()) {
        EntityType::Event
    } else if words.len() >= 2 && words.iter().all(|w| text::is_capitalized(w)) && text::key(words[0]) != "the" {
        EntityType::Person
    } else {
        EntityType::Entity
    }
}

/// Capitalized runs and number/date runs, typed by a small gazetteer and
/// head-word rules.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleNer;

impl EntityRecognizer for RuleNer {
    fn name(&self) -> &str {
        "rule"
    }

    fn entities(&self, words: &[&str]) -> Vec<EntityMention> {
        let mut out = Vec::new();
        let mut value = vec![false; words.len()];
        let mut i = 0;
        while i < words.len() {
            if !text::is_value_like(words[i]) {
                i += 1;
                continue;
            }
            let start = i;
            let mut end = i + 1;
            loop {
                if end < words.len() && text::is_value_like(words[end]) {
                    end += 1;
                } else if end + 1 < words.len() && words[end] == "," && text::is_value_like(words[end + 1]) {
                    end += 2;
                } else {
                    break;
                }
            }
            value[start..end].iter_mut().for_each(|v| *v = true);
            out.push(EntityMention {
                start,
                end,
                label: value_label(&words[start..end]),
            });
            i = end;
        }
        let masked: Vec<&str> = words.iter().zip(&value).map(|(w, v)| if *v { "" } else { *w }).collect();
        for (s, e) in text::capitalized_runs(&masked) {
            if e - s == 1 && text::is_function_word(words[s]) {
                continue;
            }
            out.push(EntityMention {
                start: s,
                end: e,
                label: name_label(&words[s..e]),
            });
        }
        for (i, w) in words.iter().enumerate() {
            let acronym = w.chars().count() >= 2 && w.chars().all(|c| c.is_ascii_uppercase());
            if acronym && !value[i] && !out.iter().any(|m| (m.start..m.end).contains(&i)) {
                out.push(EntityMention {
                    start: i,
                    end: i + 1,
                    label: name_label(&words[i..=i]),
                });
            }
        }
        out.sort_by_key(|m| (m.start, m.end));
        out
    }
}

/// Feature-hashed bag of normalized tokens, L2-normalized.
#[derive(Debug, Clone, Copy)]
pub struct HashingEmbedder {
    pub dim: usize,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self { dim: 256 }
    }
}

impl SentenceEmbedder for HashingEmbedder {
    fn name(&self) -> &str {
        "hashing"
    }

    fn embed(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim.max(1)];
        let words = text::tokenize(text);
        let words: Vec<&str> = words.iter().map(|t| t.text.as_str()).collect();
        for tok in normalized_tokens(&words) {
            let digest = Sha256::digest(tok.as_bytes());
            let h = u64::from_le_bytes(digest[..8].try_into().unwrap());
            let sign = if digest[8] & 1 == 0 { 1.0 } else { -1.0 };
            let n = v.len() as u64;
            v[(h % n) as usize] += sign;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

/// Classifier that applies the fixed wh-word table.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhRuleClassifier;

impl EntityTypeClassifier for WhRuleClassifier {
    fn name(&self) -> &str {
        "wh_rules"
    }

    fn classify(&self, question: &str) -> EntityType {
        wh_mapping(question)
    }
}

type Factory<T> = Arc<dyn Fn() -> Box<T> + Send + Sync>;

/// Named constructors for heuristic plugins.
#[derive(Clone)]
pub struct PluginRegistry {
    ner: BTreeMap<String, Factory<dyn EntityRecognizer>>,
    embedders: BTreeMap<String, Factory<dyn SentenceEmbedder>>,
    classifiers: BTreeMap<String, Factory<dyn EntityTypeClassifier>>,
}

impl Default for PluginRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl PluginRegistry {
    pub fn empty() -> Self {
        Self {
            ner: BTreeMap::new(),
            embedders: BTreeMap::new(),
            classifiers: BTreeMap::new(),
        }
    }

    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register_ner("rule", || Box::new(RuleNer));
        r.register_embedder("hashing", || Box::new(HashingEmbedder::default()));
        r.register_classifier("wh_rules", || Box::new(WhRuleClassifier));
        r
    }

    pub fn register_ner(&mut self, name: &str, f: impl Fn() -> Box<dyn EntityRecognizer> + Send + Sync + 'static) {
        self.ner.insert(name.to_string(), Arc::new(f));
    }

    pub fn register_embedder(&mut self, name: &str, f: impl Fn() -> Box<dyn SentenceEmbedder> + Send + Sync + 'static) {
        self.embedders.insert(name.to_string(), Arc::new(f));
    }

    pub fn register_classifier(
        &mut self,
        name: &str,
        f: impl Fn() -> Box<dyn EntityTypeClassifier> + Send + Sync + 'static,
    ) {
        self.classifiers.insert(name.to_string(), Arc::new(f));
    }

    pub fn ner(&self, name: &str) -> Result<Box<dyn EntityRecognizer>> {
        lookup(&self.ner, "entity recognizer", name)
    }

    pub fn embedder(&self, name: &str) -> Result<Box<dyn SentenceEmbedder>> {
        lookup(&self.embedders, "sentence embedder", name)
    }

    pub fn classifier(&self, name: &str) -> Result<Box<dyn EntityTypeClassifier>> {
        lookup(&self.classifiers, "entity type classifier", name)
    }
}

fn lookup<T: ?Sized>(map: &BTreeMap<String, Factory<T>>, kind: &str, name: &str) -> Result<Box<T>> {
    map.get(name).map(|f| f()).ok_or_else(|| {
        let known: Vec<&str> = map.keys().map(String::as_str).collect();
        Error::InvalidInput(format!("unknown {kind} {name:?} (known: {})", known.join(", ")))
    })
}
