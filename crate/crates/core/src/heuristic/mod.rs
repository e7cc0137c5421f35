//! Unsupervised two-step QA baseline: pick the sentence most similar to the
//! question, then return a named entity of the expected answer type.

mod plugins;

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text;
use crate::types::{RCInstance, Sentence};

pub use plugins::{
    EntityMention, EntityRecognizer, EntityTypeClassifier, HashingEmbedder, PluginRegistry, RuleNer,
    SentenceEmbedder, WhRuleClassifier,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EntityType {
    Person,
    Gpe,
    Loc,
    Org,
    Date,
    Cardinal,
    Ordinal,
    Event,
    WorkOfArt,
    Entity,
}

impl EntityType {
    pub const ALL: [EntityType; 10] = [
        Self::Person,
        Self::Gpe,
        Self::Loc,
        Self::Org,
        Self::Date,
        Self::Cardinal,
        Self::Ordinal,
        Self::Event,
        Self::WorkOfArt,
        Self::Entity,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Self::Person => "PERSON",
            Self::Gpe => "GPE",
            Self::Loc => "LOC",
            Self::Org => "ORG",
            Self::Date => "DATE",
            Self::Cardinal => "CARDINAL",
            Self::Ordinal => "ORDINAL",
            Self::Event => "EVENT",
            Self::WorkOfArt => "WORK_OF_ART",
            Self::Entity => "ENTITY",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.label().eq_ignore_ascii_case(s))
    }

    /// Whether an entity labelled `other` satisfies a request for `self`.
    pub fn accepts(self, other: EntityType) -> bool {
        let place = |t| matches!(t, Self::Gpe | Self::Loc);
        self == other || (place(self) && place(other))
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionStrategy {
    TokenOverlap,
    Lcs,
    Position,
    SentenceEncoder,
}

impl SelectionStrategy {
    pub const ALL: [SelectionStrategy; 4] = [Self::TokenOverlap, Self::Lcs, Self::Position, Self::SentenceEncoder];

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "token_overlap" | "overlap" => Some(Self::TokenOverlap),
            "lcs" => Some(Self::Lcs),
            "position" => Some(Self::Position),
            "sentence_encoder" | "encoder" => Some(Self::SentenceEncoder),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::TokenOverlap => "token_overlap",
            Self::Lcs => "lcs",
            Self::Position => "position",
            Self::SentenceEncoder => "sentence_encoder",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityTypeSource {
    WhMapping,
    LearnedPredictor,
}

impl EntityTypeSource {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "wh_mapping" | "wh" => Some(Self::WhMapping),
            "learned_predictor" | "learned" => Some(Self::LearnedPredictor),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeuristicConfig {
    pub selection_strategy: SelectionStrategy,
    pub entity_type_source: EntityTypeSource,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        Self {
            selection_strategy: SelectionStrategy::TokenOverlap,
            entity_type_source: EntityTypeSource::WhMapping,
        }
    }
}

impl HeuristicConfig {
    pub fn with_strategy(selection_strategy: SelectionStrategy) -> Self {
        Self {
            selection_strategy,
            ..Self::default()
        }
    }
}

/// Plugins used by [`heuristic_answer`].
pub struct HeuristicPlugins {
    pub ner: Box<dyn EntityRecognizer>,
    pub embedder: Option<Box<dyn SentenceEmbedder>>,
    pub classifier: Option<Box<dyn EntityTypeClassifier>>,
}

impl Default for HeuristicPlugins {
    fn default() -> Self {
        Self {
            ner: Box::new(RuleNer),
            embedder: Some(Box::new(HashingEmbedder::default())),
            classifier: None,
        }
    }
}

impl HeuristicPlugins {
    pub fn from_registry(
        registry: &PluginRegistry,
        ner: &str,
        embedder: Option<&str>,
        classifier: Option<&str>,
    ) -> Result<Self> {
        Ok(Self {
            ner: registry.ner(ner)?,
            embedder: embedder.map(|n| registry.embedder(n)).transpose()?,
            classifier: classifier.map(|n| registry.classifier(n)).transpose()?,
        })
    }
}

/// Lowercased, punctuation-free word keys; punctuation tokens are dropped.
pub fn normalized_tokens(words: &[&str]) -> Vec<String> {
    words.iter().filter_map(|w| text::content_key(w)).collect()
}

pub fn token_overlap(question: &[String], sentence: &[String]) -> usize {
    let q: BTreeSet<&String> = question.iter().collect();
    let s: BTreeSet<&String> = sentence.iter().collect();
    q.intersection(&s).count()
}

pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    for x in a {
        let mut cur = vec![0usize; b.len() + 1];
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        prev = cur;
    }
    prev[b.len()]
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

fn first_max<T: PartialOrd + Copy>(scores: impl IntoIterator<Item = T>) -> usize {
    let mut best: Option<(usize, T)> = None;
    for (i, s) in scores.into_iter().enumerate() {
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map_or(0, |(i, _)| i)
}

/// Index of the best-scoring sentence; ties go to the earliest.
pub fn select_sentence(
    question: &[&str],
    sentences: &[Vec<&str>],
    strategy: SelectionStrategy,
    embedder: Option<&dyn SentenceEmbedder>,
) -> Result<usize> {
    if sentences.is_empty() {
        return Err(Error::InvalidInput("no sentences to select from".into()));
    }
    let q = normalized_tokens(question);
    Ok(match strategy {
        SelectionStrategy::Position => 0,
        SelectionStrategy::TokenOverlap => {
            first_max(sentences.iter().map(|s| token_overlap(&q, &normalized_tokens(s))))
        }
        SelectionStrategy::Lcs => first_max(sentences.iter().map(|s| lcs_len(&q, &normalized_tokens(s)))),
        SelectionStrategy::SentenceEncoder => {
            let emb = embedder.ok_or(Error::Capability {
                model_id: "heuristic".into(),
                capability: "sentence embeddings",
            })?;
            let qv = emb.embed(&question.join(" "));
            first_max(sentences.iter().map(|s| cosine(&qv, &emb.embed(&s.join(" ")))))
        }
    })
}

const WH_WORDS: &[&str] = &["who", "whom", "whose", "where", "when", "how", "which", "what"];

const TYPE_NOUNS: &[(&str, EntityType)] = &[
    ("person", EntityType::Person),
    ("people", EntityType::Person),
    ("man", EntityType::Person),
    ("woman", EntityType::Person),
    ("actor", EntityType::Person),
    ("actress", EntityType::Person),
    ("author", EntityType::Person),
    ("writer", EntityType::Person),
    ("singer", EntityType::Person),
    ("player", EntityType::Person),
    ("director", EntityType::Person),
    ("president", EntityType::Person),
    ("king", EntityType::Person),
    ("queen", EntityType::Person),
    ("composer", EntityType::Person),
    ("city", EntityType::Gpe),
    ("country", EntityType::Gpe),
    ("state", EntityType::Gpe),
    ("town", EntityType::Gpe),
    ("nation", EntityType::Gpe),
    ("capital", EntityType::Gpe),
    ("place", EntityType::Loc),
    ("river", EntityType::Loc),
    ("mountain", EntityType::Loc),
    ("island", EntityType::Loc),
    ("year", EntityType::Date),
    ("date", EntityType::Date),
    ("day", EntityType::Date),
    ("month", EntityType::Date),
    ("century", EntityType::Date),
    ("company", EntityType::Org),
    ("band", EntityType::Org),
    ("team", EntityType::Org),
    ("university", EntityType::Org),
    ("organization", EntityType::Org),
    ("party", EntityType::Org),
    ("club", EntityType::Org),
    ("film", EntityType::WorkOfArt),
    ("movie", EntityType::WorkOfArt),
    ("book", EntityType::WorkOfArt),
    ("novel", EntityType::WorkOfArt),
    ("song", EntityType::WorkOfArt),
    ("album", EntityType::WorkOfArt),
    ("magazine", EntityType::WorkOfArt),
    ("war", EntityType::Event),
    ("battle", EntityType::Event),
    ("number", EntityType::Cardinal),
];

/// Expected answer type from the first wh-word of the question.
pub fn wh_mapping(question: &str) -> EntityType {
    let toks = text::tokenize(question);
    let words: Vec<String> = toks.iter().map(|t| text::key(&t.text)).collect();
    let Some(i) = words.iter().position(|w| WH_WORDS.contains(&w.as_str())) else {
        return EntityType::Entity;
    };
    match words[i].as_str() {
        "who" | "whom" | "whose" => EntityType::Person,
        "where" => EntityType::Gpe,
        "when" => EntityType::Date,
        "how" => match words.get(i + 1).map(String::as_str) {
            Some("many" | "much") => EntityType::Cardinal,
            _ => EntityType::Entity,
        },
        _ => words[i + 1..]
            .iter()
            .find_map(|w| {
                let singular = w.strip_suffix('s').unwrap_or(w);
                TYPE_NOUNS
                    .iter()
                    .find(|(n, _)| *n == w.as_str() || *n == singular)
                    .map(|(_, t)| *t)
            })
            .unwrap_or(EntityType::Entity),
    }
}

/// Expected answer type. A learned source without a classifier falls back
/// to the wh-word table.
pub fn predict_entity_type(
    question: &str,
    source: EntityTypeSource,
    classifier: Option<&dyn EntityTypeClassifier>,
) -> EntityType {
    match (source, classifier) {
        (EntityTypeSource::LearnedPredictor, Some(c)) => c.classify(question),
        _ => wh_mapping(question),
    }
}

/// The first entity of the wanted type, else the first entity, else the
/// longest capitalized run, else the first word.
pub fn extract_phrase(sentence: &Sentence, wanted: EntityType, ner: &dyn EntityRecognizer) -> Result<String> {
    let words = sentence.words();
    if words.is_empty() {
        return Err(Error::InvalidInput("cannot extract a phrase from an empty sentence".into()));
    }
    let ents = ner.entities(&words);
    let pick = ents
        .iter()
        .find(|m| wanted.accepts(m.label))
        .or_else(|| ents.first())
        .map(|m| (m.start, m.end))
        .or_else(|| {
            text::capitalized_runs(&words)
                .into_iter()
                .fold(None, |best: Option<(usize, usize)>, r| match best {
                    Some(b) if b.1 - b.0 >= r.1 - r.0 => Some(b),
                    _ => Some(r),
                })
        })
        .unwrap_or_else(|| {
            let i = words.iter().position(|w| !text::is_punct_token(w)).unwrap_or(0);
            (i, i + 1)
        });
    Ok(text::layout(&sentence.tokens[pick.0..pick.1]))
}

pub fn heuristic_answer(instance: &RCInstance, config: &HeuristicConfig, plugins: &HeuristicPlugins) -> Result<String> {
    let sentences: Vec<Vec<&str>> = instance.context.iter().map(Sentence::words).collect();
    let idx = select_sentence(
        &instance.question_words(),
        &sentences,
        config.selection_strategy,
        plugins.embedder.as_deref(),
    )
    .map_err(|e| match e {
        Error::InvalidInput(m) => Error::instance(&instance.id, m),
        other => other,
    })?;
    let wanted = predict_entity_type(&instance.question_text, config.entity_type_source, plugins.classifier.as_deref());
    extract_phrase(&instance.context[idx], wanted, plugins.ner.as_ref()).map_err(|e| match e {
        Error::InvalidInput(m) => Error::instance(&instance.id, m),
        other => other,
    })
}

/// Heuristic answers keyed by instance id.
pub fn heuristic_predictions(
    instances: &[RCInstance],
    config: &HeuristicConfig,
    plugins: &HeuristicPlugins,
) -> Result<HashMap<String, String>> {
    instances
        .par_iter()
        .map(|i| Ok((i.id.clone(), heuristic_answer(i, config, plugins)?)))
        .collect()
}
