//! Domain types shared across the toolkit.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text;

/// One word of a question or context, with character offsets into its source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    /// Position within its sequence (the question, or the flattened context).
    pub index: usize,
    pub char_start: usize,
    pub char_end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub tokens: Vec<Token>,
    pub is_supporting_fact: bool,
    pub paragraph_id: String,
}

impl Sentence {
    pub fn new(text: &str, is_supporting_fact: bool, paragraph_id: impl Into<String>) -> Self {
        Self {
            tokens: text::tokenize(text),
            is_supporting_fact,
            paragraph_id: paragraph_id.into(),
        }
    }

    pub fn text(&self) -> String {
        text::layout(&self.tokens)
    }

    pub fn words(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.text.as_str()).collect()
    }
}

/// A gold or predicted answer anchored in the flattened context.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerSpan {
    pub text: String,
    pub sentence_index: usize,
    /// Inclusive flattened-context token index.
    pub token_start: usize,
    /// Inclusive flattened-context token index.
    pub token_end: usize,
}

/// A coreference mention: an inclusive flattened-context token range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionSpan {
    pub text: String,
    pub tok_start: usize,
    pub tok_end: usize,
}

impl MentionSpan {
    pub fn positions(&self) -> std::ops::RangeInclusive<usize> {
        self.tok_start..=self.tok_end
    }
}

pub type CorefCluster = Vec<MentionSpan>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Skill {
    Comparison,
    Coreference,
    Other,
}

impl fmt::Display for Skill {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Skill::Comparison => "comparison",
            Skill::Coreference => "coreference",
            Skill::Other => "other",
        })
    }
}

/// Which token sequence an index set or score vector refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scope {
    #[serde(rename = "question_tokens")]
    Question,
    #[serde(rename = "context_tokens")]
    Context,
    #[serde(rename = "all")]
    All,
}

/// Question-side annotations driving partitions and counterfactuals.
///
/// All index sets refer to question token positions and are pairwise disjoint.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionAnnotations {
    #[serde(default)]
    pub comparison_operator: BTreeSet<usize>,
    #[serde(default)]
    pub compared_entities: Vec<BTreeSet<usize>>,
    #[serde(default)]
    pub value_tokens: BTreeSet<usize>,
    #[serde(default)]
    pub verb_tokens: BTreeSet<usize>,
    /// Set when automatic annotation found fewer than two compared entities.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub unannotatable: bool,
}

impl QuestionAnnotations {
    pub fn is_disjoint(&self) -> bool {
        let mut seen = BTreeSet::new();
        let sets = std::iter::once(&self.comparison_operator)
            .chain(self.compared_entities.iter())
            .chain([&self.value_tokens, &self.verb_tokens]);
        for set in sets {
            for &i in set {
                if !seen.insert(i) {
                    return false;
                }
            }
        }
        true
    }

    /// Every index mentioned by any set.
    pub fn all_indices(&self) -> BTreeSet<usize> {
        let mut all = self.comparison_operator.clone();
        for e in &self.compared_entities {
            all.extend(e);
        }
        all.extend(&self.value_tokens);
        all.extend(&self.verb_tokens);
        all
    }
}

/// One reading-comprehension example.
#[derive(Debug, Clone, PartialEq)]
pub struct RCInstance {
    pub id: String,
    pub question_text: String,
    pub question: Vec<Token>,
    pub context: Vec<Sentence>,
    pub gold_answers: Vec<AnswerSpan>,
    pub skill: Skill,
    pub annotations: QuestionAnnotations,
    pub coref_clusters: Vec<CorefCluster>,
    /// Index into `coref_clusters` of the cluster containing the answer entity.
    pub relevant_cluster: Option<usize>,
}

impl RCInstance {
    pub fn context_len(&self) -> usize {
        self.context.iter().map(|s| s.tokens.len()).sum()
    }

    pub fn context_tokens(&self) -> impl Iterator<Item = &Token> {
        self.context.iter().flat_map(|s| s.tokens.iter())
    }

    pub fn context_words(&self) -> Vec<&str> {
        self.context_tokens().map(|t| t.text.as_str()).collect()
    }

    pub fn question_words(&self) -> Vec<&str> {
        self.question.iter().map(|t| t.text.as_str()).collect()
    }

    /// Question words followed by context words.
    pub fn all_words(&self) -> Vec<&str> {
        let mut words = self.question_words();
        words.extend(self.context_words());
        words
    }

    pub fn scope_len(&self, scope: Scope) -> usize {
        match scope {
            Scope::Question => self.question.len(),
            Scope::Context => self.context_len(),
            Scope::All => self.question.len() + self.context_len(),
        }
    }

    /// Half-open flattened ranges of each sentence.
    pub fn sentence_bounds(&self) -> Vec<(usize, usize)> {
        let mut start = 0;
        self.context
            .iter()
            .map(|s| {
                let r = (start, start + s.tokens.len());
                start = r.1;
                r
            })
            .collect()
    }

    /// Map a flattened context position to `(sentence, position in sentence)`.
    pub fn locate(&self, flat: usize) -> Option<(usize, usize)> {
        let mut start = 0;
        for (si, s) in self.context.iter().enumerate() {
            if flat < start + s.tokens.len() {
                return Some((si, flat - start));
            }
            start += s.tokens.len();
        }
        None
    }

    /// Source text of an inclusive flattened range lying inside one sentence.
    pub fn span_text(&self, start: usize, end: usize) -> Result<String> {
        let (si, a) = self
            .locate(start)
            .ok_or_else(|| Error::instance(&self.id, format!("token {start} out of range")))?;
        let (sj, b) = self
            .locate(end)
            .ok_or_else(|| Error::instance(&self.id, format!("token {end} out of range")))?;
        if si != sj || a > b {
            return Err(Error::instance(
                &self.id,
                format!("span {start}..={end} is not inside a single sentence"),
            ));
        }
        Ok(text::layout(&self.context[si].tokens[a..=b]))
    }

    /// Build an [`AnswerSpan`] for an inclusive flattened range.
    pub fn span(&self, start: usize, end: usize) -> Result<AnswerSpan> {
        let text = self.span_text(start, end)?;
        let (sentence_index, _) = self.locate(start).expect("checked by span_text");
        Ok(AnswerSpan {
            text,
            sentence_index,
            token_start: start,
            token_end: end,
        })
    }

    /// First occurrence of `phrase` (compared word-by-word, case-folded) inside
    /// a single sentence. Sentences with `prefer` set are searched first.
    pub fn find_phrase(&self, phrase: &[&str], prefer_supporting: bool) -> Option<(usize, usize)> {
        if phrase.is_empty() {
            return None;
        }
        let needle: Vec<String> = phrase.iter().map(|w| text::key(w)).collect();
        let bounds = self.sentence_bounds();
        let mut order: Vec<usize> = (0..self.context.len()).collect();
        if prefer_supporting {
            order.sort_by_key(|&i| !self.context[i].is_supporting_fact);
        }
        for si in order {
            let keys: Vec<String> = self.context[si].tokens.iter().map(|t| text::key(&t.text)).collect();
            if let Some(pos) = keys.windows(needle.len()).position(|w| w == needle.as_slice()) {
                let start = bounds[si].0 + pos;
                return Some((start, start + needle.len() - 1));
            }
        }
        None
    }

    /// Anchor an answer string in the context, preferring supporting sentences.
    pub fn anchor_answer(&self, answer: &str) -> Option<AnswerSpan> {
        let toks = text::tokenize(answer);
        let words: Vec<&str> = toks.iter().map(|t| t.text.as_str()).collect();
        let (s, e) = self.find_phrase(&words, true)?;
        self.span(s, e).ok()
    }

    /// Recompute flattened context indices after sentences were added or removed.
    pub fn reindex_context(&mut self) {
        let mut i = 0;
        for s in &mut self.context {
            for t in &mut s.tokens {
                t.index = i;
                i += 1;
            }
        }
    }

    pub fn gold_texts(&self) -> Vec<&str> {
        self.gold_answers.iter().map(|a| a.text.as_str()).collect()
    }

    /// Check the structural invariants of the instance.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::instance(&self.id, m));
        if self.question.is_empty() {
            return fail("empty question".into());
        }
        check_sequence(&self.question, 0).map_err(|m| Error::instance(&self.id, format!("question: {m}")))?;
        let mut next = 0;
        for (si, s) in self.context.iter().enumerate() {
            if s.tokens.is_empty() {
                return fail(format!("sentence {si} has no tokens"));
            }
            check_sequence(&s.tokens, next)
                .map_err(|m| Error::instance(&self.id, format!("sentence {si}: {m}")))?;
            next += s.tokens.len();
        }
        if self.gold_answers.is_empty() {
            return fail("no gold answers".into());
        }
        for a in &self.gold_answers {
            if a.token_start > a.token_end {
                return fail(format!("answer {:?} has start after end", a.text));
            }
            let span = self.span(a.token_start, a.token_end)?;
            if span.sentence_index != a.sentence_index
                || crate::metrics::normalize_answer(&span.text)
                    != crate::metrics::normalize_answer(&a.text)
            {
                return fail(format!("answer {:?} does not match its span {:?}", a.text, span.text));
            }
        }
        if self.skill == Skill::Comparison && self.annotations.comparison_operator.is_empty() {
            return fail("comparison instance without an operator".into());
        }
        if !self.annotations.is_disjoint() {
            return fail("annotation sets overlap".into());
        }
        if self.annotations.all_indices().iter().any(|&i| i >= self.question.len()) {
            return fail("annotation index out of range".into());
        }
        let n = self.context_len();
        for c in &self.coref_clusters {
            for m in c {
                if m.tok_start > m.tok_end || m.tok_end >= n {
                    return fail(format!("mention {:?} out of range", m.text));
                }
            }
        }
        if let Some(r) = self.relevant_cluster {
            if r >= self.coref_clusters.len() {
                return fail("relevant cluster index out of range".into());
            }
        }
        Ok(())
    }
}

fn check_sequence(tokens: &[Token], first_index: usize) -> std::result::Result<(), String> {
    let mut prev_end = 0;
    for (i, t) in tokens.iter().enumerate() {
        if t.index != first_index + i {
            return Err(format!("token {:?} has index {} (expected {})", t.text, t.index, first_index + i));
        }
        if t.char_start >= t.char_end || t.char_end - t.char_start != t.text.chars().count() {
            return Err(format!("token {:?} has inconsistent offsets", t.text));
        }
        if i > 0 && t.char_start < prev_end {
            return Err(format!("token {:?} overlaps its predecessor", t.text));
        }
        prev_end = t.char_end;
    }
    Ok(())
}

/// Replace the tokens at `range` of a token sequence with a re-tokenized
/// `replacement`, shifting later offsets and indices. Returns the new tokens.
pub fn splice_tokens(
    tokens: &[Token],
    range: std::ops::Range<usize>,
    replacement: &str,
) -> Vec<Token> {
    let first_index = tokens.first().map_or(0, |t| t.index);
    let anchor = tokens.get(range.start).map_or_else(
        || tokens.last().map_or(0, |t| t.char_end + 1),
        |t| t.char_start,
    );
    let removed_end = if range.is_empty() {
        anchor
    } else {
        tokens[range.end - 1].char_end
    };
    let mut inserted = text::tokenize(replacement);
    for t in &mut inserted {
        t.char_start += anchor;
        t.char_end += anchor;
    }
    let new_end = inserted.last().map_or(anchor, |t| t.char_end);
    let shift = new_end as isize - removed_end as isize;

    let mut out: Vec<Token> = tokens[..range.start].to_vec();
    out.extend(inserted);
    for t in &tokens[range.end..] {
        let mut t = t.clone();
        t.char_start = (t.char_start as isize + shift) as usize;
        t.char_end = (t.char_end as isize + shift) as usize;
        out.push(t);
    }
    for (i, t) in out.iter_mut().enumerate() {
        t.index = first_index + i;
    }
    out
}

/// Convenience constructor for instances built from plain text.
#[derive(Debug, Clone)]
pub struct InstanceBuilder {
    id: String,
    question: String,
    sentences: Vec<Sentence>,
    answers: Vec<String>,
    skill: Skill,
    clusters: Vec<Vec<String>>,
}

impl InstanceBuilder {
    pub fn new(id: impl Into<String>, question: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            question: question.into(),
            sentences: Vec::new(),
            answers: Vec::new(),
            skill: Skill::Other,
            clusters: Vec::new(),
        }
    }

    pub fn sentence(mut self, text: &str, supporting: bool, paragraph_id: &str) -> Self {
        self.sentences.push(Sentence::new(text, supporting, paragraph_id));
        self
    }

    /// Split a paragraph into sentences, all sharing one flag and paragraph id.
    pub fn paragraph(mut self, text: &str, supporting: bool, paragraph_id: &str) -> Self {
        for (_, s) in text::split_sentences(text) {
            self.sentences.push(Sentence::new(&s, supporting, paragraph_id));
        }
        self
    }

    pub fn answer(mut self, text: impl Into<String>) -> Self {
        self.answers.push(text.into());
        self
    }

    pub fn skill(mut self, skill: Skill) -> Self {
        self.skill = skill;
        self
    }

    /// A coreference cluster given as mention strings; each mention is
    /// anchored at its next unused occurrence in reading order.
    pub fn cluster<S: AsRef<str>>(mut self, mentions: &[S]) -> Self {
        self.clusters.push(mentions.iter().map(|m| m.as_ref().to_string()).collect());
        self
    }

    pub fn build(self) -> Result<RCInstance> {
        let question = text::tokenize(&self.question);
        let mut inst = RCInstance {
            id: self.id,
            question_text: self.question,
            question,
            context: self.sentences,
            gold_answers: Vec::new(),
            skill: self.skill,
            annotations: QuestionAnnotations::default(),
            coref_clusters: Vec::new(),
            relevant_cluster: None,
        };
        inst.reindex_context();
        for a in &self.answers {
            let span = inst
                .anchor_answer(a)
                .ok_or_else(|| Error::instance(&inst.id, format!("answer {a:?} not found in context")))?;
            inst.gold_answers.push(span);
        }
        let words: Vec<String> = inst.context_words().iter().map(|w| text::key(w)).collect();
        let mut used = vec![false; words.len()];
        for cluster in &self.clusters {
            let mut mentions = Vec::new();
            for m in cluster {
                let needle: Vec<String> = text::tokenize(m).iter().map(|t| text::key(&t.text)).collect();
                let hit = (0..words.len().saturating_sub(needle.len() - 1)).find(|&p| {
                    words[p..p + needle.len()] == needle[..] && !used[p..p + needle.len()].iter().any(|u| *u)
                });
                let p = hit.ok_or_else(|| Error::instance(&inst.id, format!("mention {m:?} not found")))?;
                used[p..p + needle.len()].iter_mut().for_each(|u| *u = true);
                mentions.push(MentionSpan {
                    text: inst.span_text(p, p + needle.len() - 1)?,
                    tok_start: p,
                    tok_end: p + needle.len() - 1,
                });
            }
            inst.coref_clusters.push(mentions);
        }
        inst.validate()?;
        Ok(inst)
    }
}

/// Aggregate extractive-QA scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub f1: f64,
    pub exact_match: f64,
    pub n_instances: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obama() -> RCInstance {
        InstanceBuilder::new("obama", "Who was born in Hawaii?")
            .paragraph(
                "Barack Obama was the 44th president of the US. He was born in Hawaii.",
                true,
                "p0",
            )
            .answer("Barack Obama")
            .skill(Skill::Coreference)
            .cluster(&["Barack Obama", "He"])
            .build()
            .unwrap()
    }

    #[test]
    fn builder_anchors_answers_and_mentions() {
        let inst = obama();
        assert_eq!(inst.context.len(), 2);
        assert_eq!(inst.gold_answers[0].token_start, 0);
        assert_eq!(inst.gold_answers[0].token_end, 1);
        assert_eq!(inst.coref_clusters[0][1].tok_start, 10);
        assert_eq!(inst.context[1].tokens[0].index, 10);
        assert_eq!(inst.context[1].text(), "He was born in Hawaii.");
    }

    #[test]
    fn missing_answer_is_an_error() {
        let err = InstanceBuilder::new("x", "Who?")
            .sentence("Nobody here.", true, "p")
            .answer("Somebody")
            .build()
            .unwrap_err();
        assert_eq!(err.instance_id(), Some("x"));
    }

    #[test]
    fn span_across_sentences_rejected() {
        let inst = obama();
        assert!(inst.span_text(8, 11).is_err());
        assert_eq!(inst.span_text(3, 5).unwrap(), "the 44th president");
    }

    #[test]
    fn splice_shifts_following_tokens() {
        let toks = text::tokenize("Which film came out earlier, A or B?");
        let out = splice_tokens(&toks, 4..5, "more recently");
        assert_eq!(text::layout(&out), "Which film came out more recently, A or B?");
        assert!(out.iter().enumerate().all(|(i, t)| t.index == i));
        let back = splice_tokens(&out, 4..6, "earlier");
        assert_eq!(back, toks);
    }

    #[test]
    fn overlapping_annotations_detected() {
        let mut inst = obama();
        inst.annotations.verb_tokens.insert(2);
        inst.annotations.value_tokens.insert(2);
        assert!(inst.validate().is_err());
    }
}
