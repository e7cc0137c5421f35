//! Readers for the public JSON layouts of SQuAD-, HotpotQA-, 2WikiMultiHopQA-
//! and Quoref-style files.

use std::path::Path;

use serde::Deserialize;

use crate::metrics::normalize_answer;
use crate::text;
use crate::types::{AnswerSpan, QuestionAnnotations, RCInstance, Sentence, Skill};

use super::SkipReason;

/// Outcome of converting one source record.
pub(crate) type Converted = std::result::Result<RCInstance, SkipReason>;

#[derive(Debug, Deserialize)]
struct SquadFile {
    data: Vec<SquadArticle>,
}

#[derive(Debug, Deserialize)]
struct SquadArticle {
    #[serde(default)]
    title: String,
    paragraphs: Vec<SquadParagraph>,
}

#[derive(Debug, Deserialize)]
struct SquadParagraph {
    context: String,
    qas: Vec<SquadQa>,
}

#[derive(Debug, Deserialize)]
struct SquadQa {
    id: String,
    question: String,
    #[serde(default)]
    answers: Vec<SquadAnswer>,
    #[serde(default)]
    is_impossible: bool,
}

#[derive(Debug, Deserialize)]
struct SquadAnswer {
    text: String,
    answer_start: usize,
}

/// Parse a SQuAD-layout file (also used by Quoref). Returns one entry per
/// question in file order.
pub(crate) fn read_squad_like(raw: &str, skill: Skill) -> serde_json::Result<Vec<(String, Converted)>> {
    let file: SquadFile = serde_json::from_str(raw)?;
    let mut out = Vec::new();
    for (ai, article) in file.data.iter().enumerate() {
        for (pi, para) in article.paragraphs.iter().enumerate() {
            let paragraph_id = if article.title.is_empty() {
                format!("a{ai}p{pi}")
            } else {
                format!("{}#{pi}", article.title)
            };
            let split = text::split_sentences(&para.context);
            for qa in &para.qas {
                let converted = if qa.is_impossible || qa.answers.is_empty() {
                    Err(SkipReason::Unanswerable)
                } else {
                    squad_instance(qa, &split, &paragraph_id, skill)
                };
                out.push((qa.id.clone(), converted));
            }
        }
    }
    Ok(out)
}

fn squad_instance(
    qa: &SquadQa,
    split: &[(usize, String)],
    paragraph_id: &str,
    skill: Skill,
) -> Converted {
    let mut inst = RCInstance {
        id: qa.id.clone(),
        question_text: qa.question.trim().to_string(),
        question: text::tokenize(qa.question.trim()),
        context: split
            .iter()
            .map(|(_, s)| Sentence::new(s, false, paragraph_id))
            .collect(),
        gold_answers: Vec::new(),
        skill,
        annotations: QuestionAnnotations::default(),
        coref_clusters: Vec::new(),
        relevant_cluster: None,
    };
    inst.reindex_context();
    if inst.question.is_empty() || inst.context.is_empty() {
        return Err(SkipReason::Malformed("empty question or context".into()));
    }

    let mut seen = Vec::new();
    for a in &qa.answers {
        let norm = normalize_answer(&a.text);
        if seen.contains(&norm) {
            continue;
        }
        let span = anchor_by_offset(&inst, split, a).or_else(|| inst.anchor_answer(&a.text));
        match span {
            Some(span) => {
                seen.push(norm);
                inst.gold_answers.push(span);
            }
            None => return Err(SkipReason::AnswerNotFound(a.text.clone())),
        }
    }
    inst.validate().map_err(|e| SkipReason::Malformed(e.to_string()))?;
    Ok(inst)
}

/// Locate an answer from its paragraph character offset.
fn anchor_by_offset(inst: &RCInstance, split: &[(usize, String)], a: &SquadAnswer) -> Option<AnswerSpan> {
    let len = a.text.trim_end().chars().count();
    if len == 0 {
        return None;
    }
    let (first, last) = (a.answer_start, a.answer_start + len - 1);
    let si = split
        .iter()
        .position(|(offset, s)| *offset <= first && first < offset + s.chars().count())?;
    let offset = split[si].0;
    let toks = &inst.context[si].tokens;
    let s = toks.iter().position(|t| offset + t.char_end > first)?;
    let e = toks.iter().rposition(|t| offset + t.char_start <= last)?;
    if s > e {
        return None;
    }
    let base = inst.sentence_bounds()[si].0;
    let span = inst.span(base + s, base + e).ok()?;
    (normalize_answer(&span.text) == normalize_answer(&a.text)).then(|| AnswerSpan {
        text: a.text.trim().to_string(),
        ..span
    })
}

#[derive(Debug, Deserialize)]
struct MultiHopRecord {
    #[serde(rename = "_id")]
    id: String,
    question: String,
    answer: String,
    #[serde(default, rename = "type")]
    kind: Option<String>,
    #[serde(default)]
    supporting_facts: Vec<(String, usize)>,
    context: Vec<(String, Vec<String>)>,
}

/// Parse a HotpotQA- or 2WikiMultiHopQA-layout file (a JSON array).
///
/// Only records typed `comparison` are converted; others are skipped.
pub(crate) fn read_multihop(raw: &str) -> std::result::Result<Vec<(String, Converted)>, (usize, String)> {
    let values: Vec<serde_json::Value> = serde_json::from_str(raw).map_err(|e| (0, e.to_string()))?;
    let mut out = Vec::with_capacity(values.len());
    for (i, v) in values.into_iter().enumerate() {
        let rec: MultiHopRecord = serde_json::from_value(v).map_err(|e| (i, e.to_string()))?;
        let converted = match rec.kind.as_deref() {
            Some(k) if k != "comparison" => Err(SkipReason::NotComparison(k.to_string())),
            _ => multihop_instance(&rec),
        };
        out.push((rec.id.clone(), converted));
    }
    Ok(out)
}

fn multihop_instance(rec: &MultiHopRecord) -> Converted {
    let mut context = Vec::new();
    for (title, sentences) in &rec.context {
        for (si, s) in sentences.iter().enumerate() {
            let trimmed = s.trim();
            if trimmed.is_empty() {
                continue;
            }
            let supporting = rec.supporting_facts.iter().any(|(t, i)| t == title && *i == si);
            context.push(Sentence::new(trimmed, supporting, title.clone()));
        }
    }
    let mut inst = RCInstance {
        id: rec.id.clone(),
        question_text: rec.question.trim().to_string(),
        question: text::tokenize(rec.question.trim()),
        context,
        gold_answers: Vec::new(),
        skill: Skill::Other,
        annotations: QuestionAnnotations::default(),
        coref_clusters: Vec::new(),
        relevant_cluster: None,
    };
    inst.reindex_context();
    if inst.question.is_empty() || inst.context.is_empty() {
        return Err(SkipReason::Malformed("empty question or context".into()));
    }
    let span = inst
        .anchor_answer(&rec.answer)
        .ok_or_else(|| SkipReason::AnswerNotFound(rec.answer.clone()))?;
    inst.gold_answers.push(span);
    inst.validate().map_err(|e| SkipReason::Malformed(e.to_string()))?;
    Ok(inst)
}

pub(crate) fn read_to_string(path: &Path) -> crate::Result<String> {
    std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))
}
