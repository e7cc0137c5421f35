//! The unified JSON-lines instance schema.
//!
//! Writing always emits the full form (tokens with offsets, anchored answers).
//! Reading also accepts a lenient hand-authoring form: question or sentences
//! given as `text` only, and answers given without token positions.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::TokenPartition;
use crate::text;
use crate::types::{
    AnswerSpan, CorefCluster, QuestionAnnotations, RCInstance, Sentence, Skill, Token,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireToken {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireQuestion {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<WireToken>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireSentence {
    #[serde(default)]
    pub paragraph_id: String,
    #[serde(default)]
    pub supporting: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<WireToken>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireAnswer {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sent: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tok_start: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tok_end: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WireAnnotations {
    #[serde(flatten)]
    pub question: QuestionAnnotations,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevant_cluster: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub partitions: Vec<TokenPartition>,
}

/// One line of a unified instance file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnifiedRecord {
    pub id: String,
    pub question: WireQuestion,
    pub context: Vec<WireSentence>,
    pub answers: Vec<WireAnswer>,
    #[serde(default = "default_skill")]
    pub skill: Skill,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotations: Option<WireAnnotations>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub coref_clusters: Vec<CorefCluster>,
}

fn default_skill() -> Skill {
    Skill::Other
}

fn wire_tokens(tokens: &[Token]) -> Vec<WireToken> {
    tokens
        .iter()
        .map(|t| WireToken {
            text: t.text.clone(),
            start: t.char_start,
            end: t.char_end,
        })
        .collect()
}

fn tokens_from_wire(wire: &[WireToken], first_index: usize) -> Vec<Token> {
    wire.iter()
        .enumerate()
        .map(|(i, w)| Token {
            text: w.text.clone(),
            index: first_index + i,
            char_start: w.start,
            char_end: w.end,
        })
        .collect()
}

/// Why a well-formed record could not become an instance.
#[derive(Debug, Clone, PartialEq)]
pub enum RecordProblem {
    /// The record is structurally wrong (missing fields, bad offsets).
    Malformed(String),
    /// A gold answer could not be located in the context.
    AnswerNotFound(String),
}

impl UnifiedRecord {
    pub fn from_instance(inst: &RCInstance) -> Self {
        let annotations = WireAnnotations {
            question: inst.annotations.clone(),
            relevant_cluster: inst.relevant_cluster,
            partitions: Vec::new(),
        };
        let has_annotations = annotations != WireAnnotations::default();
        Self {
            id: inst.id.clone(),
            question: WireQuestion {
                text: Some(inst.question_text.clone()),
                tokens: Some(wire_tokens(&inst.question)),
            },
            context: inst
                .context
                .iter()
                .map(|s| WireSentence {
                    paragraph_id: s.paragraph_id.clone(),
                    supporting: s.is_supporting_fact,
                    tokens: Some(wire_tokens(&s.tokens)),
                    text: None,
                })
                .collect(),
            answers: inst
                .gold_answers
                .iter()
                .map(|a| WireAnswer {
                    text: a.text.clone(),
                    sent: Some(a.sentence_index),
                    tok_start: Some(a.token_start),
                    tok_end: Some(a.token_end),
                })
                .collect(),
            skill: inst.skill,
            annotations: has_annotations.then_some(annotations),
            coref_clusters: inst.coref_clusters.clone(),
        }
    }

    /// Attach partitions for audit output.
    pub fn with_partitions(mut self, partitions: Vec<TokenPartition>) -> Self {
        if !partitions.is_empty() {
            self.annotations.get_or_insert_with(Default::default).partitions = partitions;
        }
        self
    }

    pub fn partitions(&self) -> &[TokenPartition] {
        self.annotations.as_ref().map_or(&[], |a| &a.partitions)
    }

    pub fn to_instance(&self) -> std::result::Result<RCInstance, RecordProblem> {
        let inst = self.to_instance_unchecked()?;
        inst.validate().map_err(|e| match e {
            Error::Instance { message, .. } if message.contains("does not match its span") => {
                RecordProblem::AnswerNotFound(message)
            }
            other => RecordProblem::Malformed(other.to_string()),
        })?;
        Ok(inst)
    }

    /// Build the instance without checking text/offset consistency; used for
    /// model inputs whose words have been masked.
    pub fn to_instance_unchecked(&self) -> std::result::Result<RCInstance, RecordProblem> {
        let malformed = |m: String| RecordProblem::Malformed(m);
        let (question_text, question) = match (&self.question.text, &self.question.tokens) {
            (_, Some(toks)) => {
                let toks = tokens_from_wire(toks, 0);
                let txt = self.question.text.clone().unwrap_or_else(|| text::layout(&toks));
                (txt, toks)
            }
            (Some(txt), None) => (txt.clone(), text::tokenize(txt)),
            (None, None) => return Err(malformed("question has neither text nor tokens".into())),
        };

        let mut context = Vec::with_capacity(self.context.len());
        for (i, s) in self.context.iter().enumerate() {
            let tokens = match (&s.tokens, &s.text) {
                (Some(toks), _) => tokens_from_wire(toks, 0),
                (None, Some(txt)) => text::tokenize(txt),
                (None, None) => return Err(malformed(format!("sentence {i} has neither text nor tokens"))),
            };
            context.push(Sentence {
                tokens,
                is_supporting_fact: s.supporting,
                paragraph_id: s.paragraph_id.clone(),
            });
        }

        let annotations = self.annotations.clone().unwrap_or_default();
        let mut inst = RCInstance {
            id: self.id.clone(),
            question_text,
            question,
            context,
            gold_answers: Vec::new(),
            skill: self.skill,
            annotations: annotations.question,
            coref_clusters: self.coref_clusters.clone(),
            relevant_cluster: annotations.relevant_cluster,
        };
        inst.reindex_context();

        if self.answers.is_empty() {
            return Err(malformed("no answers".into()));
        }
        for a in &self.answers {
            let span = match (a.tok_start, a.tok_end) {
                (Some(s), Some(e)) => {
                    let span = inst
                        .span(s, e)
                        .map_err(|err| RecordProblem::AnswerNotFound(err.to_string()))?;
                    if let Some(sent) = a.sent {
                        if sent != span.sentence_index {
                            return Err(malformed(format!(
                                "answer {:?} claims sentence {sent} but lies in {}",
                                a.text, span.sentence_index
                            )));
                        }
                    }
                    AnswerSpan {
                        text: a.text.clone(),
                        ..span
                    }
                }
                _ => inst
                    .anchor_answer(&a.text)
                    .ok_or_else(|| RecordProblem::AnswerNotFound(a.text.clone()))?,
            };
            inst.gold_answers.push(span);
        }
        Ok(inst)
    }
}

/// Write instances as unified JSON lines.
pub fn write_instances<W: Write>(mut out: W, instances: &[RCInstance]) -> std::io::Result<()> {
    for inst in instances {
        serde_json::to_writer(&mut out, &UnifiedRecord::from_instance(inst))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_instances(path: &Path, instances: &[RCInstance]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_instances(&mut w, instances).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Parse unified JSON lines into raw records; blank lines are ignored.
pub fn read_records<R: BufRead>(reader: R, path: &Path) -> Result<Vec<UnifiedRecord>> {
    let mut out = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: UnifiedRecord = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            path: path.to_path_buf(),
            index,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}
