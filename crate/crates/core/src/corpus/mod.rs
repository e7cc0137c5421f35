//! Dataset loading, context reduction, and subset selection.

mod adapters;
pub mod annotate;
pub mod coref;
pub mod lexicon;
pub mod unified;

use std::fmt;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{RCInstance, Skill};

pub use annotate::{annotate_question, filter_comparison, EntityMatcher, PosTagger, RuleVerbTagger, SurfaceEntityMatcher};
pub use coref::{filter_coref_answer_in_cluster, CorefResolver, RuleCorefResolver};
pub use lexicon::{ComparativeLexicon, LexiconEntry};
pub use unified::{read_records, save_instances, write_instances, RecordProblem, UnifiedRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    Unified,
    SquadLike,
    HotpotLike,
    Wiki2hopLike,
    QuorefLike,
}

impl DatasetFormat {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "unified" => Self::Unified,
            "squad_like" | "squad" => Self::SquadLike,
            "hotpot_like" | "hotpot" => Self::HotpotLike,
            "wiki2hop_like" | "wiki2hop" => Self::Wiki2hopLike,
            "quoref_like" | "quoref" => Self::QuorefLike,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextMode {
    SupportingFacts,
    Paragraphs,
}

impl ContextMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "supporting_facts" => Some(Self::SupportingFacts),
            "paragraphs" => Some(Self::Paragraphs),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetDescriptor {
    pub name: String,
    pub path: PathBuf,
    pub format: DatasetFormat,
    pub context_mode: ContextMode,
}

impl DatasetDescriptor {
    pub fn new(path: impl Into<PathBuf>, format: DatasetFormat, context_mode: ContextMode) -> Self {
        let path = path.into();
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self {
            name,
            path,
            format,
            context_mode,
        }
    }
}

/// Why a record was left out of a load.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", content = "detail", rename_all = "snake_case")]
pub enum SkipReason {
    Unanswerable,
    Malformed(String),
    AnswerNotFound(String),
    NotComparison(String),
    OutsideSupportingFacts(String),
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SkipReason::Unanswerable => f.write_str("unanswerable"),
            SkipReason::Malformed(m) => write!(f, "malformed: {m}"),
            SkipReason::AnswerNotFound(a) => write!(f, "answer not found in context: {a:?}"),
            SkipReason::NotComparison(t) => write!(f, "question type {t:?} is not comparison"),
            SkipReason::OutsideSupportingFacts(m) => write!(f, "not usable with supporting facts: {m}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedRecord {
    pub index: usize,
    pub id: String,
    #[serde(flatten)]
    pub reason: SkipReason,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub records: usize,
    pub loaded: usize,
    pub skipped: Vec<SkippedRecord>,
}

/// Load a dataset, returning the usable instances and a report of what was
/// skipped. Structurally malformed records abort the load.
pub fn load_dataset(desc: &DatasetDescriptor) -> Result<(Vec<RCInstance>, LoadReport)> {
    let path = desc.path.as_path();
    let converted: Vec<(String, adapters::Converted)> = match desc.format {
        DatasetFormat::Unified => {
            let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
            let records = read_records(BufReader::new(file), path)?;
            records
                .iter()
                .map(|r| {
                    let c = r.to_instance().map_err(|p| match p {
                        RecordProblem::Malformed(m) => SkipReason::Malformed(m),
                        RecordProblem::AnswerNotFound(a) => SkipReason::AnswerNotFound(a),
                    });
                    (r.id.clone(), c)
                })
                .collect()
        }
        DatasetFormat::SquadLike | DatasetFormat::QuorefLike => {
            let skill = if desc.format == DatasetFormat::QuorefLike {
                Skill::Coreference
            } else {
                Skill::Other
            };
            let raw = adapters::read_to_string(path)?;
            adapters::read_squad_like(&raw, skill).map_err(|e| malformed(path, 0, e.to_string()))?
        }
        DatasetFormat::HotpotLike | DatasetFormat::Wiki2hopLike => {
            let raw = adapters::read_to_string(path)?;
            adapters::read_multihop(&raw).map_err(|(i, m)| malformed(path, i, m))?
        }
    };

    let mut report = LoadReport {
        records: converted.len(),
        ..Default::default()
    };
    let mut out = Vec::new();
    for (index, (id, c)) in converted.into_iter().enumerate() {
        let reduced = c.and_then(|inst| {
            reduce_context(&inst, desc.context_mode)
                .map_err(|e| SkipReason::OutsideSupportingFacts(e.to_string()))
        });
        match reduced {
            Ok(inst) => out.push(inst),
            Err(SkipReason::Malformed(m)) => return Err(malformed(path, index, format!("{id}: {m}"))),
            Err(reason) => report.skipped.push(SkippedRecord { index, id, reason }),
        }
    }
    report.loaded = out.len();
    Ok((out, report))
}

fn malformed(path: &Path, index: usize, message: String) -> Error {
    Error::Malformed {
        path: path.to_path_buf(),
        index,
        message,
    }
}

/// Restrict the context to supporting-fact sentences (or return the
/// instance unchanged in paragraphs mode).
///
/// Mentions outside the surviving sentences are dropped, as are clusters
/// left empty.
pub fn reduce_context(instance: &RCInstance, mode: ContextMode) -> Result<RCInstance> {
    if mode == ContextMode::Paragraphs {
        return Ok(instance.clone());
    }
    let bounds = instance.sentence_bounds();
    let keep: Vec<usize> = (0..instance.context.len())
        .filter(|&i| instance.context[i].is_supporting_fact)
        .collect();
    if keep.is_empty() {
        return Err(Error::instance(&instance.id, "no supporting-fact sentences"));
    }
    // old flat index -> new flat index
    let mut remap = vec![None; instance.context_len()];
    let mut next = 0;
    for &si in &keep {
        for old in bounds[si].0..bounds[si].1 {
            remap[old] = Some(next);
            next += 1;
        }
    }
    let sentence_of: Vec<Option<usize>> = (0..instance.context.len())
        .map(|si| keep.iter().position(|&k| k == si))
        .collect();

    let mut out = instance.clone();
    out.context = keep.iter().map(|&i| instance.context[i].clone()).collect();
    out.reindex_context();

    out.gold_answers.clear();
    for a in &instance.gold_answers {
        match (remap[a.token_start], remap[a.token_end], sentence_of[a.sentence_index]) {
            (Some(s), Some(e), Some(si)) => {
                let mut a = a.clone();
                a.token_start = s;
                a.token_end = e;
                a.sentence_index = si;
                out.gold_answers.push(a);
            }
            _ => {
                return Err(Error::instance(
                    &instance.id,
                    format!("answer {:?} lies outside the supporting facts", a.text),
                ))
            }
        }
    }

    out.coref_clusters.clear();
    out.relevant_cluster = None;
    for (ci, cluster) in instance.coref_clusters.iter().enumerate() {
        let kept: Vec<_> = cluster
            .iter()
            .filter_map(|m| {
                let (s, e) = (remap[m.tok_start]?, remap[m.tok_end]?);
                let mut m = m.clone();
                m.tok_start = s;
                m.tok_end = e;
                Some(m)
            })
            .collect();
        if kept.is_empty() {
            continue;
        }
        if instance.relevant_cluster == Some(ci) {
            out.relevant_cluster = Some(out.coref_clusters.len());
        }
        out.coref_clusters.push(kept);
    }
    out.validate()?;
    Ok(out)
}
