use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::unified::{UnifiedRecord, WireAnswer, WireQuestion, WireSentence};
use crate::error::{Error, Result};
use crate::types::RCInstance;

use super::{
    cf_id, perturb_comparison_with, validate_cf, AntonymTable, CFPair, DistributionTag, Perturbation,
    ReplacementChoice,
};

/// One line of a counterfactual file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfRecord {
    pub original_id: String,
    pub perturbation: Perturbation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replaced_operator: Option<(String, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbed_context: Option<Vec<WireSentence>>,
    pub new_answer: WireAnswer,
    pub distribution_tag: DistributionTag,
}

impl CfRecord {
    pub fn from_pair(pair: &CFPair) -> Self {
        let wire = UnifiedRecord::from_instance(&pair.perturbed);
        let gold = &pair.perturbed.gold_answers[0];
        Self {
            original_id: pair.original.id.clone(),
            perturbation: pair.perturbation,
            replaced_operator: pair.replaced_operator.clone(),
            perturbed_context: (pair.perturbation == Perturbation::ClusterInsertion).then_some(wire.context),
            new_answer: WireAnswer {
                text: gold.text.clone(),
                sent: Some(gold.sentence_index),
                tok_start: Some(gold.token_start),
                tok_end: Some(gold.token_end),
            },
            distribution_tag: pair.distribution_tag,
        }
    }

    /// Rebuild the pair against its original instance.
    pub fn to_pair(&self, original: &RCInstance) -> std::result::Result<CFPair, String> {
        let perturbed = match self.perturbation {
            Perturbation::AntonymSwap => {
                let (old, new) = self
                    .replaced_operator
                    .clone()
                    .ok_or("antonym swap without replaced_operator")?;
                let table = AntonymTable {
                    entries: BTreeMap::from([(old.to_lowercase(), vec![new])]),
                    distribution_tag: self.distribution_tag,
                };
                let mut p = perturb_comparison_with(original, &table, ReplacementChoice::First)
                    .map_err(|e| e.to_string())?
                    .perturbed;
                p.gold_answers = vec![self.anchor(&p)?];
                p
            }
            Perturbation::ClusterInsertion => {
                let context = self
                    .perturbed_context
                    .clone()
                    .ok_or("cluster insertion without perturbed_context")?;
                let rec = UnifiedRecord {
                    id: cf_id(&original.id),
                    question: WireQuestion {
                        text: Some(original.question_text.clone()),
                        tokens: None,
                    },
                    context,
                    answers: vec![self.new_answer.clone()],
                    skill: original.skill,
                    annotations: None,
                    coref_clusters: Vec::new(),
                };
                let mut p = rec.to_instance().map_err(|e| format!("{e:?}"))?;
                p.question = original.question.clone();
                p.annotations = original.annotations.clone();
                p
            }
        };
        Ok(CFPair {
            original: original.clone(),
            perturbed,
            perturbation: self.perturbation,
            distribution_tag: self.distribution_tag,
            replaced_operator: self.replaced_operator.clone(),
        })
    }

    fn anchor(&self, perturbed: &RCInstance) -> std::result::Result<crate::types::AnswerSpan, String> {
        let a = &self.new_answer;
        match (a.tok_start, a.tok_end) {
            (Some(s), Some(e)) => {
                let span = perturbed.span(s, e).map_err(|e| e.to_string())?;
                Ok(crate::types::AnswerSpan {
                    text: a.text.clone(),
                    ..span
                })
            }
            _ => perturbed
                .anchor_answer(&a.text)
                .ok_or_else(|| format!("new answer {:?} not in context", a.text)),
        }
    }
}

pub fn save_cf_pairs(path: &Path, pairs: &[CFPair]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for p in pairs {
        serde_json::to_writer(&mut w, &CfRecord::from_pair(p)).map_err(|e| Error::Internal(e.to_string()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_cf_records<R: BufRead>(reader: R, path: &Path) -> Result<Vec<CfRecord>> {
    let mut out = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Malformed {
            path: path.to_path_buf(),
            index,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Build and validate pairs from records; every failing pair id is listed
/// in the error.
pub fn pairs_from_records(records: &[CfRecord], originals: &[RCInstance]) -> Result<Vec<CFPair>> {
    let by_id: HashMap<&str, &RCInstance> = originals.iter().map(|i| (i.id.as_str(), i)).collect();
    let mut pairs = Vec::new();
    let mut bad = Vec::new();
    for rec in records {
        let built = by_id
            .get(rec.original_id.as_str())
            .ok_or_else(|| "unknown original".to_string())
            .and_then(|o| rec.to_pair(o));
        match built {
            Ok(p) if validate_cf(&p).is_empty() => pairs.push(p),
            _ => bad.push(rec.original_id.clone()),
        }
    }
    if bad.is_empty() {
        Ok(pairs)
    } else {
        Err(Error::InvalidPairs(bad))
    }
}

pub fn load_cf_pairs(path: &Path, originals: &[RCInstance]) -> Result<Vec<CFPair>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let records = read_cf_records(BufReader::new(file), path)?;
    pairs_from_records(&records, originals)
}

/// Load authored coreference counterfactuals (cluster insertions only).
pub fn load_manual_coref_cf(path: &Path, originals: &[RCInstance]) -> Result<Vec<CFPair>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let records = read_cf_records(BufReader::new(file), path)?;
    let wrong: Vec<String> = records
        .iter()
        .filter(|r| r.perturbation != Perturbation::ClusterInsertion)
        .map(|r| r.original_id.clone())
        .collect();
    if !wrong.is_empty() {
        return Err(Error::InvalidPairs(wrong));
    }
    pairs_from_records(&records, originals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{InstanceBuilder, Skill};

    fn gorecki() -> RCInstance {
        InstanceBuilder::new("gorecki", "What is the last name of the person who had an aunt in Auschwitz?")
            .sentence("Górecki said of the work, I had a grandfather who was in Dachau, an aunt in Auschwitz.", true, "p")
            .answer("Górecki")
            .skill(Skill::Coreference)
            .cluster(&["Górecki", "I"])
            .build()
            .unwrap()
    }

    fn record(context: &[&str], answer: &str) -> CfRecord {
        CfRecord {
            original_id: "gorecki".into(),
            perturbation: Perturbation::ClusterInsertion,
            replaced_operator: None,
            perturbed_context: Some(
                context
                    .iter()
                    .map(|t| WireSentence {
                        paragraph_id: "p".into(),
                        supporting: true,
                        tokens: None,
                        text: Some(t.to_string()),
                    })
                    .collect(),
            ),
            new_answer: WireAnswer {
                text: answer.into(),
                sent: None,
                tok_start: None,
                tok_end: None,
            },
            distribution_tag: DistributionTag::InDistribution,
        }
    }

    #[test]
    fn inserted_cluster_pair_is_valid() {
        let rec = record(
            &[
                "Górecki said of the work, I had a grandfather who was in Dachau.",
                "I had a nephew named Mike Wazowski.",
                "He had an aunt in Auschwitz.",
            ],
            "Wazowski",
        );
        let pairs = pairs_from_records(&[rec], &[gorecki()]).unwrap();
        assert_eq!(pairs[0].perturbed.gold_texts(), ["Wazowski"]);
    }

    #[test]
    fn dropping_old_answer_or_keeping_gold_rejected() {
        let dropped = record(&["I had a nephew named Mike Wazowski.", "He had an aunt in Auschwitz."], "Wazowski");
        let same = record(&["Górecki said of the work, I had an aunt in Auschwitz."], "Górecki");
        match pairs_from_records(&[dropped, same], &[gorecki()]) {
            Err(Error::InvalidPairs(ids)) => assert_eq!(ids.len(), 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn records_round_trip_through_files() {
        let rec = record(
            &["Górecki said of the work.", "I had a nephew named Mike Wazowski.", "He had an aunt in Auschwitz."],
            "Wazowski",
        );
        let pairs = pairs_from_records(&[rec], &[gorecki()]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cf.jsonl");
        save_cf_pairs(&path, &pairs).unwrap();
        let again = load_manual_coref_cf(&path, &[gorecki()]).unwrap();
        assert_eq!(again, pairs);
    }
}
