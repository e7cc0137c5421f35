//! Summary tables written as CSV, one row per model, updated in place.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::partition::SkillStep;
use crate::saliency::Method;

pub const ALIGNMENT_COLUMNS: [&str; 4] = ["coreference_ig", "coreference_occ", "comparison_ig", "comparison_occ"];
pub const ACCURACY_COLUMNS: [&str; 4] = ["comparison_f1", "comparison_em", "coreference_f1", "coreference_em"];
pub const CF_COLUMNS: [&str; 4] = ["coreference_og", "coreference_cf", "comparison_og", "comparison_cf"];

fn step_name(step: SkillStep) -> Result<&'static str> {
    match step {
        SkillStep::CoreferenceResolution => Ok("coreference"),
        SkillStep::ComparisonOperation => Ok("comparison"),
        SkillStep::Random => Err(Error::InvalidInput("random partitions have no table column".into())),
    }
}

pub fn alignment_column(step: SkillStep, method: Method) -> Result<String> {
    Ok(format!("{}_{}", step_name(step)?, method.short()))
}

pub fn percent(x: f64, decimals: usize) -> String {
    format!("{:.*}", decimals, 100.0 * x)
}

/// A CSV keyed by its first column (`model`).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelTable {
    pub columns: Vec<String>,
    pub rows: BTreeMap<String, BTreeMap<String, String>>,
}

impl ModelTable {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: BTreeMap::new(),
        }
    }

    /// Read `path` if it exists, keeping any extra columns it already has.
    pub fn load_or_new(path: &Path, columns: &[&str]) -> Result<Self> {
        let mut table = Self::new(columns);
        if !path.exists() {
            return Ok(table);
        }
        let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| csv_err(path, e))?
            .iter()
            .map(str::to_string)
            .collect();
        if header.first().map(String::as_str) != Some("model") {
            return Err(Error::InvalidInput(format!("{}: first column must be model", path.display())));
        }
        for c in &header[1..] {
            if !table.columns.contains(c) {
                table.columns.push(c.clone());
            }
        }
        for rec in rdr.records() {
            let rec = rec.map_err(|e| csv_err(path, e))?;
            let row = table.rows.entry(rec.get(0).unwrap_or_default().to_string()).or_default();
            for (c, v) in header[1..].iter().zip(rec.iter().skip(1)) {
                if !v.is_empty() {
                    row.insert(c.clone(), v.to_string());
                }
            }
        }
        Ok(table)
    }

    pub fn set(&mut self, model: &str, column: &str, value: String) {
        if !self.columns.iter().any(|c| c == column) {
            self.columns.push(column.to_string());
        }
        self.rows.entry(model.to_string()).or_default().insert(column.to_string(), value);
    }

    pub fn get(&self, model: &str, column: &str) -> Option<&str> {
        self.rows.get(model)?.get(column).map(String::as_str)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        let mut header = vec!["model".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header).map_err(|e| csv_err(path, e))?;
        for (model, cells) in &self.rows {
            let mut rec = vec![model.clone()];
            rec.extend(self.columns.iter().map(|c| cells.get(c).cloned().unwrap_or_default()));
            w.write_record(&rec).map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::InvalidInput(format!("{}: {e}", path.display()))
}

/// Write one alignment score (as a percentage) into the model-by-skill table.
pub fn upsert_alignment(path: &Path, model: &str, step: SkillStep, method: Method, score: f64) -> Result<()> {
    let mut t = ModelTable::load_or_new(path, &ALIGNMENT_COLUMNS)?;
    t.set(model, &alignment_column(step, method)?, percent(score, 1));
    t.save(path)
}

/// Write macro F1 and EM for one skill subset.
pub fn upsert_accuracy(path: &Path, model: &str, step: SkillStep, f1: f64, em: f64) -> Result<()> {
    let mut t = ModelTable::load_or_new(path, &ACCURACY_COLUMNS)?;
    let s = step_name(step)?;
    t.set(model, &format!("{s}_f1"), percent(f1, 2));
    t.set(model, &format!("{s}_em"), percent(em, 2));
    t.save(path)
}

/// Write original and counterfactual EM for one skill subset.
pub fn upsert_cf_accuracy(path: &Path, model: &str, step: SkillStep, original_em: f64, cf_em: f64) -> Result<()> {
    let mut t = ModelTable::load_or_new(path, &CF_COLUMNS)?;
    let s = step_name(step)?;
    t.set(model, &format!("{s}_og"), percent(original_em, 2));
    t.set(model, &format!("{s}_cf"), percent(cf_em, 2));
    t.save(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upsert_keeps_other_cells() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("alignment.csv");
        upsert_alignment(&p, "toy:1", SkillStep::CoreferenceResolution, Method::IntegratedGradients, 2.0 / 3.0).unwrap();
        upsert_alignment(&p, "toy:1", SkillStep::ComparisonOperation, Method::Occlusion, 0.25).unwrap();
        upsert_alignment(&p, "toy:2", SkillStep::ComparisonOperation, Method::Occlusion, 0.5).unwrap();
        upsert_alignment(&p, "toy:1", SkillStep::ComparisonOperation, Method::Occlusion, 0.3).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(
            text,
            "model,coreference_ig,coreference_occ,comparison_ig,comparison_occ\n\
             toy:1,66.7,,,30.0\n\
             toy:2,,,,50.0\n"
        );
    }

    #[test]
    fn accuracy_columns() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("acc.csv");
        upsert_accuracy(&p, "m", SkillStep::CoreferenceResolution, 0.5, 0.25).unwrap();
        let t = ModelTable::load_or_new(&p, &ACCURACY_COLUMNS).unwrap();
        assert_eq!(t.get("m", "coreference_f1"), Some("50.00"));
        assert_eq!(t.get("m", "comparison_em"), None);
        assert!(upsert_accuracy(&p, "m", SkillStep::Random, 0.5, 0.5).is_err());
    }
}
