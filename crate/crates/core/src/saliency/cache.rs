use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Method, SaliencyMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub model_id: String,
    pub method: Method,
    pub config_hash: String,
    pub instance_id: String,
    pub map: SaliencyMap,
}

type Key = (String, Method, String, String);

/// JSON-lines store of saliency maps keyed by model, method, config hash
/// and instance id. New entries are appended on [`SaliencyCache::flush`].
#[derive(Debug, Default)]
pub struct SaliencyCache {
    path: Option<PathBuf>,
    entries: HashMap<Key, SaliencyMap>,
    pending: Vec<CacheRecord>,
}

impl SaliencyCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Open (or start) a cache file.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let mut cache = Self {
            path: Some(path.clone()),
            ..Default::default()
        };
        if !path.exists() {
            return Ok(cache);
        }
        let file = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        for (index, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(&path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: CacheRecord = serde_json::from_str(&line).map_err(|e| Error::Malformed {
                path: path.clone(),
                index,
                message: e.to_string(),
            })?;
            cache.entries.insert(
                (rec.model_id, rec.method, rec.config_hash, rec.instance_id),
                rec.map,
            );
        }
        Ok(cache)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, model_id: &str, method: Method, config_hash: &str, instance_id: &str) -> Option<&SaliencyMap> {
        self.entries
            .get(&(model_id.to_string(), method, config_hash.to_string(), instance_id.to_string()))
    }

    pub fn insert(&mut self, map: SaliencyMap) {
        let rec = CacheRecord {
            model_id: map.model_id.clone(),
            method: map.method,
            config_hash: map.config.hash(),
            instance_id: map.instance_id.clone(),
            map,
        };
        let key = (rec.model_id.clone(), rec.method, rec.config_hash.clone(), rec.instance_id.clone());
        self.entries.insert(key, rec.map.clone());
        self.pending.push(rec);
    }

    /// Append entries added since the last flush to the backing file.
    pub fn flush(&mut self) -> Result<()> {
        let Some(path) = &self.path else {
            self.pending.clear();
            return Ok(());
        };
        if self.pending.is_empty() {
            return Ok(());
        }
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for rec in self.pending.drain(..) {
            serde_json::to_writer(&mut w, &rec).map_err(|e| Error::Internal(e.to_string()))?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ToyModel;
    use crate::saliency::{saliency_maps, SaliencyConfig, Summarizer};
    use crate::types::InstanceBuilder;

    #[test]
    fn reloaded_maps_are_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let inst = InstanceBuilder::new("c", "Who was born in Hawaii?")
            .paragraph("Barack Obama was the 44th president of the US. He was born in Hawaii.", true, "p")
            .answer("Barack Obama")
            .build()
            .unwrap();
        let m = ToyModel::new(9);
        let cfg = SaliencyConfig::integrated_gradients(16, Summarizer::L2);
        let mut cache = SaliencyCache::open(&path).unwrap();
        let cold = saliency_maps(&m, std::slice::from_ref(&inst), &cfg, Some(&mut cache)).unwrap();
        cache.flush().unwrap();

        let mut reopened = SaliencyCache::open(&path).unwrap();
        assert_eq!(reopened.len(), 1);
        let warm = saliency_maps(&m, std::slice::from_ref(&inst), &cfg, Some(&mut reopened)).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&cold[0].scores), bits(&warm[0].scores));
        assert_eq!(cold, warm);
    }
}
