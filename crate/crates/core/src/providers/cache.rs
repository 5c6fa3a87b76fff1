//! Content-addressed result caches. Keys are the content hash of
//! `(provider_id, model_name, operation, inputs...)`; reads run concurrently,
//! writes are serialized.

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::providers::{EmbeddingProvider, NliProvider, NliScores};
use crate::text::content_hash;

pub struct CachedNli {
    inner: Arc<dyn NliProvider>,
    map: RwLock<HashMap<String, NliScores>>,
}

#[derive(Serialize, Deserialize)]
struct NliCacheLine {
    key: String,
    scores: NliScores,
}

impl CachedNli {
    pub fn new(inner: Arc<dyn NliProvider>) -> Self {
        Self {
            inner,
            map: RwLock::new(HashMap::new()),
        }
    }

    fn key(&self, premise: &str, hypothesis: &str) -> String {
        content_hash(&[
            self.inner.provider_id(),
            self.inner.model_name(),
            "nli",
            premise,
            hypothesis,
        ])
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("nli cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Loads previously persisted entries; a missing file is not an error.
    pub fn load(&self, path: &Path) -> Result<usize> {
        if !path.exists() {
            return Ok(0);
        }
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut map = self.map.write().expect("nli cache poisoned");
        let mut n = 0;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: NliCacheLine = serde_json::from_str(line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
            map.insert(entry.key, entry.scores);
            n += 1;
        }
        Ok(n)
    }

    /// Writes all entries sorted by key, so the file is reproducible.
    pub fn save(&self, path: &Path) -> Result<()> {
        let map = self.map.read().expect("nli cache poisoned");
        let mut keys: Vec<&String> = map.keys().collect();
        keys.sort();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for k in keys {
            let line = serde_json::to_string(&NliCacheLine {
                key: k.clone(),
                scores: map[k],
            })
            .map_err(|e| Error::invalid(e.to_string()))?;
            writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

impl NliProvider for CachedNli {
    fn provider_id(&self) -> &str {
        self.inner.provider_id()
    }

    fn model_name(&self) -> &str {
        self.inner.model_name()
    }

    fn normalized(&self) -> bool {
        self.inner.normalized()
    }

    fn score_pairs(&self, pairs: &[(&str, &str)]) -> Result<Vec<NliScores>> {
        let keys: Vec<String> = pairs.iter().map(|(p, h)| self.key(p, h)).collect();
        let mut out: Vec<Option<NliScores>> = {
            let map = self.map.read().expect("nli cache poisoned");
            keys.iter().map(|k| map.get(k).copied()).collect()
        };
        let missing: Vec<usize> = (0..pairs.len()).filter(|&i| out[i].is_none()).collect();
        if !missing.is_empty() {
            let query: Vec<(&str, &str)> = missing.iter().map(|&i| pairs[i]).collect();
            let fresh = self.inner.score_pairs(&query)?;
            if fresh.len() != query.len() {
                return Err(Error::provider(
                    self.inner.provider_id(),
                    format!("returned {} results for {} inputs", fresh.len(), query.len()),
                ));
            }
            let mut map = self.map.write().expect("nli cache poisoned");
            for (&i, s) in missing.iter().zip(fresh) {
                map.insert(keys[i].clone(), s);
                out[i] = Some(s);
            }
        }
        Ok(out.into_iter().map(|s| s.expect("filled above")).collect())
    }
}

pub struct CachedEmbedder {
    inner: Arc<dyn EmbeddingProvider>,
    map: RwLock<HashMap<String, Vec<f64>>>,
}

impl CachedEmbedder {
    pub fn new(inner: Arc<dyn EmbeddingProvider>) -> Self {
        Self {
            inner,
            map: RwLock::new(HashMap::new()),
        }
    }

    fn key(&self, text: &str) -> String {
        content_hash(&[
            self.inner.provider_id(),
            self.inner.model_name(),
            "embed",
            text,
        ])
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("embedding cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl EmbeddingProvider for CachedEmbedder {
    fn provider_id(&self) -> &str {
        self.inner.provider_id()
    }

    fn model_name(&self) -> &str {
        self.inner.model_name()
    }

    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn max_chars(&self) -> Option<usize> {
        self.inner.max_chars()
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let keys: Vec<String> = texts.iter().map(|t| self.key(t)).collect();
        let mut out: Vec<Option<Vec<f64>>> = {
            let map = self.map.read().expect("embedding cache poisoned");
            keys.iter().map(|k| map.get(k).cloned()).collect()
        };
        let missing: Vec<usize> = (0..texts.len()).filter(|&i| out[i].is_none()).collect();
        if !missing.is_empty() {
            let query: Vec<String> = missing.iter().map(|&i| texts[i].clone()).collect();
            let fresh = self.inner.embed(&query)?;
            if fresh.len() != query.len() {
                return Err(Error::provider(
                    self.inner.provider_id(),
                    format!("returned {} vectors for {} inputs", fresh.len(), query.len()),
                ));
            }
            let mut map = self.map.write().expect("embedding cache poisoned");
            for (&i, v) in missing.iter().zip(fresh) {
                map.insert(keys[i].clone(), v.clone());
                out[i] = Some(v);
            }
        }
        Ok(out.into_iter().map(|v| v.expect("filled above")).collect())
    }
}
