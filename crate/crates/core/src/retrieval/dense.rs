//! Exact cosine search over precomputed passage embeddings.
//!
//! The vector store persists as a binary sidecar:
//! `b"RGVS"`, u32 version, provider id, model name, u32 dim, u64 count, then per
//! entry: passage key, text hash, `dim` little-endian f64. Strings are
//! u32-length-prefixed UTF-8.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::corpus::{Corpus, PassageRef};
use crate::error::{Error, Result, ResultExt};
use crate::par;
use crate::providers::{self, EmbeddingProvider};
use crate::retrieval::{check_k, sort_and_rank, ScoredPassage};
use crate::text::content_hash;

const MAGIC: &[u8; 4] = b"RGVS";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct VectorStore {
    provider_id: String,
    model_name: String,
    dimension: usize,
    refs: Vec<PassageRef>,
    text_hashes: Vec<String>,
    vectors: Vec<Vec<f64>>,
}

fn text_hash(text: &str) -> String {
    content_hash(&[text])[..16].to_string()
}

impl VectorStore {
    /// Embeds every corpus passage in batches of `batch_size`.
    pub fn build(provider: &dyn EmbeddingProvider, corpus: &Corpus, batch_size: usize) -> Result<Self> {
        Self::build_reusing(provider, corpus, batch_size, None)
    }

    fn build_reusing(
        provider: &dyn EmbeddingProvider,
        corpus: &Corpus,
        batch_size: usize,
        previous: Option<&VectorStore>,
    ) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::config("embedding batch size must be positive"));
        }
        let dimension = provider.dimension();
        let hashes: Vec<String> = corpus.passages().iter().map(|p| text_hash(&p.text)).collect();
        let reuse: HashMap<String, (&str, &Vec<f64>)> = previous
            .filter(|s| {
                s.provider_id == provider.provider_id()
                    && s.model_name == provider.model_name()
                    && s.dimension == dimension
            })
            .map(|s| {
                s.refs
                    .iter()
                    .zip(&s.text_hashes)
                    .zip(&s.vectors)
                    .map(|((r, h), v)| (r.key(), (h.as_str(), v)))
                    .collect()
            })
            .unwrap_or_default();
        let mut vectors: Vec<Option<Vec<f64>>> = corpus
            .passages()
            .iter()
            .zip(&hashes)
            .map(|(p, h)| match reuse.get(&p.key()) {
                Some((old, v)) if old == h => Some((*v).clone()),
                _ => None,
            })
            .collect();
        let missing: Vec<usize> = (0..vectors.len()).filter(|&i| vectors[i].is_none()).collect();
        let batches: Vec<&[usize]> = missing.chunks(batch_size).collect();
        let embedded = par::try_map(&batches, |batch| {
            let texts: Vec<String> = batch
                .iter()
                .map(|&i| corpus.passages()[i].text.clone())
                .collect();
            providers::embed(provider, &texts).context_with(|| {
                format!(
                    "embedding passages {}..",
                    corpus.passages()[batch[0]].key()
                )
            })
        })?;
        for (batch, vs) in batches.iter().zip(embedded) {
            for (&i, v) in batch.iter().zip(vs) {
                vectors[i] = Some(v);
            }
        }
        Ok(Self {
            provider_id: provider.provider_id().to_string(),
            model_name: provider.model_name().to_string(),
            dimension,
            refs: corpus.passages().iter().map(|p| p.reference()).collect(),
            text_hashes: hashes,
            vectors: vectors.into_iter().map(|v| v.expect("all embedded")).collect(),
        })
    }

    /// Loads the sidecar at `path` when present, embeds whatever is missing
    /// or stale, and writes the sidecar back.
    pub fn load_or_build(
        provider: &dyn EmbeddingProvider,
        corpus: &Corpus,
        batch_size: usize,
        path: &Path,
    ) -> Result<Self> {
        let previous = if path.exists() { Some(Self::load(path)?) } else { None };
        let store = Self::build_reusing(provider, corpus, batch_size, previous.as_ref())?;
        if previous.as_ref() != Some(&store) {
            store.save(path)?;
        }
        Ok(store)
    }

    fn position(&self, r: &PassageRef) -> Option<usize> {
        self.refs.iter().position(|x| x == r)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.refs.is_empty()
    }

    pub fn vector(&self, r: &PassageRef) -> Option<&[f64]> {
        self.position(r).map(|i| self.vectors[i].as_slice())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        put_str(&mut buf, &self.provider_id);
        put_str(&mut buf, &self.model_name);
        buf.extend_from_slice(&(self.dimension as u32).to_le_bytes());
        buf.extend_from_slice(&(self.refs.len() as u64).to_le_bytes());
        for ((r, h), v) in self.refs.iter().zip(&self.text_hashes).zip(&self.vectors) {
            put_str(&mut buf, &r.key());
            put_str(&mut buf, h);
            for x in v {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let bad = |m: &str| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: m.to_string(),
        };
        let mut r = Reader { bytes: &bytes, pos: 0 };
        if r.take(4).ok_or_else(|| bad("truncated header"))? != MAGIC {
            return Err(bad("not a vector store file"));
        }
        if r.u32().ok_or_else(|| bad("truncated header"))? != VERSION {
            return Err(bad("unsupported vector store version"));
        }
        let provider_id = r.string().ok_or_else(|| bad("bad provider id"))?;
        let model_name = r.string().ok_or_else(|| bad("bad model name"))?;
        let dimension = r.u32().ok_or_else(|| bad("bad dimension"))? as usize;
        let count = r.u64().ok_or_else(|| bad("bad count"))? as usize;
        let mut refs = Vec::with_capacity(count.min(1 << 20));
        let mut text_hashes = Vec::with_capacity(count.min(1 << 20));
        let mut vectors = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let key = r.string().ok_or_else(|| bad("truncated entry"))?;
            refs.push(PassageRef::parse_key(&key)?);
            text_hashes.push(r.string().ok_or_else(|| bad("truncated entry"))?);
            let v = (0..dimension)
                .map(|_| r.f64())
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| bad("truncated vector"))?;
            vectors.push(v);
        }
        Ok(Self {
            provider_id,
            model_name,
            dimension,
            refs,
            text_hashes,
            vectors,
        })
    }
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.bytes.get(self.pos..self.pos.checked_add(n)?)?;
        self.pos += n;
        Some(s)
    }
    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }
    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }
    fn f64(&mut self) -> Option<f64> {
        Some(f64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }
    fn string(&mut self) -> Option<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).ok()
    }
}

/// Cosine similarity; zero vectors score 0.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// Top-k passages by raw cosine similarity to the query embedding.
pub fn dense_search(
    provider: &dyn EmbeddingProvider,
    store: &VectorStore,
    query: &str,
    k: usize,
) -> Result<Vec<ScoredPassage>> {
    check_k(k)?;
    let q = providers::embed(provider, &[query.to_string()])
        .context_with(|| format!("embedding query {query:?}"))?
        .pop()
        .expect("one vector per text");
    if q.len() != store.dimension {
        return Err(Error::invalid(format!(
            "dimension mismatch: query {} vs store {}",
            q.len(),
            store.dimension
        )));
    }
    let scores = par::map(&store.vectors, |v| cosine(&q, v));
    let mut list: Vec<ScoredPassage> = store
        .refs
        .iter()
        .zip(scores)
        .map(|(r, s)| ScoredPassage::new(r.clone(), s))
        .collect();
    sort_and_rank(&mut list);
    list.truncate(k);
    Ok(list)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Passage;
    use crate::providers::HashEmbedder;

    /// Embeds text as a fixed vector looked up by exact content.
    struct Table(Vec<(String, Vec<f64>)>);

    impl EmbeddingProvider for Table {
        fn provider_id(&self) -> &str {
            "table"
        }
        fn model_name(&self) -> &str {
            "table"
        }
        fn dimension(&self) -> usize {
            self.0[0].1.len()
        }
        fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
            Ok(texts
                .iter()
                .map(|t| self.0.iter().find(|(k, _)| k == t).unwrap().1.clone())
                .collect())
        }
    }

    fn corpus(n: usize) -> Corpus {
        Corpus::new(
            (0..n)
                .map(|i| Passage::new("d", format!("p{i:02}"), format!("text {i}")))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn identical_vector_ranks_first_with_score_one() {
        let table = Table(vec![
            ("text 0".into(), vec![1.0, 0.0]),
            ("text 1".into(), vec![0.6, 0.8]),
            ("query".into(), vec![0.6, 0.8]),
        ]);
        let store = VectorStore::build(&table, &corpus(2), 8).unwrap();
        let hits = dense_search(&table, &store, "query", 2).unwrap();
        assert_eq!(hits[0].key, "d#p01");
        assert!((hits[0].raw_score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_vectors_score_zero() {
        let table = Table(vec![("text 0".into(), vec![1.0, 0.0]), ("q".into(), vec![0.0, 3.0])]);
        let store = VectorStore::build(&table, &corpus(1), 8).unwrap();
        assert_eq!(dense_search(&table, &store, "q", 1).unwrap()[0].raw_score, 0.0);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let store = VectorStore::build(&HashEmbedder::new(0, 8), &corpus(3), 2).unwrap();
        assert!(dense_search(&HashEmbedder::new(0, 16), &store, "q", 1).is_err());
    }

    #[test]
    fn sidecar_round_trip_and_reuse() {
        let e = HashEmbedder::new(9, 16);
        let c = corpus(5);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vl2.vec");
        let a = VectorStore::load_or_build(&e, &c, 2, &path).unwrap();
        assert!(path.exists());
        assert_eq!(VectorStore::load(&path).unwrap(), a);
        let b = VectorStore::load_or_build(&e, &c, 2, &path).unwrap();
        assert_eq!(a, b);
        // a different provider ignores the stale sidecar
        let other = HashEmbedder::new(10, 16);
        let d = VectorStore::load_or_build(&other, &c, 2, &path).unwrap();
        assert_ne!(d, a);
    }
}
