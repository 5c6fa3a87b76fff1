//! Provider contracts for the external models the pipeline consumes:
//! embeddings, reranking, NLI pair scoring, obligation classification and
//! chat generation. Each contract has deterministic offline mocks and an
//! HTTP implementation (feature `http`).
//!
//! The free functions in this module (`embed`, `nli_batch`, ...) are the
//! entry points the rest of the crate uses; they enforce the shared
//! contract (non-empty input, order-aligned output, non-empty completions)
//! regardless of which implementation sits behind the trait object.

pub mod adapters;
pub mod cache;
#[cfg(feature = "http")]
pub mod http;
pub mod mock;
pub mod retry;
pub mod scripted;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

pub use cache::{CachedEmbedder, CachedNli};
pub use mock::{
    EchoChat, HashEmbedder, IdentityRerank, KeywordObligationClassifier, MockNli, ReversingRerank,
};
pub use scripted::{RecordingChat, Script, ScriptedChat};

/// Entailment / contradiction / neutral probabilities for one premise-hypothesis pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NliScores {
    pub entail: f64,
    pub contradict: f64,
    pub neutral: f64,
}

impl NliScores {
    pub const NEUTRAL: NliScores = NliScores {
        entail: 0.0,
        contradict: 0.0,
        neutral: 1.0,
    };

    pub fn new(entail: f64, contradict: f64, neutral: f64) -> Self {
        Self {
            entail,
            contradict,
            neutral,
        }
    }

    pub fn in_range(&self) -> bool {
        [self.entail, self.contradict, self.neutral]
            .iter()
            .all(|v| (0.0..=1.0).contains(v))
    }

    pub fn is_normalized(&self) -> bool {
        (self.entail + self.contradict + self.neutral - 1.0).abs() <= 1e-6
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObligationLabel {
    pub is_obligation: bool,
    pub confidence: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    pub temperature: f64,
    pub seed: u64,
}

impl Sampling {
    pub fn new(temperature: f64, seed: u64) -> Self {
        Self { temperature, seed }
    }
}

pub trait EmbeddingProvider: Send + Sync {
    fn provider_id(&self) -> &str;
    fn model_name(&self) -> &str;
    fn dimension(&self) -> usize;
    /// Longest input (in characters) the model accepts; longer inputs are truncated.
    fn max_chars(&self) -> Option<usize> {
        None
    }
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>>;
}

pub trait RerankProvider: Send + Sync {
    fn provider_id(&self) -> &str;
    /// `prior` holds the first-stage scores of `passages`; model-backed
    /// rerankers ignore it.
    fn rerank_scores(&self, query: &str, passages: &[String], prior: &[f64]) -> Result<Vec<f64>>;
}

pub trait NliProvider: Send + Sync {
    fn provider_id(&self) -> &str;
    fn model_name(&self) -> &str {
        self.provider_id()
    }
    /// Whether each returned triple sums to one.
    fn normalized(&self) -> bool;
    /// Scores `(premise, hypothesis)` pairs.
    fn score_pairs(&self, pairs: &[(&str, &str)]) -> Result<Vec<NliScores>>;
}

pub trait ObligationClassifier: Send + Sync {
    fn provider_id(&self) -> &str;
    fn classify(&self, sentences: &[&str]) -> Result<Vec<ObligationLabel>>;
}

pub trait ChatModel: Send + Sync {
    fn provider_id(&self) -> &str;
    fn chat(&self, system_prompt: &str, user_content: &str, sampling: &Sampling) -> Result<String>;
}

/// Pair batches handed to NLI providers are at most this long.
pub const NLI_CHUNK: usize = 256;

pub fn embed(provider: &dyn EmbeddingProvider, texts: &[String]) -> Result<Vec<Vec<f64>>> {
    if texts.is_empty() {
        return Err(Error::invalid("embed: empty batch"));
    }
    let truncated: Vec<String>;
    let input = match provider.max_chars() {
        Some(max) if texts.iter().any(|t| t.chars().count() > max) => {
            truncated = texts
                .iter()
                .map(|t| {
                    let n = t.chars().count();
                    if n > max {
                        tracing::warn!(
                            provider = provider.provider_id(),
                            chars = n,
                            max,
                            "truncating embedding input"
                        );
                        t.chars().take(max).collect()
                    } else {
                        t.clone()
                    }
                })
                .collect();
            &truncated
        }
        _ => texts,
    };
    let vectors = provider.embed(input)?;
    check_aligned(provider.provider_id(), texts.len(), vectors.len())?;
    let dim = provider.dimension();
    if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
        return Err(Error::provider(
            provider.provider_id(),
            format!("dimension mismatch: expected {dim}, got {}", v.len()),
        ));
    }
    Ok(vectors)
}

pub fn rerank_scores(
    provider: &dyn RerankProvider,
    query: &str,
    passages: &[String],
    prior: &[f64],
) -> Result<Vec<f64>> {
    if passages.is_empty() {
        return Err(Error::invalid("rerank: empty passage list"));
    }
    if prior.len() != passages.len() {
        return Err(Error::invalid("rerank: prior scores not aligned with passages"));
    }
    let scores = provider.rerank_scores(query, passages, prior)?;
    check_aligned(provider.provider_id(), passages.len(), scores.len())?;
    Ok(scores)
}

/// Scores pairs in chunks of [`NLI_CHUNK`], chunks running in parallel.
pub fn nli_batch(provider: &dyn NliProvider, pairs: &[(&str, &str)]) -> Result<Vec<NliScores>> {
    if pairs.is_empty() {
        return Err(Error::invalid("nli: empty pair batch"));
    }
    let chunks: Vec<&[(&str, &str)]> = pairs.chunks(NLI_CHUNK).collect();
    let scored = par::try_map(&chunks, |chunk| {
        let out = provider.score_pairs(chunk)?;
        check_aligned(provider.provider_id(), chunk.len(), out.len())?;
        Ok::<_, Error>(out)
    })?;
    let out: Vec<NliScores> = scored.into_iter().flatten().collect();
    if let Some(s) = out.iter().find(|s| !s.in_range()) {
        return Err(Error::provider(
            provider.provider_id(),
            format!("score out of [0,1]: {s:?}"),
        ));
    }
    if provider.normalized() {
        if let Some(s) = out.iter().find(|s| !s.is_normalized()) {
            return Err(Error::provider(
                provider.provider_id(),
                format!("declared normalized but triple sums to {}", s.entail + s.contradict + s.neutral),
            ));
        }
    }
    Ok(out)
}

pub fn classify_obligations(
    provider: &dyn ObligationClassifier,
    sentences: &[&str],
) -> Result<Vec<ObligationLabel>> {
    if sentences.is_empty() {
        return Err(Error::invalid("classify: empty sentence batch"));
    }
    let labels = provider.classify(sentences)?;
    check_aligned(provider.provider_id(), sentences.len(), labels.len())?;
    if let Some(l) = labels.iter().find(|l| !(0.0..=1.0).contains(&l.confidence)) {
        return Err(Error::provider(
            provider.provider_id(),
            format!("confidence out of [0,1]: {}", l.confidence),
        ));
    }
    Ok(labels)
}

pub fn chat(
    provider: &dyn ChatModel,
    system_prompt: &str,
    user_content: &str,
    sampling: &Sampling,
) -> Result<String> {
    if system_prompt.trim().is_empty() || user_content.trim().is_empty() {
        return Err(Error::invalid("chat: empty prompt"));
    }
    let out = provider.chat(system_prompt, user_content, sampling)?;
    if out.trim().is_empty() {
        return Err(Error::EmptyAnswer(format!(
            "{} returned an empty completion",
            provider.provider_id()
        )));
    }
    Ok(out)
}

fn check_aligned(provider: &str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::provider(
            provider,
            format!("returned {got} results for {expected} inputs"),
        ));
    }
    Ok(())
}

/// Connection settings for a remote model endpoint. Credentials are read
/// from the environment variable named by `auth_ref` and never stored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    pub provider_id: String,
    pub endpoint: String,
    pub model_name: String,
    #[serde(default)]
    pub auth_ref: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    /// Embedding dimension (embedding providers only).
    #[serde(default)]
    pub dimension: Option<usize>,
    #[serde(default)]
    pub max_chars: Option<usize>,
    /// Decision cut on classifier confidence when the endpoint returns no label.
    #[serde(default = "default_obligation_cut")]
    pub obligation_cut: f64,
    #[serde(default = "default_true")]
    pub normalized: bool,
}

fn default_timeout_secs() -> f64 {
    60.0
}
fn default_max_retries() -> u32 {
    3
}
fn default_batch_size() -> usize {
    32
}
fn default_obligation_cut() -> f64 {
    0.5
}
fn default_true() -> bool {
    true
}

impl ProviderConfig {
    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    pub fn validate(&self) -> Result<()> {
        if self.provider_id.trim().is_empty() {
            return Err(Error::config("provider_id is empty"));
        }
        if !(self.endpoint.starts_with("http://") || self.endpoint.starts_with("https://")) {
            return Err(Error::config(format!(
                "provider {}: endpoint {:?} is not an http(s) URL",
                self.provider_id, self.endpoint
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::config(format!(
                "provider {}: batch_size must be positive",
                self.provider_id
            )));
        }
        if !self.timeout_secs.is_finite() || self.timeout_secs <= 0.0 {
            return Err(Error::config(format!(
                "provider {}: timeout must be positive and finite",
                self.provider_id
            )));
        }
        if let Some(var) = &self.auth_ref {
            if std::env::var_os(var).is_none() {
                return Err(Error::config(format!(
                    "provider {}: credential variable {var} is not set",
                    self.provider_id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MockKind {
    IdentityNli,
    NegationNli,
    KeywordObligation,
    EchoLlm,
    ScriptedLlm,
    HashEmbedding,
    IdentityRerank,
    ReversingRerank,
}

/// A deterministic offline provider: identical `(kind, seed, input)` always
/// yields identical output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockSpec {
    pub kind: MockKind,
    #[serde(default)]
    pub seed: u64,
    /// Replay file for `SCRIPTED_LLM`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<PathBuf>,
    /// Vector size for `HASH_EMBEDDING`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<usize>,
}

impl MockSpec {
    pub fn new(kind: MockKind, seed: u64) -> Self {
        Self {
            kind,
            seed,
            script: None,
            dimension: None,
        }
    }
}

/// Where a provider slot gets its model from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ProviderSpec {
    Mock(MockSpec),
    Http(ProviderConfig),
}

impl ProviderSpec {
    pub fn mock(kind: MockKind, seed: u64) -> Self {
        ProviderSpec::Mock(MockSpec::new(kind, seed))
    }

    pub fn label(&self) -> String {
        match self {
            ProviderSpec::Mock(m) => format!("mock:{:?}:{}", m.kind, m.seed),
            ProviderSpec::Http(c) => format!("http:{}:{}", c.provider_id, c.model_name),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ProviderSpec::Mock(m) => {
                if m.kind == MockKind::ScriptedLlm {
                    match &m.script {
                        Some(p) if p.exists() => {}
                        Some(p) => {
                            return Err(Error::config(format!(
                                "scripted llm file {} does not exist",
                                p.display()
                            )))
                        }
                        None => return Err(Error::config("SCRIPTED_LLM requires a script path")),
                    }
                }
                if m.dimension == Some(0) {
                    return Err(Error::config("mock embedding dimension must be positive"));
                }
                Ok(())
            }
            ProviderSpec::Http(c) => c.validate(),
        }
    }

    fn wrong_kind(&self, slot: &str) -> Error {
        Error::config(format!("{} cannot serve as {slot}", self.label()))
    }

    pub fn build_embedder(&self) -> Result<Arc<dyn EmbeddingProvider>> {
        match self {
            ProviderSpec::Mock(m) if m.kind == MockKind::HashEmbedding => Ok(Arc::new(
                HashEmbedder::new(m.seed, m.dimension.unwrap_or(mock::DEFAULT_DIMENSION)),
            )),
            #[cfg(feature = "http")]
            ProviderSpec::Http(c) => Ok(Arc::new(http::HttpEmbedder::new(c.clone())?)),
            _ => Err(self.wrong_kind("embedding provider")),
        }
    }

    pub fn build_reranker(&self) -> Result<Arc<dyn RerankProvider>> {
        match self {
            ProviderSpec::Mock(m) if m.kind == MockKind::IdentityRerank => Ok(Arc::new(IdentityRerank)),
            ProviderSpec::Mock(m) if m.kind == MockKind::ReversingRerank => {
                Ok(Arc::new(ReversingRerank))
            }
            #[cfg(feature = "http")]
            ProviderSpec::Http(c) => Ok(Arc::new(http::HttpReranker::new(c.clone())?)),
            _ => Err(self.wrong_kind("reranker")),
        }
    }

    pub fn build_nli(&self) -> Result<Arc<dyn NliProvider>> {
        match self {
            ProviderSpec::Mock(m) if m.kind == MockKind::IdentityNli => {
                Ok(Arc::new(MockNli::identity(m.seed)))
            }
            ProviderSpec::Mock(m) if m.kind == MockKind::NegationNli => {
                Ok(Arc::new(MockNli::negation(m.seed)))
            }
            #[cfg(feature = "http")]
            ProviderSpec::Http(c) => Ok(Arc::new(http::HttpNli::new(c.clone())?)),
            _ => Err(self.wrong_kind("NLI provider")),
        }
    }

    pub fn build_classifier(&self) -> Result<Arc<dyn ObligationClassifier>> {
        match self {
            ProviderSpec::Mock(m) if m.kind == MockKind::KeywordObligation => {
                Ok(Arc::new(KeywordObligationClassifier))
            }
            #[cfg(feature = "http")]
            ProviderSpec::Http(c) => Ok(Arc::new(http::HttpClassifier::new(c.clone())?)),
            _ => Err(self.wrong_kind("obligation classifier")),
        }
    }

    pub fn build_chat(&self) -> Result<Arc<dyn ChatModel>> {
        match self {
            ProviderSpec::Mock(m) if m.kind == MockKind::EchoLlm => Ok(Arc::new(EchoChat)),
            ProviderSpec::Mock(m) if m.kind == MockKind::ScriptedLlm => {
                let path = m
                    .script
                    .as_ref()
                    .ok_or_else(|| Error::config("SCRIPTED_LLM requires a script path"))?;
                Ok(Arc::new(ScriptedChat::new(Script::load(path)?)))
            }
            #[cfg(feature = "http")]
            ProviderSpec::Http(c) => Ok(Arc::new(http::HttpChat::new(c.clone())?)),
            _ => Err(self.wrong_kind("chat model")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct ShortNli;
    impl NliProvider for ShortNli {
        fn provider_id(&self) -> &str {
            "short"
        }
        fn normalized(&self) -> bool {
            true
        }
        fn score_pairs(&self, pairs: &[(&str, &str)]) -> Result<Vec<NliScores>> {
            Ok(vec![NliScores::NEUTRAL; pairs.len().saturating_sub(1)])
        }
    }

    #[test]
    fn misaligned_provider_output_is_rejected() {
        let err = nli_batch(&ShortNli, &[("a", "b"), ("c", "d")]).unwrap_err();
        assert!(err.to_string().contains("returned 1 results for 2 inputs"), "{err}");
    }

    #[test]
    fn empty_batches_are_rejected() {
        assert!(nli_batch(&MockNli::identity(0), &[]).is_err());
        assert!(classify_obligations(&KeywordObligationClassifier, &[]).is_err());
        assert!(embed(&HashEmbedder::new(0, 8), &[]).is_err());
    }

    #[test]
    fn long_inputs_are_truncated_before_embedding() {
        struct Short(HashEmbedder);
        impl EmbeddingProvider for Short {
            fn provider_id(&self) -> &str {
                "short"
            }
            fn model_name(&self) -> &str {
                "short"
            }
            fn dimension(&self) -> usize {
                self.0.dimension()
            }
            fn max_chars(&self) -> Option<usize> {
                Some(5)
            }
            fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
                assert!(texts.iter().all(|t| t.chars().count() <= 5));
                self.0.embed(texts)
            }
        }
        let p = Short(HashEmbedder::new(1, 16));
        let v = embed(&p, &["abcde fgh".to_string()]).unwrap();
        assert_eq!(v[0], p.0.embed(&["abcde".to_string()]).unwrap()[0]);
    }

    #[test]
    fn provider_spec_round_trips_through_toml() {
        let spec = ProviderSpec::mock(MockKind::NegationNli, 7);
        let text = toml::to_string(&spec).unwrap();
        assert!(text.contains("NEGATION_NLI"), "{text}");
        let back: ProviderSpec = toml::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn wrong_slot_is_a_config_error() {
        let spec = ProviderSpec::mock(MockKind::EchoLlm, 0);
        assert!(matches!(spec.build_nli(), Err(Error::Config(_))));
    }

    #[test]
    fn scripted_mock_requires_existing_script() {
        let spec = ProviderSpec::mock(MockKind::ScriptedLlm, 0);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn http_config_checks_endpoint_and_credentials() {
        let mut c = ProviderConfig {
            provider_id: "voyage".into(),
            endpoint: "ftp://x".into(),
            model_name: "voyage-law-2".into(),
            auth_ref: None,
            timeout_secs: 10.0,
            max_retries: 3,
            batch_size: 8,
            dimension: Some(1024),
            max_chars: None,
            obligation_cut: 0.5,
            normalized: true,
        };
        assert!(c.validate().is_err());
        c.endpoint = "https://api.example.com/v1/embeddings".into();
        assert!(c.validate().is_ok());
        c.auth_ref = Some("REGRAG_SURELY_UNSET_VARIABLE".into());
        let err = c.validate().unwrap_err().to_string();
        assert!(err.contains("REGRAG_SURELY_UNSET_VARIABLE"));
        // the secret name is the only credential-related thing ever serialized
        assert!(!serde_json::to_string(&c).unwrap().contains("Bearer"));
    }
}
