//! Blocking HTTP clients for remote model endpoints.

use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::providers::adapters;
use crate::providers::retry::{Attempt, Backoff};
use crate::providers::{
    ChatModel, EmbeddingProvider, NliProvider, NliScores, ObligationClassifier, ObligationLabel,
    ProviderConfig, RerankProvider, Sampling,
};

struct Transport {
    config: ProviderConfig,
    client: Client,
    token: Option<String>,
    backoff: Backoff,
}

impl Transport {
    fn new(config: ProviderConfig) -> Result<Self> {
        config.validate()?;
        let token = match &config.auth_ref {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                Error::config(format!(
                    "provider {}: credential variable {var} is not set",
                    config.provider_id
                ))
            })?),
            None => None,
        };
        let client = Client::builder()
            .timeout(config.timeout())
            .build()
            .map_err(|e| Error::provider(&config.provider_id, e.to_string()))?;
        let backoff = Backoff::new(config.max_retries);
        Ok(Self {
            config,
            client,
            token,
            backoff,
        })
    }

    fn post(&self, body: &Value) -> Result<Value> {
        self.backoff
            .run(|| {
                let mut req = self.client.post(&self.config.endpoint).json(body);
                if let Some(t) = &self.token {
                    req = req.bearer_auth(t);
                }
                let resp = req.send().map_err(|e| Attempt::Transient(e.to_string()))?;
                let status = resp.status();
                if status.is_success() {
                    return resp
                        .json::<Value>()
                        .map_err(|e| Attempt::Fatal(format!("bad json: {e}")));
                }
                let text = resp.text().unwrap_or_default();
                let msg = format!("HTTP {status}: {}", text.chars().take(200).collect::<String>());
                if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
                    Err(Attempt::Transient(msg))
                } else {
                    Err(Attempt::Fatal(msg))
                }
            })
            .map_err(|m| Error::provider(&self.config.provider_id, m))
    }

    fn fail(&self, msg: String) -> Error {
        Error::provider(&self.config.provider_id, msg)
    }
}

pub struct HttpEmbedder {
    t: Transport,
    dimension: usize,
}

impl HttpEmbedder {
    pub fn new(config: ProviderConfig) -> Result<Self> {
        let dimension = config.dimension.ok_or_else(|| {
            Error::config(format!(
                "embedding provider {} needs a dimension",
                config.provider_id
            ))
        })?;
        Ok(Self {
            t: Transport::new(config)?,
            dimension,
        })
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn provider_id(&self) -> &str {
        &self.t.config.provider_id
    }
    fn model_name(&self) -> &str {
        &self.t.config.model_name
    }
    fn dimension(&self) -> usize {
        self.dimension
    }
    fn max_chars(&self) -> Option<usize> {
        self.t.config.max_chars
    }
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.t.config.batch_size) {
            let body = self
                .t
                .post(&adapters::embeddings_request(&self.t.config.model_name, chunk))?;
            out.extend(adapters::parse_embeddings(&body, chunk.len()).map_err(|m| self.t.fail(m))?);
        }
        Ok(out)
    }
}

pub struct HttpReranker {
    t: Transport,
}

impl HttpReranker {
    pub fn new(config: ProviderConfig) -> Result<Self> {
        Ok(Self {
            t: Transport::new(config)?,
        })
    }
}

impl RerankProvider for HttpReranker {
    fn provider_id(&self) -> &str {
        &self.t.config.provider_id
    }
    fn rerank_scores(&self, query: &str, passages: &[String], _prior: &[f64]) -> Result<Vec<f64>> {
        let body = self
            .t
            .post(&adapters::rerank_request(&self.t.config.model_name, query, passages))?;
        adapters::parse_rerank(&body, passages.len()).map_err(|m| self.t.fail(m))
    }
}

pub struct HttpNli {
    t: Transport,
}

impl HttpNli {
    pub fn new(config: ProviderConfig) -> Result<Self> {
        Ok(Self {
            t: Transport::new(config)?,
        })
    }
}

impl NliProvider for HttpNli {
    fn provider_id(&self) -> &str {
        &self.t.config.provider_id
    }
    fn model_name(&self) -> &str {
        &self.t.config.model_name
    }
    fn normalized(&self) -> bool {
        self.t.config.normalized
    }
    fn score_pairs(&self, pairs: &[(&str, &str)]) -> Result<Vec<NliScores>> {
        let mut out = Vec::with_capacity(pairs.len());
        for chunk in pairs.chunks(self.t.config.batch_size) {
            let body = self.t.post(&adapters::nli_request(&self.t.config.model_name, chunk))?;
            out.extend(adapters::parse_nli(&body, chunk.len()).map_err(|m| self.t.fail(m))?);
        }
        Ok(out)
    }
}

pub struct HttpClassifier {
    t: Transport,
}

impl HttpClassifier {
    pub fn new(config: ProviderConfig) -> Result<Self> {
        Ok(Self {
            t: Transport::new(config)?,
        })
    }
}

impl ObligationClassifier for HttpClassifier {
    fn provider_id(&self) -> &str {
        &self.t.config.provider_id
    }
    fn classify(&self, sentences: &[&str]) -> Result<Vec<ObligationLabel>> {
        let mut out = Vec::with_capacity(sentences.len());
        for chunk in sentences.chunks(self.t.config.batch_size) {
            let body = self
                .t
                .post(&adapters::classify_request(&self.t.config.model_name, chunk))?;
            out.extend(
                adapters::parse_classify(&body, chunk.len(), self.t.config.obligation_cut)
                    .map_err(|m| self.t.fail(m))?,
            );
        }
        Ok(out)
    }
}

pub struct HttpChat {
    t: Transport,
}

impl HttpChat {
    pub fn new(config: ProviderConfig) -> Result<Self> {
        Ok(Self {
            t: Transport::new(config)?,
        })
    }

    pub fn timeout(&self) -> Duration {
        self.t.config.timeout()
    }
}

impl ChatModel for HttpChat {
    fn provider_id(&self) -> &str {
        &self.t.config.provider_id
    }
    fn chat(&self, system_prompt: &str, user_content: &str, sampling: &Sampling) -> Result<String> {
        let body = self.t.post(&adapters::chat_request(
            &self.t.config.model_name,
            system_prompt,
            user_content,
            sampling,
        ))?;
        adapters::parse_chat(&body).map_err(|m| self.t.fail(m))
    }
}
