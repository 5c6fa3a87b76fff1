//! Request bodies and response parsing for the remote endpoints. Kept free
//! of transport so the wire shapes can be tested offline.
//!
//! - embeddings: OpenAI/Voyage style `{"model", "input"}` → `{"data": [{"index", "embedding"}]}`
//! - rerank: Voyage style `{"model", "query", "documents"}` → `{"data": [{"index", "relevance_score"}]}`
//! - chat: OpenAI chat completions → `choices[0].message.content`
//! - nli: `{"model", "pairs": [{"premise", "hypothesis"}]}` → `{"scores": [{"entailment", "contradiction", "neutral"}]}`
//! - obligations: `{"model", "sentences"}` → `{"labels": [{"confidence", "is_obligation"?}]}`

use serde_json::{json, Value};

use crate::providers::{NliScores, ObligationLabel, Sampling};

pub fn embeddings_request(model: &str, texts: &[String]) -> Value {
    json!({ "model": model, "input": texts })
}

pub fn parse_embeddings(body: &Value, expected: usize) -> Result<Vec<Vec<f64>>, String> {
    let data = body
        .get("data")
        .and_then(Value::as_array)
        .ok_or("response has no data array")?;
    let mut out: Vec<Option<Vec<f64>>> = vec![None; expected];
    for (pos, item) in data.iter().enumerate() {
        let idx = item
            .get("index")
            .and_then(Value::as_u64)
            .map(|i| i as usize)
            .unwrap_or(pos);
        let emb = item
            .get("embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| format!("data[{pos}] has no embedding"))?
            .iter()
            .map(|x| x.as_f64().ok_or("non-numeric embedding value"))
            .collect::<Result<Vec<f64>, _>>()?;
        let slot = out
            .get_mut(idx)
            .ok_or_else(|| format!("embedding index {idx} out of range"))?;
        *slot = Some(emb);
    }
    out.into_iter()
        .enumerate()
        .map(|(i, v)| v.ok_or_else(|| format!("missing embedding for input {i}")))
        .collect()
}

pub fn rerank_request(model: &str, query: &str, documents: &[String]) -> Value {
    json!({ "model": model, "query": query, "documents": documents })
}

pub fn parse_rerank(body: &Value, expected: usize) -> Result<Vec<f64>, String> {
    let data = body
        .get("data")
        .or_else(|| body.get("results"))
        .and_then(Value::as_array)
        .ok_or("response has no data array")?;
    let mut out: Vec<Option<f64>> = vec![None; expected];
    for item in data {
        let idx = item
            .get("index")
            .and_then(Value::as_u64)
            .ok_or("rerank item without index")? as usize;
        let score = item
            .get("relevance_score")
            .and_then(Value::as_f64)
            .ok_or("rerank item without relevance_score")?;
        *out.get_mut(idx)
            .ok_or_else(|| format!("rerank index {idx} out of range"))? = Some(score);
    }
    out.into_iter()
        .enumerate()
        .map(|(i, v)| v.ok_or_else(|| format!("missing rerank score for document {i}")))
        .collect()
}

pub fn chat_request(model: &str, system: &str, user: &str, sampling: &Sampling) -> Value {
    json!({
        "model": model,
        "messages": [
            { "role": "system", "content": system },
            { "role": "user", "content": user },
        ],
        "temperature": sampling.temperature,
        "seed": sampling.seed,
    })
}

pub fn parse_chat(body: &Value) -> Result<String, String> {
    body.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| "response has no choices[0].message.content".to_string())
}

pub fn nli_request(model: &str, pairs: &[(&str, &str)]) -> Value {
    let pairs: Vec<Value> = pairs
        .iter()
        .map(|(p, h)| json!({ "premise": p, "hypothesis": h }))
        .collect();
    json!({ "model": model, "pairs": pairs })
}

pub fn parse_nli(body: &Value, expected: usize) -> Result<Vec<NliScores>, String> {
    let scores = body
        .get("scores")
        .and_then(Value::as_array)
        .ok_or("response has no scores array")?;
    if scores.len() != expected {
        return Err(format!("{} scores for {expected} pairs", scores.len()));
    }
    scores
        .iter()
        .map(|s| {
            let field = |name: &str| {
                s.get(name)
                    .and_then(Value::as_f64)
                    .ok_or_else(|| format!("score without {name}"))
            };
            Ok(NliScores::new(
                field("entailment")?,
                field("contradiction")?,
                field("neutral")?,
            ))
        })
        .collect()
}

pub fn classify_request(model: &str, sentences: &[&str]) -> Value {
    json!({ "model": model, "sentences": sentences })
}

pub fn parse_classify(body: &Value, expected: usize, cut: f64) -> Result<Vec<ObligationLabel>, String> {
    let labels = body
        .get("labels")
        .and_then(Value::as_array)
        .ok_or("response has no labels array")?;
    if labels.len() != expected {
        return Err(format!("{} labels for {expected} sentences", labels.len()));
    }
    labels
        .iter()
        .map(|l| {
            let confidence = l
                .get("confidence")
                .and_then(Value::as_f64)
                .ok_or("label without confidence")?;
            let is_obligation = l
                .get("is_obligation")
                .and_then(Value::as_bool)
                .unwrap_or(confidence >= cut);
            Ok(ObligationLabel {
                is_obligation,
                confidence,
            })
        })
        .collect()
}
