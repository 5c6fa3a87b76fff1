//! Recall@k and MAP@k against binary gold passage judgments, macro-averaged
//! over the questions of a run.
//!
//! AP@k = (Σ_{i ≤ k, rel(i)} precision@i) / min(|gold|, k). A passage listed
//! more than once counts only at its first position. Questions with an empty
//! retrieved list score 0 on both metrics.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::corpus::{write_jsonl, PassageRef, QuestionSet};
use crate::error::{Error, Result};
use crate::run::RetrievalRun;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuestionScores {
    pub recall: f64,
    pub average_precision: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalEvalResult {
    pub k: usize,
    pub recall_at_k: f64,
    pub map_at_k: f64,
    pub per_question: IndexMap<String, QuestionScores>,
}

pub fn recall_at(ranked: &[PassageRef], gold: &HashSet<&PassageRef>, k: usize) -> f64 {
    if gold.is_empty() {
        return 0.0;
    }
    let mut seen = HashSet::new();
    let hits = ranked
        .iter()
        .take(k)
        .filter(|r| seen.insert(*r) && gold.contains(r))
        .count();
    hits as f64 / gold.len() as f64
}

pub fn average_precision_at(ranked: &[PassageRef], gold: &HashSet<&PassageRef>, k: usize) -> f64 {
    if gold.is_empty() || k == 0 {
        return 0.0;
    }
    let mut seen = HashSet::new();
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, r) in ranked.iter().take(k).enumerate() {
        if seen.insert(r) && gold.contains(r) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    sum / gold.len().min(k) as f64
}

/// Evaluates every question of `run`. Each must exist in `gold` with at
/// least one gold reference.
pub fn evaluate(run: &RetrievalRun, gold: &QuestionSet, k: usize) -> Result<RetrievalEvalResult> {
    if k < 1 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let mut per_question = IndexMap::new();
    for (qid, entries) in &run.queries {
        let question = gold
            .get(qid)
            .ok_or_else(|| Error::invalid(format!("question {qid} of the run has no gold entry")))?;
        let refs = question
            .gold_passage_refs
            .as_deref()
            .filter(|g| !g.is_empty())
            .ok_or_else(|| Error::invalid(format!("question {qid} has no gold passages")))?;
        let gold_set: HashSet<&PassageRef> = refs.iter().collect();
        let ranked: Vec<PassageRef> = entries.iter().map(|e| e.passage.clone()).collect();
        per_question.insert(
            qid.clone(),
            QuestionScores {
                recall: recall_at(&ranked, &gold_set, k),
                average_precision: average_precision_at(&ranked, &gold_set, k),
            },
        );
    }
    let n = per_question.len().max(1) as f64;
    let recall_at_k = per_question.values().map(|s| s.recall).sum::<f64>() / n;
    let map_at_k = per_question.values().map(|s| s.average_precision).sum::<f64>() / n;
    Ok(RetrievalEvalResult {
        k,
        recall_at_k,
        map_at_k,
        per_question,
    })
}

pub fn recall_at_k(run: &RetrievalRun, gold: &QuestionSet, k: usize) -> Result<f64> {
    evaluate(run, gold, k).map(|r| r.recall_at_k)
}

pub fn map_at_k(run: &RetrievalRun, gold: &QuestionSet, k: usize) -> Result<f64> {
    evaluate(run, gold, k).map(|r| r.map_at_k)
}

#[derive(Serialize)]
struct MetricLine<'a> {
    metric: &'a str,
    k: usize,
    question_id: &'a str,
    value: f64,
}

/// Flat report: one aggregate line per metric (question_id `"all"`), then
/// per-question lines.
pub fn write_report(result: &RetrievalEvalResult, path: &Path) -> Result<()> {
    let mut lines = vec![
        MetricLine {
            metric: "recall",
            k: result.k,
            question_id: "all",
            value: result.recall_at_k,
        },
        MetricLine {
            metric: "map",
            k: result.k,
            question_id: "all",
            value: result.map_at_k,
        },
    ];
    for (qid, s) in &result.per_question {
        lines.push(MetricLine {
            metric: "recall",
            k: result.k,
            question_id: qid,
            value: s.recall,
        });
        lines.push(MetricLine {
            metric: "map",
            k: result.k,
            question_id: qid,
            value: s.average_precision,
        });
    }
    write_jsonl(path, &lines)
}

pub fn format_summary(result: &RetrievalEvalResult) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<12} {:>10}", "metric", "value");
    let _ = writeln!(s, "{:<12} {:>10.4}", format!("Recall@{}", result.k), result.recall_at_k);
    let _ = writeln!(s, "{:<12} {:>10.4}", format!("MAP@{}", result.k), result.map_at_k);
    s
}
