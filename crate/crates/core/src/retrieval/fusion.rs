use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::retrieval::{check_k, sort_and_rank, ScoredPassage};

/// Per-query min-max normalization: ŝ = (s − min)/(max − min). A list whose
/// scores are all equal maps every passage to 1.0.
pub fn normalize_scores(scores: &[ScoredPassage]) -> Result<Vec<ScoredPassage>> {
    if scores.is_empty() {
        return Err(Error::invalid("cannot normalize an empty score list"));
    }
    let (min, max) = scores.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        (lo.min(p.raw_score), hi.max(p.raw_score))
    });
    if !min.is_finite() || !max.is_finite() {
        return Err(Error::invalid("non-finite score in list"));
    }
    let span = max - min;
    Ok(scores
        .iter()
        .map(|p| {
            let mut q = p.clone();
            q.normalized_score = Some(if span > 0.0 {
                ((p.raw_score - min) / span).clamp(0.0, 1.0)
            } else {
                1.0
            });
            q
        })
        .collect())
}

/// Weights `a`, `b` of the first two retrievers; the third gets `1 − (a + b)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionWeights {
    pub a: f64,
    pub b: f64,
}

impl Default for FusionWeights {
    fn default() -> Self {
        Self { a: 0.25, b: 0.20 }
    }
}

/// Slack allowed on `a + b ≤ 1` for decimal inputs such as 0.7 + 0.3.
const WEIGHT_SLACK: f64 = 1e-12;

impl FusionWeights {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        let w = Self { a, b };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.b.is_finite()) || self.a < 0.0 || self.b < 0.0 {
            return Err(Error::config(format!(
                "fusion weights must be non-negative, got a={}, b={}",
                self.a, self.b
            )));
        }
        if self.a + self.b > 1.0 + WEIGHT_SLACK {
            return Err(Error::config(format!(
                "fusion weights must satisfy a + b <= 1, got a={}, b={}",
                self.a, self.b
            )));
        }
        Ok(())
    }

    pub fn c(&self) -> f64 {
        (1.0 - (self.a + self.b)).max(0.0)
    }

    /// f(p) = a·ŝx + b·ŝy + (1 − (a + b))·ŝz
    pub fn combine(&self, sx: f64, sy: f64, sz: f64) -> f64 {
        self.a * sx + self.b * sy + self.c() * sz
    }
}

/// Fuses three normalized lists over their union. A passage missing from a
/// list contributes ŝ = 0 for that retriever. Returns the top `k` by fused
/// score (stored as `raw_score`; `normalized_score` is left unset).
pub fn fuse(runs: [&[ScoredPassage]; 3], w: FusionWeights, k: usize) -> Result<Vec<ScoredPassage>> {
    w.validate()?;
    check_k(k)?;
    let mut table: HashMap<&str, (usize, [f64; 3])> = HashMap::new();
    let mut order: Vec<&ScoredPassage> = Vec::new();
    for (slot, list) in runs.iter().enumerate() {
        for p in list.iter() {
            let s = p.normalized()?;
            let entry = table.entry(p.key.as_str()).or_insert_with(|| {
                order.push(p);
                (order.len() - 1, [0.0; 3])
            });
            // a duplicate within one list keeps its best score
            entry.1[slot] = entry.1[slot].max(s);
        }
    }
    let mut fused: Vec<ScoredPassage> = table
        .values()
        .map(|&(i, s)| ScoredPassage::new(order[i].passage.clone(), w.combine(s[0], s[1], s[2])))
        .collect();
    sort_and_rank(&mut fused);
    fused.truncate(k);
    Ok(fused)
}
