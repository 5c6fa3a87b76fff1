//! Answer generation: passage filtering and obligation extraction, then the
//! NOC, LOC, VRR and baseline strategies.

pub mod prompts;
mod vrr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Passage, PassageRef};
use crate::error::{Error, Result};
use crate::providers::{chat, ChatModel, NliProvider, ObligationClassifier, Sampling};
use crate::repass::{
    extract_obligations, join_sentences, obligation_coverage, segment_sentences, CoverageThreshold,
    ExtractionMode, Obligation, RePASsReport, SentenceSplit,
};
use crate::retrieval::ScoredPassage;

pub use prompts::PromptSet;
pub use vrr::{
    dataset_mean_contradiction, generate_vrr, insert_obligations, remove_contradictions, run_vrr,
    vrr_verify, ReturnPolicy, TrajectoryStep, VrrConfig, VrrItem, VrrOutcome,
};

/// Emitted instead of a generated answer when no passage survives filtering.
pub const ABSTENTION: &str = "No sufficiently relevant regulatory passages were retrieved.";

/// Tolerance on the filter's threshold and drop comparisons.
const EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub threshold: f64,
    pub max_drop: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self { threshold: 0.90, max_drop: 0.10 }
    }
}

impl FilterConfig {
    pub fn new(threshold: f64, max_drop: f64) -> Result<Self> {
        let cfg = Self { threshold, max_drop };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("threshold", self.threshold), ("max_drop", self.max_drop)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!("filter {name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Longest prefix of `ranked` whose scores stay at or above the threshold
/// and never drop by more than `max_drop` from one passage to the next.
pub fn filter_passages(ranked: &[ScoredPassage], cfg: &FilterConfig) -> Result<Vec<ScoredPassage>> {
    let mut kept: Vec<ScoredPassage> = Vec::new();
    let mut prev: Option<f64> = None;
    for p in ranked {
        let score = p.normalized()?;
        if score + EPS < cfg.threshold {
            break;
        }
        if let Some(prev) = prev {
            if prev - score > cfg.max_drop + EPS {
                break;
            }
        }
        prev = Some(score);
        kept.push(p.clone());
    }
    Ok(kept)
}

/// Filtered passages of one question and their obligations.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Context {
    pub passages: Vec<Passage>,
    pub obligations: Vec<Obligation>,
}

impl Context {
    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }

    pub fn passage_refs(&self) -> Vec<&Passage> {
        self.passages.iter().collect()
    }

    pub fn references(&self) -> Vec<PassageRef> {
        self.passages.iter().map(Passage::reference).collect()
    }

    pub fn obligation_texts(&self) -> Vec<&str> {
        self.obligations.iter().map(|o| o.text.as_str()).collect()
    }
}

/// Filters `ranked` and extracts obligations, substituting the whole text of
/// a passage that has none.
pub fn preprocess(
    ranked: &[ScoredPassage],
    corpus: &Corpus,
    cfg: &FilterConfig,
    classifier: &dyn ObligationClassifier,
) -> Result<Context> {
    let kept = filter_passages(ranked, cfg)?;
    if kept.is_empty() {
        return Ok(Context::default());
    }
    let refs: Vec<PassageRef> = kept.into_iter().map(|p| p.passage).collect();
    let passages: Vec<Passage> = corpus.resolve(&refs)?.into_iter().cloned().collect();
    let borrowed: Vec<&Passage> = passages.iter().collect();
    let obligations = extract_obligations(&borrowed, classifier, ExtractionMode::Preprocessing)?;
    Ok(Context { passages, obligations })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Provenance {
    Generated,
    ContradictionPruned,
    ObligationInserted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnswerCandidate {
    pub text: String,
    pub split: SentenceSplit,
    pub report: Option<RePASsReport>,
    pub provenance: Provenance,
}

impl AnswerCandidate {
    pub fn new(text: impl Into<String>, provenance: Provenance) -> Result<Self> {
        let text = text.into();
        let split = segment_sentences(&text)
            .map_err(|_| Error::EmptyAnswer("generated answer has no sentences".into()))?;
        Ok(Self { text, split, report: None, provenance })
    }

    pub fn abstention() -> Self {
        Self::new(ABSTENTION, Provenance::Generated).expect("abstention text is non-empty")
    }

    pub fn repass(&self) -> Option<f64> {
        self.report.as_ref().map(|r| r.repass)
    }
}

/// Joins texts so that each one's sentences survive re-segmentation.
fn concat_answers<S: AsRef<str>>(parts: &[S]) -> Result<String> {
    let mut sentences = Vec::new();
    for p in parts {
        sentences.extend(segment_sentences(p.as_ref())?.sentences);
    }
    Ok(join_sentences(&sentences))
}

/// Outputs the obligations themselves, in order, as the answer.
pub fn generate_noc(obligations: &[Obligation]) -> Result<AnswerCandidate> {
    if obligations.is_empty() {
        return Err(Error::EmptyAnswer("NOC needs at least one obligation".into()));
    }
    let texts: Vec<&str> = obligations.iter().map(|o| o.text.as_str()).collect();
    AnswerCandidate::new(concat_answers(&texts)?, Provenance::Generated)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocConfig {
    pub max_tries: usize,
    pub temperature: f64,
    /// Set from the run-level threshold.
    #[serde(skip)]
    pub tau: CoverageThreshold,
    /// Set from the run-level seed.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for LocConfig {
    fn default() -> Self {
        Self { max_tries: 3, tau: CoverageThreshold::default(), temperature: 0.7, seed: 0 }
    }
}

impl LocConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_tries < 1 {
            return Err(Error::config("LOC max_tries must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocOutcome {
    pub candidate: AnswerCandidate,
    /// LLM calls spent per obligation.
    pub tries: Vec<usize>,
}

/// Rewrites each obligation into an answer to `question`, retrying up to
/// `max_tries` times until the rewrite covers its obligation, and
/// concatenates the rewrites.
pub fn generate_loc(
    question: &str,
    obligations: &[Obligation],
    llm: &dyn ChatModel,
    coverage_nli: &dyn NliProvider,
    prompts: &PromptSet,
    cfg: &LocConfig,
) -> Result<LocOutcome> {
    cfg.validate()?;
    if obligations.is_empty() {
        return Err(Error::EmptyAnswer("LOC needs at least one obligation".into()));
    }
    let mut parts = Vec::with_capacity(obligations.len());
    let mut tries = Vec::with_capacity(obligations.len());
    for (i, o) in obligations.iter().enumerate() {
        let user = prompts::loc_user(question, &o.text);
        let mut last = String::new();
        let mut used = 0;
        for t in 0..cfg.max_tries {
            used = t + 1;
            let sampling = Sampling::new(cfg.temperature, cfg.seed + t as u64);
            last = chat(llm, &prompts.loc_rewrite, &user, &sampling)
                .map_err(|e| e.context(format!("LOC obligation {i}")))?;
            let split = segment_sentences(&last)
                .map_err(|e| e.context(format!("LOC obligation {i}")))?;
            let cov = obligation_coverage(&split, std::slice::from_ref(o), coverage_nli, cfg.tau)
                .map_err(|e| e.context(format!("LOC obligation {i}")))?;
            if cov.missing.is_empty() {
                break;
            }
        }
        parts.push(last);
        tries.push(used);
    }
    let candidate = AnswerCandidate::new(concat_answers(&parts)?, Provenance::Generated)?;
    Ok(LocOutcome { candidate, tries })
}

/// What the baseline generator sees as context.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextVariant {
    Passages,
    Obligations,
    #[default]
    ObligationsTailored,
}

impl std::str::FromStr for ContextVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "passages" => Ok(Self::Passages),
            "obligations" => Ok(Self::Obligations),
            "obligations_tailored" | "tailored" => Ok(Self::ObligationsTailored),
            _ => Err(Error::config(format!("unknown context variant {s:?}"))),
        }
    }
}

/// Single-shot generation with the baseline or the obligations prompt.
pub fn generate_baseline(
    question: &str,
    ctx: &Context,
    variant: ContextVariant,
    llm: &dyn ChatModel,
    prompts: &PromptSet,
    sampling: &Sampling,
) -> Result<AnswerCandidate> {
    if ctx.is_empty() {
        return Ok(AnswerCandidate::abstention());
    }
    let (system, user) = match variant {
        ContextVariant::Passages => {
            let texts: Vec<&str> = ctx.passages.iter().map(|p| p.text.as_str()).collect();
            (&prompts.baseline, prompts::passages_user(question, &texts))
        }
        ContextVariant::Obligations => {
            (&prompts.baseline, prompts::obligations_user(question, &ctx.obligation_texts()))
        }
        ContextVariant::ObligationsTailored => (
            &prompts.obligations_context,
            prompts::obligations_user(question, &ctx.obligation_texts()),
        ),
    };
    AnswerCandidate::new(chat(llm, system, &user, sampling)?, Provenance::Generated)
}
