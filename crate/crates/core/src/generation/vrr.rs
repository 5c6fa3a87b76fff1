//! Verify and refine: pick the best of N generated answers by RePASs, then
//! alternate dataset-relative contradiction removal with insertion of
//! missing obligations.

use serde::{Deserialize, Serialize};

use super::{prompts, AnswerCandidate, Context, PromptSet, Provenance};
use crate::corpus::{Passage, Question};
use crate::error::{Error, Result};
use crate::providers::{chat, ChatModel, Sampling};
use crate::repass::{join_sentences, RepassScorer, ScoreMatrix};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ReturnPolicy {
    #[default]
    BestSeen,
    Final,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VrrConfig {
    pub num_alternatives: usize,
    pub rounds: usize,
    pub return_policy: ReturnPolicy,
    /// Skip refinement and return the verified answer.
    pub verify_only: bool,
    pub temperature: f64,
    pub insertion_temperature: f64,
    /// Set from the run-level seed.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for VrrConfig {
    fn default() -> Self {
        Self {
            num_alternatives: 5,
            rounds: 4,
            return_policy: ReturnPolicy::BestSeen,
            verify_only: false,
            temperature: 0.7,
            insertion_temperature: 0.0,
            seed: 0,
        }
    }
}

impl VrrConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_alternatives < 1 {
            return Err(Error::config("VRR num_alternatives must be at least 1"));
        }
        if self.rounds < 1 {
            return Err(Error::config("VRR rounds must be at least 1 (use verify_only to skip refinement)"));
        }
        Ok(())
    }
}

fn scored(mut c: AnswerCandidate, passages: &[&Passage], scorer: &RepassScorer) -> Result<AnswerCandidate> {
    c.report = Some(scorer.score_split(&c.split, passages)?);
    Ok(c)
}

/// Index of the highest RePASs, lowest index on ties.
fn argmax(cands: &[AnswerCandidate]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in cands.iter().enumerate() {
        let r = c.repass()?;
        if best.is_none_or(|(_, b)| r > b) {
            best = Some((i, r));
        }
    }
    best.map(|b| b.0)
}

/// Generates `num_alternatives` answers from the obligations and returns the
/// one with the highest RePASs. Failed generations are skipped.
pub fn vrr_verify(
    question: &str,
    ctx: &Context,
    llm: &dyn ChatModel,
    scorer: &RepassScorer,
    prompts: &PromptSet,
    cfg: &VrrConfig,
) -> Result<AnswerCandidate> {
    cfg.validate()?;
    if ctx.is_empty() {
        return Err(Error::invalid("VRR verification needs at least one passage"));
    }
    let user = prompts::obligations_user(question, &ctx.obligation_texts());
    let passages = ctx.passage_refs();
    let mut alternatives = Vec::with_capacity(cfg.num_alternatives);
    let mut last_err = None;
    for i in 0..cfg.num_alternatives {
        let sampling = Sampling::new(cfg.temperature, cfg.seed + i as u64);
        let generated = chat(llm, &prompts.obligations_context, &user, &sampling)
            .and_then(|text| AnswerCandidate::new(text, Provenance::Generated));
        match generated {
            Ok(c) => alternatives.push(scored(c, &passages, scorer)?),
            Err(e) => {
                tracing::warn!(alternative = i, error = %e, "VRR alternative failed");
                last_err = Some(e);
            }
        }
    }
    match argmax(&alternatives) {
        Some(i) => Ok(alternatives.swap_remove(i)),
        None => Err(last_err
            .unwrap_or_else(|| Error::invalid("no alternatives"))
            .context(format!("all {} VRR alternatives failed", cfg.num_alternatives))),
    }
}

/// Mean Cs over the current answers of the whole dataset.
pub fn dataset_mean_contradiction(candidates: &[&AnswerCandidate]) -> Result<f64> {
    if candidates.is_empty() {
        return Err(Error::invalid("mean contradiction over an empty dataset"));
    }
    let mut sum = 0.0;
    for c in candidates {
        let r = c
            .report
            .as_ref()
            .ok_or_else(|| Error::invalid("candidate has no RePASs report"))?;
        sum += r.cs;
    }
    Ok(sum / candidates.len() as f64)
}

/// Drops answer sentences whose contradiction score exceeds `mean_cs`,
/// keeping the least contradicted sentence if all would go.
pub fn remove_contradictions(
    candidate: &AnswerCandidate,
    passages: &[&Passage],
    mean_cs: f64,
    scorer: &RepassScorer,
) -> Result<AnswerCandidate> {
    let c_i: Vec<f64> = match &candidate.report {
        Some(r) => r.per_answer_sentence.iter().map(|e| e.c_i).collect(),
        None => {
            let premises = RepassScorer::premises(passages)?;
            let m = ScoreMatrix::compute(&candidate.split, &premises, scorer.nli().as_ref())?;
            m.row_max(|s| s.contradict).into_iter().map(|b| b.1).collect()
        }
    };
    let mut keep: Vec<usize> = (0..c_i.len()).filter(|&i| c_i[i] <= mean_cs).collect();
    if keep.len() == c_i.len() {
        return Ok(candidate.clone());
    }
    if keep.is_empty() {
        let lowest = (0..c_i.len())
            .min_by(|&a, &b| c_i[a].total_cmp(&c_i[b]).then(a.cmp(&b)))
            .expect("candidate has sentences");
        keep.push(lowest);
    }
    let sentences: Vec<&str> = keep.iter().map(|&i| candidate.split.sentences[i].as_str()).collect();
    AnswerCandidate::new(join_sentences(&sentences), Provenance::ContradictionPruned)
}

/// Asks the LLM to work the passage obligations the answer misses into it.
pub fn insert_obligations(
    candidate: &AnswerCandidate,
    passages: &[&Passage],
    llm: &dyn ChatModel,
    scorer: &RepassScorer,
    prompts: &PromptSet,
    sampling: &Sampling,
) -> Result<AnswerCandidate> {
    let missing = scorer.missing_obligations(&candidate.split, passages)?;
    if missing.is_empty() {
        return Ok(candidate.clone());
    }
    let texts: Vec<&str> = missing.iter().map(|o| o.text.as_str()).collect();
    let user = prompts::insertion_user(&candidate.text, &texts);
    let text = chat(llm, &prompts.insert_obligations, &user, sampling)?;
    AnswerCandidate::new(text, Provenance::ObligationInserted)
}

/// RePASs components of one VRR step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub question_id: String,
    pub step: String,
    pub es: f64,
    pub cs: f64,
    pub ocs: f64,
    pub repass: f64,
}

pub struct VrrItem<'a> {
    pub question: &'a Question,
    pub context: &'a Context,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VrrOutcome {
    pub candidate: AnswerCandidate,
    pub trajectory: Vec<TrajectoryStep>,
}

struct State {
    current: AnswerCandidate,
    best: AnswerCandidate,
    trajectory: Vec<TrajectoryStep>,
}

impl State {
    fn record(&mut self, question_id: &str, step: String, c: AnswerCandidate) {
        let r = c.report.as_ref().expect("recorded candidates are scored");
        self.trajectory.push(TrajectoryStep {
            question_id: question_id.to_string(),
            step,
            es: r.es,
            cs: r.cs,
            ocs: r.ocs,
            repass: r.repass,
        });
        if c.repass() > self.best.repass() {
            self.best = c.clone();
        }
        self.current = c;
    }
}

/// Runs VRR over a dataset. Questions advance through the refinement steps
/// in lockstep, since contradiction removal compares each answer against
/// the dataset mean.
pub fn run_vrr(
    items: &[VrrItem<'_>],
    llm: &dyn ChatModel,
    scorer: &RepassScorer,
    prompts: &PromptSet,
    cfg: &VrrConfig,
) -> Result<Vec<VrrOutcome>> {
    cfg.validate()?;
    let mut states: Vec<Option<State>> = crate::par::try_map(items, |item| {
        if item.context.is_empty() {
            return Ok(None);
        }
        let verified = vrr_verify(&item.question.text, item.context, llm, scorer, prompts, cfg)
            .map_err(|e| e.context(format!("question {}", item.question.question_id)))?;
        let mut s = State { current: verified.clone(), best: verified.clone(), trajectory: Vec::new() };
        s.best.report = None;
        s.record(&item.question.question_id, "Verify".into(), verified);
        Ok::<_, Error>(Some(s))
    })?;

    let rounds = if cfg.verify_only { 0 } else { cfg.rounds };
    for round in 1..=rounds {
        let active: Vec<&AnswerCandidate> = states.iter().flatten().map(|s| &s.current).collect();
        if active.is_empty() {
            break;
        }
        let mean_cs = dataset_mean_contradiction(&active)?;
        let work: Vec<(usize, &VrrItem<'_>, &AnswerCandidate)> = states
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.as_ref().map(|s| (i, &items[i], &s.current)))
            .collect();
        let pruned = crate::par::try_map(&work, |(_, item, current)| {
            let passages = item.context.passage_refs();
            remove_contradictions(current, &passages, mean_cs, scorer)
                .and_then(|c| scored(c, &passages, scorer))
                .map_err(|e| e.context(format!("question {}", item.question.question_id)))
        })?;
        let sampling = Sampling::new(cfg.insertion_temperature, cfg.seed + round as u64);
        let inserted = crate::par::try_map(&work.iter().zip(&pruned).collect::<Vec<_>>(), |((_, item, _), c)| {
            let passages = item.context.passage_refs();
            insert_obligations(c, &passages, llm, scorer, prompts, &sampling)
                .and_then(|c| scored(c, &passages, scorer))
                .map_err(|e| e.context(format!("question {}", item.question.question_id)))
        })?;
        let indices: Vec<usize> = work.iter().map(|w| w.0).collect();
        for ((i, p), ins) in indices.into_iter().zip(pruned).zip(inserted) {
            let s = states[i].as_mut().expect("active state");
            let qid = &items[i].question.question_id;
            s.record(qid, format!("Ref.Contr.{round}"), p);
            s.record(qid, format!("Ref.Obl.{round}"), ins);
        }
    }

    Ok(states
        .into_iter()
        .map(|s| match s {
            None => VrrOutcome { candidate: AnswerCandidate::abstention(), trajectory: Vec::new() },
            Some(s) => VrrOutcome {
                candidate: match cfg.return_policy {
                    ReturnPolicy::BestSeen => s.best,
                    ReturnPolicy::Final => s.current,
                },
                trajectory: s.trajectory,
            },
        })
        .collect())
}

/// VRR for a single question; the dataset mean is that answer's own Cs.
pub fn generate_vrr(
    question: &Question,
    ctx: &Context,
    llm: &dyn ChatModel,
    scorer: &RepassScorer,
    prompts: &PromptSet,
    cfg: &VrrConfig,
) -> Result<VrrOutcome> {
    let item = VrrItem { question, context: ctx };
    Ok(run_vrr(std::slice::from_ref(&item), llm, scorer, prompts, cfg)?.remove(0))
}
