//! Command implementations behind the `regrag` binary. Each command
//! validates its whole configuration and loads its inputs before any
//! provider is called.

mod config;
mod table;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    load_answers, load_corpus, load_questions, write_answers, AnswerRecord, Corpus, PassageRef,
    Question, QuestionSet, StrategyTag, MAX_EXPORTED_REFS,
};
use crate::error::{Error, Result};
use crate::generation::{
    generate_baseline, generate_loc, generate_noc, preprocess, run_vrr, AnswerCandidate, Context,
    PromptSet, TrajectoryStep, VrrItem,
};
use crate::metrics::{self, RetrievalEvalResult};
use crate::par;
use crate::providers::{CachedNli, ChatModel, NliProvider, ProviderSpec, Sampling};
use crate::repass::{write_reports, CoverageThreshold, ReportRecord, RepassScorer};
use crate::retrieval::pipeline::finalize;
use crate::retrieval::{FusionWeights, RerankDepth, Retriever, ScoredPassage};
use crate::run::{read_run, write_run, RetrievalRun};

pub use config::{ProviderSlots, RunConfig, CONFIG_VERSION};
pub use table::{fmt3, fmt4, Table};

/// Cutoff of the reported retrieval metrics.
pub const METRIC_K: usize = 10;

pub const RUN_FILE: &str = "run.trec";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const ANSWERS_FILE: &str = "answers.jsonl";
pub const TRAJECTORY_FILE: &str = "trajectory.jsonl";
pub const REPORT_FILE: &str = "repass_report.jsonl";

/// A validated configuration with its inputs loaded.
pub struct Session {
    pub config: RunConfig,
    pub corpus: Arc<Corpus>,
    pub questions: QuestionSet,
    pub prompts: PromptSet,
}

impl Session {
    pub fn open(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let corpus = Arc::new(load_corpus(&config.corpus)?);
        let questions = load_questions(&config.questions)?;
        questions.validate_against(&corpus)?;
        let prompts = match &config.prompts {
            Some(p) => PromptSet::load(p)?,
            None => PromptSet::default(),
        };
        std::fs::create_dir_all(&config.output_dir).map_err(|e| Error::io(&config.output_dir, e))?;
        Ok(Self { config, corpus, questions, prompts })
    }

    pub fn output(&self, name: &str) -> PathBuf {
        self.config.output_dir.join(name)
    }

    pub fn retriever(&self) -> Result<Retriever> {
        let p = &self.config.providers;
        Retriever::new(
            Arc::clone(&self.corpus),
            self.config.retrieval.clone(),
            p.dense_y.build_embedder()?,
            p.dense_z.build_embedder()?,
            p.reranker.build_reranker()?,
            self.config.cache_dir.as_deref(),
        )
    }

    pub fn scoring(&self) -> ScoringConfig {
        ScoringConfig::from(&self.config)
    }
}

/// The models and threshold RePASs is computed with.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoringConfig {
    pub nli: ProviderSpec,
    pub coverage_nli: ProviderSpec,
    pub classifier: ProviderSpec,
    pub tau: CoverageThreshold,
    /// NLI results persist here between runs when set.
    pub cache_dir: Option<PathBuf>,
}

impl From<&RunConfig> for ScoringConfig {
    fn from(cfg: &RunConfig) -> Self {
        Self {
            nli: cfg.providers.nli.clone(),
            coverage_nli: cfg.providers.coverage_nli().clone(),
            classifier: cfg.providers.classifier.clone(),
            tau: cfg.tau,
            cache_dir: cfg.cache_dir.clone(),
        }
    }
}

impl ScoringConfig {
    pub fn validate(&self) -> Result<()> {
        self.nli.validate()?;
        self.coverage_nli.validate()?;
        self.classifier.validate()
    }

    pub fn build(&self) -> Result<ScorerHandle> {
        let mut caches = Vec::new();
        let mut cached = |spec: &ProviderSpec, file: &str| -> Result<Arc<CachedNli>> {
            let c = Arc::new(CachedNli::new(spec.build_nli()?));
            if let Some(dir) = &self.cache_dir {
                let path = dir.join(file);
                c.load(&path)?;
                caches.push((Arc::clone(&c), path));
            }
            Ok(c)
        };
        let nli = cached(&self.nli, "nli_cache.jsonl")?;
        let coverage: Arc<dyn NliProvider> = if self.coverage_nli == self.nli {
            nli.clone()
        } else {
            cached(&self.coverage_nli, "coverage_nli_cache.jsonl")?
        };
        let scorer = RepassScorer::new(nli, coverage, self.classifier.build_classifier()?, self.tau);
        Ok(ScorerHandle { scorer, caches })
    }
}

pub struct ScorerHandle {
    pub scorer: RepassScorer,
    caches: Vec<(Arc<CachedNli>, PathBuf)>,
}

impl ScorerHandle {
    /// Saves the NLI caches, if any.
    pub fn persist(&self) -> Result<()> {
        for (c, path) in &self.caches {
            c.save(path)?;
        }
        Ok(())
    }
}

fn to_run(tag: &str, questions: &[Question], lists: &[Vec<ScoredPassage>]) -> Result<RetrievalRun> {
    let mut run = RetrievalRun::new(tag);
    for (q, list) in questions.iter().zip(lists) {
        let ranked = list
            .iter()
            .map(|p| Ok((p.passage.clone(), p.normalized()?)))
            .collect::<Result<Vec<_>>>()?;
        run.insert_ranked(q.question_id.clone(), ranked);
    }
    Ok(run)
}

fn with_gold(questions: &QuestionSet) -> Vec<Question> {
    questions
        .questions()
        .iter()
        .filter(|q| q.gold_passage_refs.as_ref().is_some_and(|g| !g.is_empty()))
        .cloned()
        .collect()
}

fn evaluate_subset(run: &RetrievalRun, questions: &QuestionSet) -> Result<Option<RetrievalEvalResult>> {
    let mut subset = RetrievalRun::new(run.tag.clone());
    for q in with_gold(questions) {
        if let Some(entries) = run.queries.get(&q.question_id) {
            subset.queries.insert(q.question_id.clone(), entries.clone());
        }
    }
    if subset.queries.is_empty() {
        return Ok(None);
    }
    metrics::evaluate(&subset, questions, METRIC_K).map(Some)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RetrieveOutput {
    pub run: RetrievalRun,
    /// Present when at least one question has gold passages.
    pub metrics: Option<RetrievalEvalResult>,
}

/// Retrieves every question and writes the run file and, for questions with
/// gold passages, the recall/MAP report.
pub fn cmd_retrieve(session: &Session) -> Result<RetrieveOutput> {
    let retriever = session.retriever()?;
    let questions = session.questions.questions();
    let lists = retriever.retrieve_all(questions)?;
    let run = to_run(&session.config.run_tag, questions, &lists)?;
    write_run(&run, &session.output(RUN_FILE))?;
    let metrics = evaluate_subset(&run, &session.questions)?;
    if let Some(m) = &metrics {
        metrics::write_report(m, &session.output(METRICS_FILE))?;
        let summary = session.output("metrics.txt");
        std::fs::write(&summary, metrics::format_summary(m)).map_err(|e| Error::io(&summary, e))?;
    }
    Ok(RetrieveOutput { run, metrics })
}

fn gold_questions_or_err(session: &Session, command: &str) -> Result<Vec<Question>> {
    let gold = with_gold(&session.questions);
    if gold.is_empty() {
        return Err(Error::config(format!("{command} needs questions with gold passages")));
    }
    Ok(gold)
}

#[derive(Serialize)]
struct FusionRow {
    a: f64,
    b: f64,
    c: f64,
    recall_at_10: f64,
    map_at_10: f64,
    selected: bool,
}

/// Recall@10 and MAP@10 for every fusion weight pair, best MAP first. The
/// default pair (0.25, 0.20) is marked as the selected setting.
pub fn cmd_sweep_fusion(session: &Session, grid: &[(f64, f64)]) -> Result<Table> {
    if grid.is_empty() {
        return Err(Error::config("fusion grid is empty"));
    }
    let weights = grid
        .iter()
        .map(|&(a, b)| FusionWeights::new(a, b))
        .collect::<Result<Vec<_>>>()?;
    let questions = gold_questions_or_err(session, "sweep-fusion")?;
    let retriever = session.retriever()?;
    let stages = par::try_map(&questions, |q| retriever.first_stage(&q.text))?;
    let depth = session.config.retrieval.rerank_depth;
    let k = session.config.retrieval.final_k;

    let mut rows = Vec::with_capacity(weights.len());
    for w in &weights {
        let work: Vec<(&Question, &_)> = questions.iter().zip(&stages).collect();
        let lists = par::try_map(&work, |(q, stage)| {
            let fused = retriever.fuse_stage(stage, *w)?;
            finalize(retriever.rerank_stage(&q.text, &fused, depth, k)?)
        })?;
        let run = to_run(&session.config.run_tag, &questions, &lists)?;
        let m = metrics::evaluate(&run, &session.questions, METRIC_K)?;
        let selected = *w == FusionWeights::default();
        rows.push(FusionRow { a: w.a, b: w.b, c: w.c(), recall_at_10: m.recall_at_k, map_at_10: m.map_at_k, selected });
    }
    rows.sort_by(|x, y| y.map_at_10.total_cmp(&x.map_at_10));

    let mut table = Table::new(
        "Fusion weight sweep (f = a*x + b*y + c*z)",
        &["a", "b", "c", "Recall@10", "MAP@10", "note"],
    );
    for r in &rows {
        let note = if r.selected { "selected" } else { "" };
        table.push(
            vec![fmt3(r.a), fmt3(r.b), fmt3(r.c), fmt4(r.recall_at_10), fmt4(r.map_at_10), note.into()],
            r,
        )?;
    }
    table.write(&session.config.output_dir, "sweep_fusion")?;
    Ok(table)
}

#[derive(Serialize)]
struct DepthRow {
    depth: usize,
    recall_at_10: f64,
    map_at_10: f64,
}

/// Recall@10 when reranking only the top `depth` fused candidates.
pub fn cmd_sweep_rerank_depth(session: &Session, depths: &[usize]) -> Result<Table> {
    if depths.is_empty() {
        return Err(Error::config("depth list is empty"));
    }
    let depths = depths.iter().map(|&d| RerankDepth::new(d)).collect::<Result<Vec<_>>>()?;
    let questions = gold_questions_or_err(session, "sweep-rerank-depth")?;
    let retriever = session.retriever()?;
    let weights = session.config.retrieval.weights;
    let fused = par::try_map(&questions, |q| {
        retriever.fuse_stage(&retriever.first_stage(&q.text)?, weights)
    })?;
    let k = session.config.retrieval.final_k;

    let mut table = Table::new("Rerank depth sweep", &["depth", "Recall@10", "MAP@10"]);
    for depth in depths {
        let work: Vec<(&Question, &Vec<ScoredPassage>)> = questions.iter().zip(&fused).collect();
        let lists = par::try_map(&work, |(q, f)| finalize(retriever.rerank_stage(&q.text, f, depth, k)?))?;
        let run = to_run(&session.config.run_tag, &questions, &lists)?;
        let m = metrics::evaluate(&run, &session.questions, METRIC_K)?;
        let row = DepthRow { depth: depth.0, recall_at_10: m.recall_at_k, map_at_10: m.map_at_k };
        table.push(vec![depth.0.to_string(), fmt4(row.recall_at_10), fmt4(row.map_at_10)], &row)?;
    }
    table.write(&session.config.output_dir, "sweep_rerank_depth")?;
    Ok(table)
}

/// Final ranked lists per question, from the configured run file or by
/// retrieving inline.
pub fn ranked_lists(session: &Session) -> Result<Vec<Vec<ScoredPassage>>> {
    let questions = session.questions.questions();
    match &session.config.run {
        None => session.retriever()?.retrieve_all(questions),
        Some(path) => {
            let run = read_run(path)?;
            questions
                .iter()
                .map(|q| {
                    let Some(entries) = run.get(&q.question_id) else {
                        tracing::warn!(question = %q.question_id, "run file has no entries for question");
                        return Ok(Vec::new());
                    };
                    let refs: Vec<PassageRef> = entries.iter().map(|e| e.passage.clone()).collect();
                    session.corpus.resolve(&refs)?;
                    let list = entries
                        .iter()
                        .map(|e| {
                            let mut p = ScoredPassage::new(e.passage.clone(), e.score);
                            p.rank = e.rank;
                            p
                        })
                        .collect();
                    finalize(list)
                })
                .collect()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerateOutput {
    pub answers: Vec<AnswerRecord>,
    /// VRR step log; empty for the other strategies.
    pub trajectory: Vec<TrajectoryStep>,
}

fn answer_record(q: &Question, ctx: &Context, ranked: &[ScoredPassage], c: &AnswerCandidate, tag: StrategyTag) -> AnswerRecord {
    // an abstention is attributed to what retrieval returned
    let refs: Vec<PassageRef> = if ctx.is_empty() {
        ranked.iter().map(|p| p.passage.clone()).collect()
    } else {
        ctx.references()
    };
    AnswerRecord {
        question_id: q.question_id.clone(),
        retrieved_passage_refs: refs.into_iter().take(MAX_EXPORTED_REFS).collect(),
        answer_text: c.text.clone(),
        strategy_tag: tag,
    }
}

/// Runs `strategy` over every question given its ranked passages.
pub fn generate_answers(
    session: &Session,
    strategy: StrategyTag,
    ranked: &[Vec<ScoredPassage>],
) -> Result<GenerateOutput> {
    generate_answers_with(session, strategy, ranked, None)
}

/// [`generate_answers`] with `llm` standing in for the configured chat model.
pub fn generate_answers_with(
    session: &Session,
    strategy: StrategyTag,
    ranked: &[Vec<ScoredPassage>],
    llm: Option<Arc<dyn ChatModel>>,
) -> Result<GenerateOutput> {
    let cfg = &session.config;
    let build_llm = || -> Result<Arc<dyn ChatModel>> {
        match &llm {
            Some(l) => Ok(Arc::clone(l)),
            None => cfg.providers.llm.build_chat(),
        }
    };
    let questions = session.questions.questions();
    let classifier = cfg.providers.classifier.build_classifier()?;
    let work: Vec<(&Question, &Vec<ScoredPassage>)> = questions.iter().zip(ranked).collect();
    let contexts = par::try_map(&work, |(q, r)| {
        preprocess(r, &session.corpus, &cfg.filter, classifier.as_ref())
            .map_err(|e| e.context(format!("preprocessing question {}", q.question_id)))
    })?;
    let items: Vec<(&Question, &Context)> = questions.iter().zip(&contexts).collect();

    let mut trajectory = Vec::new();
    let candidates: Vec<AnswerCandidate> = match strategy {
        StrategyTag::Noc => items
            .iter()
            .map(|(_, ctx)| {
                if ctx.is_empty() { Ok(AnswerCandidate::abstention()) } else { generate_noc(&ctx.obligations) }
            })
            .collect::<Result<_>>()?,
        StrategyTag::Loc => {
            let llm = build_llm()?;
            let nli = cfg.providers.coverage_nli().build_nli()?;
            let loc = cfg.loc_config();
            par::try_map(&items, |(q, ctx)| {
                if ctx.is_empty() {
                    return Ok(AnswerCandidate::abstention());
                }
                generate_loc(&q.text, &ctx.obligations, llm.as_ref(), nli.as_ref(), &session.prompts, &loc)
                    .map(|o| o.candidate)
                    .map_err(|e| e.context(format!("question {}", q.question_id)))
            })?
        }
        StrategyTag::Baseline => {
            let llm = build_llm()?;
            let sampling = Sampling::new(cfg.vrr.insertion_temperature, cfg.seed);
            par::try_map(&items, |(q, ctx)| {
                generate_baseline(&q.text, ctx, cfg.context_variant, llm.as_ref(), &session.prompts, &sampling)
                    .map_err(|e| e.context(format!("question {}", q.question_id)))
            })?
        }
        StrategyTag::Vrr => {
            let llm = build_llm()?;
            let handle = session.scoring().build()?;
            let vrr_items: Vec<VrrItem<'_>> =
                items.iter().map(|(q, ctx)| VrrItem { question: q, context: ctx }).collect();
            let outcomes = run_vrr(&vrr_items, llm.as_ref(), &handle.scorer, &session.prompts, &cfg.vrr_config())?;
            handle.persist()?;
            outcomes
                .into_iter()
                .map(|o| {
                    trajectory.extend(o.trajectory);
                    o.candidate
                })
                .collect()
        }
    };
    let answers = items
        .iter()
        .zip(ranked)
        .zip(&candidates)
        .map(|(((q, ctx), r), c)| answer_record(q, ctx, r, c, strategy))
        .collect();
    Ok(GenerateOutput { answers, trajectory })
}

/// Generates answers with the configured strategy and writes the answers
/// file (plus the step log for VRR).
pub fn cmd_generate(session: &Session) -> Result<GenerateOutput> {
    let ranked = ranked_lists(session)?;
    let out = generate_answers(session, session.config.strategy, &ranked)?;
    write_answers(&out.answers, &session.output(ANSWERS_FILE))?;
    if session.config.strategy == StrategyTag::Vrr {
        crate::corpus::write_jsonl(&session.output(TRAJECTORY_FILE), &out.trajectory)?;
    }
    Ok(out)
}

/// Mean RePASs components over a set of answers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Components {
    pub es: f64,
    pub cs: f64,
    pub ocs: f64,
    pub repass: f64,
}

impl Components {
    pub fn mean(records: &[ReportRecord]) -> Option<Self> {
        if records.is_empty() {
            return None;
        }
        let n = records.len() as f64;
        let avg = |f: fn(&ReportRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
        Some(Self {
            es: avg(|r| r.report.es),
            cs: avg(|r| r.report.cs),
            ocs: avg(|r| r.report.ocs),
            repass: avg(|r| r.report.repass),
        })
    }
}

/// Scores each answer against its recorded passages. Unknown passage
/// references are all reported together.
pub fn score_records(answers: &[AnswerRecord], corpus: &Corpus, scorer: &RepassScorer) -> Result<Vec<ReportRecord>> {
    let mut dangling: Vec<String> = answers
        .iter()
        .flat_map(|a| &a.retrieved_passage_refs)
        .filter(|r| !corpus.contains(r))
        .map(PassageRef::key)
        .collect();
    dangling.sort();
    dangling.dedup();
    if !dangling.is_empty() {
        return Err(Error::DanglingRefs(dangling));
    }
    if let Some(a) = answers.iter().find(|a| a.retrieved_passage_refs.is_empty()) {
        return Err(Error::invalid(format!("answer {} lists no passages to score against", a.question_id)));
    }
    par::try_map(answers, |a| {
        let passages = corpus.resolve(&a.retrieved_passage_refs)?;
        let report = scorer
            .score(&a.answer_text, &passages)
            .map_err(|e| e.context(format!("scoring answer {}", a.question_id)))?;
        Ok(ReportRecord { question_id: a.question_id.clone(), strategy_tag: a.strategy_tag, report })
    })
}

#[derive(Serialize)]
struct ScoreRow<'a> {
    question_id: &'a str,
    strategy_tag: String,
    repass: f64,
    obligation: f64,
    entailment: f64,
    contradiction: f64,
}

fn score_table(records: &[ReportRecord], aggregate: Option<Components>) -> Result<Table> {
    let mut table = Table::new(
        "RePASs",
        &["question / system", "RePASs", "Obligation", "Entailment", "Contradiction"],
    );
    let mut push = |label: &str, tag: String, c: Components| {
        let row = ScoreRow { question_id: label, strategy_tag: tag, repass: c.repass, obligation: c.ocs, entailment: c.es, contradiction: c.cs };
        table.push(vec![label.to_string(), fmt3(c.repass), fmt3(c.ocs), fmt3(c.es), fmt3(c.cs)], &row)
    };
    for r in records {
        let c = Components { es: r.report.es, cs: r.report.cs, ocs: r.report.ocs, repass: r.report.repass };
        push(&r.question_id, r.strategy_tag.to_string(), c)?;
    }
    if let Some(c) = aggregate {
        let tags: Vec<String> = records.iter().map(|r| r.strategy_tag.to_string()).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
        push("all", tags.join("+"), c)?;
    }
    Ok(table)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreOutput {
    pub records: Vec<ReportRecord>,
    /// `None` for an empty answers file.
    pub aggregate: Option<Components>,
    pub table: Table,
}

/// Scores an answers file. With `out_dir`, writes the per-answer report
/// and the score table there.
pub fn cmd_score(answers: &Path, corpus: &Path, scoring: &ScoringConfig, out_dir: Option<&Path>) -> Result<ScoreOutput> {
    scoring.validate()?;
    let corpus = load_corpus(corpus)?;
    let answers = load_answers(answers)?;
    let handle = scoring.build()?;
    let records = score_records(&answers, &corpus, &handle.scorer)?;
    handle.persist()?;
    let aggregate = Components::mean(&records);
    let table = score_table(&records, aggregate)?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_reports(&dir.join(REPORT_FILE), &records)?;
        table.write(dir, "score")?;
    }
    Ok(ScoreOutput { records, aggregate, table })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub against: StrategyTag,
    pub noc: Components,
    pub other: Components,
    /// NOC RePASs minus the other strategy's RePASs.
    pub gap: f64,
    pub questions: usize,
}

/// Scores NOC and another strategy on the same retrieval output. A large
/// positive gap means the metric rewards copying obligations verbatim.
pub fn cmd_audit_metric(session: &Session, against: StrategyTag) -> Result<(AuditReport, Table)> {
    let scoring = session.scoring();
    scoring.validate()?;
    let ranked = ranked_lists(session)?;
    let handle = scoring.build()?;
    let mut components = IndexMap::new();
    for tag in [StrategyTag::Noc, against] {
        if components.contains_key(&tag) {
            continue;
        }
        let generated = generate_answers(session, tag, &ranked)?;
        let records = score_records(&generated.answers, &session.corpus, &handle.scorer)?;
        let c = Components::mean(&records).ok_or_else(|| Error::invalid("no questions to audit"))?;
        components.insert(tag, c);
    }
    handle.persist()?;
    let noc = components[&StrategyTag::Noc];
    let other = components[&against];
    let report = AuditReport { against, noc, other, gap: noc.repass - other.repass, questions: ranked.len() };

    let mut table = Table::new(
        format!("Metric audit: NOC vs {against} (gap {:+.3})", report.gap),
        &["system", "RePASs", "Obligation", "Entailment", "Contradiction"],
    );
    for (tag, c) in [(StrategyTag::Noc, noc), (against, other)] {
        let row = serde_json::json!({"system": tag, "repass": c.repass, "obligation": c.ocs, "entailment": c.es, "contradiction": c.cs, "gap": report.gap});
        table.push(vec![tag.to_string(), fmt3(c.repass), fmt3(c.ocs), fmt3(c.es), fmt3(c.cs)], &row)?;
    }
    table.write(&session.config.output_dir, "audit")?;
    Ok((report, table))
}
