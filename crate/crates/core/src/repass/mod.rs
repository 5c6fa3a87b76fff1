//! RePASs: a reference-free answer metric averaging entailment by the
//! source passages (Es), absence of contradiction (1 - Cs) and coverage of
//! the passages' obligation sentences (OCs).

mod segment;

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::corpus::{Passage, PassageRef};
use crate::error::{Error, Result};
use crate::providers::{
    classify_obligations, nli_batch, NliProvider, NliScores, ObligationClassifier,
};

pub use segment::{join_sentences, segment_as, segment_sentences, SentenceSplit, SplitSource};

/// Minimum entailment probability for an answer sentence to cover an obligation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct CoverageThreshold(f64);

impl CoverageThreshold {
    pub const DEFAULT: f64 = 0.70;

    pub fn new(tau: f64) -> Result<Self> {
        if tau > 0.0 && tau < 1.0 {
            Ok(Self(tau))
        } else {
            Err(Error::config(format!("coverage threshold must lie in (0, 1), got {tau}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for CoverageThreshold {
    fn default() -> Self {
        Self(Self::DEFAULT)
    }
}

impl TryFrom<f64> for CoverageThreshold {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<CoverageThreshold> for f64 {
    fn from(t: CoverageThreshold) -> f64 {
        t.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Obligation {
    pub text: String,
    pub source_passage: PassageRef,
    pub classifier_confidence: f64,
}

/// How passages without obligation sentences are treated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExtractionMode {
    /// They contribute nothing.
    Metric,
    /// They contribute their whole text as a single pseudo-obligation.
    Preprocessing,
}

/// Splits every passage into sentences and keeps those the classifier
/// labels as obligations, in passage then document order.
pub fn extract_obligations(
    passages: &[&Passage],
    classifier: &dyn ObligationClassifier,
    mode: ExtractionMode,
) -> Result<Vec<Obligation>> {
    if passages.is_empty() {
        return Err(Error::invalid("extract_obligations: no passages"));
    }
    let splits = passages
        .iter()
        .map(|p| segment_as(&p.text, SplitSource::Passage))
        .collect::<Result<Vec<_>>>()?;
    let labels = crate::par::try_map(&splits, |split| {
        let sentences: Vec<&str> = split.iter().collect();
        classify_obligations(classifier, &sentences)
    });
    let labels = match labels {
        Ok(l) => l,
        Err(e) => {
            // redo sequentially to name the failing passage
            for (p, split) in passages.iter().zip(&splits) {
                let sentences: Vec<&str> = split.iter().collect();
                classify_obligations(classifier, &sentences)
                    .map_err(|e| e.context(format!("classifying passage {}", p.key())))?;
            }
            return Err(e);
        }
    };

    let mut out = Vec::new();
    for ((passage, split), labels) in passages.iter().zip(&splits).zip(labels) {
        // a pseudo-obligation keeps the passage's sentence boundaries
        let before = out.len();
        for (sentence, label) in split.iter().zip(labels) {
            if label.is_obligation {
                out.push(Obligation {
                    text: sentence.to_string(),
                    source_passage: passage.reference(),
                    classifier_confidence: label.confidence,
                });
            }
        }
        if out.len() == before && mode == ExtractionMode::Preprocessing {
            out.push(Obligation {
                text: join_sentences(&split.sentences),
                source_passage: passage.reference(),
                classifier_confidence: 0.0,
            });
        }
    }
    Ok(out)
}

/// Per-answer-sentence evidence behind Es and Cs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SentenceEvidence {
    pub sentence: String,
    pub best_entail_premise: String,
    pub e_i: f64,
    pub best_contra_premise: String,
    pub c_i: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoveredObligation {
    pub obligation: String,
    pub source_passage: PassageRef,
    pub covering_sentence: String,
    pub confidence: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub ocs: f64,
    pub covered: Vec<CoveredObligation>,
    pub missing: Vec<Obligation>,
}

/// NLI scores for every (premise, answer sentence) pair; `rows[i][j]` pairs
/// answer sentence `i` with premise `j`.
#[derive(Clone, Debug)]
pub struct ScoreMatrix {
    pub rows: Vec<Vec<NliScores>>,
}

impl ScoreMatrix {
    pub fn compute(answer: &SentenceSplit, premises: &SentenceSplit, nli: &dyn NliProvider) -> Result<Self> {
        if answer.is_empty() || premises.is_empty() {
            return Err(Error::invalid("NLI scoring needs non-empty answer and premises"));
        }
        let pairs: Vec<(&str, &str)> = answer
            .iter()
            .flat_map(|h| premises.iter().map(move |p| (p, h)))
            .collect();
        let flat = nli_batch(nli, &pairs).map_err(|e| {
            e.context(format!(
                "scoring {} premise/hypothesis pairs, first ({:?}, {:?})",
                pairs.len(),
                pairs[0].0,
                pairs[0].1
            ))
        })?;
        let rows = flat.chunks(premises.len()).map(<[NliScores]>::to_vec).collect();
        Ok(Self { rows })
    }

    /// Per row: (argmax index, max) of `f`, first index on ties.
    pub fn row_max(&self, f: impl Fn(&NliScores) -> f64) -> Vec<(usize, f64)> {
        self.rows
            .iter()
            .map(|row| {
                row.iter().enumerate().fold((0, f64::NEG_INFINITY), |best, (j, s)| {
                    let v = f(s);
                    if v > best.1 { (j, v) } else { best }
                })
            })
            .collect()
    }
}

fn mean(values: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = values.len();
    if n == 0 {
        return 0.0;
    }
    values.sum::<f64>() / n as f64
}

pub fn entailment_score(
    answer: &SentenceSplit,
    premises: &SentenceSplit,
    nli: &dyn NliProvider,
) -> Result<(f64, Vec<(usize, f64)>)> {
    let m = ScoreMatrix::compute(answer, premises, nli)?;
    let best = m.row_max(|s| s.entail);
    Ok((mean(best.iter().map(|b| b.1)), best))
}

pub fn contradiction_score(
    answer: &SentenceSplit,
    premises: &SentenceSplit,
    nli: &dyn NliProvider,
) -> Result<(f64, Vec<(usize, f64)>)> {
    let m = ScoreMatrix::compute(answer, premises, nli)?;
    let best = m.row_max(|s| s.contradict);
    Ok((mean(best.iter().map(|b| b.1)), best))
}

/// An obligation is covered when some answer sentence, as premise, entails
/// it with probability at least `tau`.
pub fn obligation_coverage(
    answer: &SentenceSplit,
    obligations: &[Obligation],
    nli: &dyn NliProvider,
    tau: CoverageThreshold,
) -> Result<Coverage> {
    if answer.is_empty() {
        return Err(Error::invalid("obligation coverage needs a non-empty answer"));
    }
    if obligations.is_empty() {
        return Ok(Coverage { ocs: 1.0, covered: Vec::new(), missing: Vec::new() });
    }
    let pairs: Vec<(&str, &str)> = obligations
        .iter()
        .flat_map(|o| answer.iter().map(move |s| (s, o.text.as_str())))
        .collect();
    let flat = nli_batch(nli, &pairs).map_err(|e| e.context("scoring obligation coverage"))?;
    let mut covered = Vec::new();
    let mut missing = Vec::new();
    for (o, row) in obligations.iter().zip(flat.chunks(answer.len())) {
        let (j, p) = row.iter().enumerate().fold((0, f64::NEG_INFINITY), |best, (j, s)| {
            if s.entail > best.1 { (j, s.entail) } else { best }
        });
        if p >= tau.value() {
            covered.push(CoveredObligation {
                obligation: o.text.clone(),
                source_passage: o.source_passage.clone(),
                covering_sentence: answer.sentences[j].clone(),
                confidence: p,
            });
        } else {
            missing.push(o.clone());
        }
    }
    let ocs = covered.len() as f64 / obligations.len() as f64;
    Ok(Coverage { ocs, covered, missing })
}

pub fn aggregate(es: f64, cs: f64, ocs: f64) -> f64 {
    (es + (1.0 - cs) + ocs) / 3.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RePASsReport {
    pub es: f64,
    pub cs: f64,
    pub ocs: f64,
    pub repass: f64,
    pub per_answer_sentence: Vec<SentenceEvidence>,
    pub covered_obligations: Vec<CoveredObligation>,
    pub total_obligations: usize,
}

impl RePASsReport {
    /// Recomputes the aggregate and component means from the evidence.
    pub fn check(&self) -> Result<()> {
        let tol = 1e-9;
        let es = mean(self.per_answer_sentence.iter().map(|e| e.e_i));
        let cs = mean(self.per_answer_sentence.iter().map(|e| e.c_i));
        let ocs = if self.total_obligations == 0 {
            1.0
        } else {
            self.covered_obligations.len() as f64 / self.total_obligations as f64
        };
        let ok = (es - self.es).abs() <= tol
            && (cs - self.cs).abs() <= tol
            && (ocs - self.ocs).abs() <= tol
            && (aggregate(self.es, self.cs, self.ocs) - self.repass).abs() <= tol;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("RePASs report is internally inconsistent"))
        }
    }
}

/// Scores answers against passage sets with a pair-scoring NLI model, a
/// separate coverage NLI model and an obligation classifier. Passage
/// obligations are cached per passage set.
pub struct RepassScorer {
    nli: Arc<dyn NliProvider>,
    coverage_nli: Arc<dyn NliProvider>,
    classifier: Arc<dyn ObligationClassifier>,
    tau: CoverageThreshold,
    obligations: RwLock<HashMap<Vec<String>, Arc<Vec<Obligation>>>>,
}

impl RepassScorer {
    pub fn new(
        nli: Arc<dyn NliProvider>,
        coverage_nli: Arc<dyn NliProvider>,
        classifier: Arc<dyn ObligationClassifier>,
        tau: CoverageThreshold,
    ) -> Self {
        Self { nli, coverage_nli, classifier, tau, obligations: RwLock::default() }
    }

    pub fn nli(&self) -> &Arc<dyn NliProvider> {
        &self.nli
    }

    pub fn coverage_nli(&self) -> &Arc<dyn NliProvider> {
        &self.coverage_nli
    }

    pub fn classifier(&self) -> &Arc<dyn ObligationClassifier> {
        &self.classifier
    }

    pub fn tau(&self) -> CoverageThreshold {
        self.tau
    }

    /// Obligation sentences of `passages` (metric mode).
    pub fn obligations(&self, passages: &[&Passage]) -> Result<Arc<Vec<Obligation>>> {
        let key: Vec<String> = passages.iter().map(|p| p.key()).collect();
        if let Some(hit) = self.obligations.read().expect("obligation cache poisoned").get(&key) {
            return Ok(Arc::clone(hit));
        }
        let found = Arc::new(extract_obligations(passages, self.classifier.as_ref(), ExtractionMode::Metric)?);
        self.obligations
            .write()
            .expect("obligation cache poisoned")
            .insert(key, Arc::clone(&found));
        Ok(found)
    }

    /// All sentences of all passages, first occurrence kept.
    pub fn premises(passages: &[&Passage]) -> Result<SentenceSplit> {
        let mut seen = HashSet::new();
        let mut sentences = Vec::new();
        for p in passages {
            for s in segment_as(&p.text, SplitSource::Passage)?.sentences {
                if seen.insert(s.clone()) {
                    sentences.push(s);
                }
            }
        }
        Ok(SentenceSplit { sentences, source: SplitSource::Passage })
    }

    pub fn score(&self, answer_text: &str, passages: &[&Passage]) -> Result<RePASsReport> {
        let split = segment_sentences(answer_text)?;
        self.score_split(&split, passages)
    }

    pub fn score_split(&self, answer: &SentenceSplit, passages: &[&Passage]) -> Result<RePASsReport> {
        if passages.is_empty() {
            return Err(Error::invalid("RePASs needs at least one passage"));
        }
        let premises = Self::premises(passages)?;
        let matrix = ScoreMatrix::compute(answer, &premises, self.nli.as_ref())?;
        let ent = matrix.row_max(|s| s.entail);
        let con = matrix.row_max(|s| s.contradict);
        let per_answer_sentence: Vec<SentenceEvidence> = answer
            .iter()
            .zip(ent.iter().zip(&con))
            .map(|(s, (&(je, e), &(jc, c)))| SentenceEvidence {
                sentence: s.to_string(),
                best_entail_premise: premises.sentences[je].clone(),
                e_i: e,
                best_contra_premise: premises.sentences[jc].clone(),
                c_i: c,
            })
            .collect();
        let es = mean(per_answer_sentence.iter().map(|e| e.e_i));
        let cs = mean(per_answer_sentence.iter().map(|e| e.c_i));
        let obligations = self.obligations(passages)?;
        let coverage = obligation_coverage(answer, &obligations, self.coverage_nli.as_ref(), self.tau)?;
        Ok(RePASsReport {
            es,
            cs,
            ocs: coverage.ocs,
            repass: aggregate(es, cs, coverage.ocs),
            per_answer_sentence,
            covered_obligations: coverage.covered,
            total_obligations: obligations.len(),
        })
    }

    /// Obligations of `passages` the answer does not cover.
    pub fn missing_obligations(&self, answer: &SentenceSplit, passages: &[&Passage]) -> Result<Vec<Obligation>> {
        let obligations = self.obligations(passages)?;
        Ok(obligation_coverage(answer, &obligations, self.coverage_nli.as_ref(), self.tau)?.missing)
    }
}

pub fn repass(answer_text: &str, passages: &[&Passage], scorer: &RepassScorer) -> Result<RePASsReport> {
    scorer.score(answer_text, passages)
}

/// One line of a RePASs report file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub question_id: String,
    pub strategy_tag: crate::corpus::StrategyTag,
    #[serde(flatten)]
    pub report: RePASsReport,
}

pub fn write_reports(path: &Path, records: &[ReportRecord]) -> Result<()> {
    crate::corpus::write_jsonl(path, records.iter())
}

pub fn read_reports(path: &Path) -> Result<Vec<ReportRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::{KeywordObligationClassifier, MockNli};

    fn scorer(nli: MockNli) -> RepassScorer {
        let nli: Arc<dyn NliProvider> = Arc::new(nli);
        RepassScorer::new(
            Arc::clone(&nli),
            nli,
            Arc::new(KeywordObligationClassifier),
            CoverageThreshold::default(),
        )
    }

    fn passage(id: &str, text: &str) -> Passage {
        Passage::new("doc", id, text)
    }

    #[test]
    fn aggregation_examples() {
        assert!((aggregate(0.366, 0.109, 0.278) - 0.5117).abs() < 5e-4);
        assert!((aggregate(0.446, 0.031, 0.502) - 0.639).abs() < 5e-4);
        assert_eq!(aggregate(1.0, 0.0, 1.0), 1.0);
    }

    #[test]
    fn threshold_bounds() {
        assert!(CoverageThreshold::new(0.0).is_err());
        assert!(CoverageThreshold::new(1.0).is_err());
        assert_eq!(CoverageThreshold::default().value(), 0.70);
        let t: CoverageThreshold = serde_json::from_str("0.5").unwrap();
        assert_eq!(t.value(), 0.5);
        assert!(serde_json::from_str::<CoverageThreshold>("1.5").is_err());
    }

    #[test]
    fn extraction_modes() {
        let must = passage("1", "Firms must file. Firms shall pay.");
        let none = passage("2", "This section\n applies to firms.");
        let c = KeywordObligationClassifier;
        let got = extract_obligations(&[&must], &c, ExtractionMode::Metric).unwrap();
        assert_eq!(got.len(), 2);
        assert_eq!(got[1].text, "Firms shall pay.");
        assert!(extract_obligations(&[&none], &c, ExtractionMode::Metric).unwrap().is_empty());
        let pre = extract_obligations(&[&none], &c, ExtractionMode::Preprocessing).unwrap();
        assert_eq!(pre.len(), 1);
        assert_eq!(pre[0].text, "This section applies to firms.");
        let heading = passage("3", "Scope\n\nThis part applies.");
        let pre = extract_obligations(&[&heading], &c, ExtractionMode::Preprocessing).unwrap();
        assert_eq!(pre[0].text, "Scope\n\nThis part applies.");
        assert!(extract_obligations(&[], &c, ExtractionMode::Metric).is_err());
    }

    #[test]
    fn identical_answer_scores_one() {
        let p = passage("1", "Firms must file returns. The regulator may inspect.");
        let r = scorer(MockNli::identity(0)).score("Firms must file returns.", &[&p]).unwrap();
        assert_eq!((r.es, r.cs, r.ocs, r.repass), (1.0, 0.0, 1.0, 1.0));
        assert_eq!(r.per_answer_sentence[0].best_entail_premise, "Firms must file returns.");
        r.check().unwrap();
    }

    #[test]
    fn negation_contradicts() {
        let p = passage("1", "Firms must file returns.");
        let r = scorer(MockNli::negation(0)).score("NOT Firms must file returns.", &[&p]).unwrap();
        assert_eq!(r.cs, 1.0);
        let r = scorer(MockNli::negation(0)).score("Zebras graze.", &[&p]).unwrap();
        assert_eq!((r.es, r.cs, r.ocs), (0.0, 0.0, 0.0));
    }

    #[test]
    fn coverage_ratio_and_empty() {
        let c = KeywordObligationClassifier;
        let p = passage("1", "A must x. B must y. C must z. D must w.");
        let obligations = extract_obligations(&[&p], &c, ExtractionMode::Metric).unwrap();
        let answer = segment_sentences("B must y.").unwrap();
        let nli = MockNli::identity(0);
        let cov = obligation_coverage(&answer, &obligations, &nli, CoverageThreshold::default()).unwrap();
        assert_eq!(cov.ocs, 0.25);
        assert_eq!(cov.missing.len(), 3);
        let cov = obligation_coverage(&answer, &[], &nli, CoverageThreshold::default()).unwrap();
        assert_eq!(cov.ocs, 1.0);
    }

    #[test]
    fn zero_obligations_report_full_coverage() {
        let p = passage("1", "This part applies to banks.");
        let r = scorer(MockNli::identity(0)).score("This part applies to banks.", &[&p]).unwrap();
        assert_eq!(r.total_obligations, 0);
        assert_eq!(r.ocs, 1.0);
    }

    #[test]
    fn report_roundtrip() {
        let p = passage("1", "Firms must file.");
        let report = scorer(MockNli::identity(0)).score("Firms must file.", &[&p]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        let rec = ReportRecord {
            question_id: "q1".into(),
            strategy_tag: crate::corpus::StrategyTag::Noc,
            report,
        };
        write_reports(&path, std::slice::from_ref(&rec)).unwrap();
        assert_eq!(read_reports(&path).unwrap(), vec![rec]);
    }
}
