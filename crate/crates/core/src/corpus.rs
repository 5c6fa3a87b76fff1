//! Passages, question sets and answer records, stored as line-delimited JSON.
//!
//! Identifiers may not contain `#`, tab or newline: `#` joins a passage's
//! document and passage id into the single-token key used by run files.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum number of passage references in an exported answer record.
pub const MAX_EXPORTED_REFS: usize = 10;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PassageRef {
    pub document_id: String,
    pub passage_id: String,
}

impl PassageRef {
    pub fn new(document_id: impl Into<String>, passage_id: impl Into<String>) -> Self {
        Self {
            document_id: document_id.into(),
            passage_id: passage_id.into(),
        }
    }

    /// `document_id#passage_id`
    pub fn key(&self) -> String {
        format!("{}#{}", self.document_id, self.passage_id)
    }

    pub fn parse_key(key: &str) -> Result<Self> {
        let (doc, pas) = key
            .split_once('#')
            .ok_or_else(|| Error::invalid(format!("passage key {key:?} has no '#'")))?;
        let r = PassageRef::new(doc, pas);
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        validate_id("document_id", &self.document_id)?;
        validate_id("passage_id", &self.passage_id)
    }
}

impl fmt::Display for PassageRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.document_id, self.passage_id)
    }
}

pub(crate) fn validate_id(field: &str, id: &str) -> Result<()> {
    if id.is_empty() {
        return Err(Error::invalid(format!("{field} is empty")));
    }
    if let Some(c) = id.chars().find(|c| matches!(c, '#' | '\t' | '\n' | '\r')) {
        return Err(Error::invalid(format!(
            "{field} {id:?} contains forbidden character {c:?}"
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub document_id: String,
    pub passage_id: String,
    pub text: String,
}

impl Passage {
    pub fn new(
        document_id: impl Into<String>,
        passage_id: impl Into<String>,
        text: impl Into<String>,
    ) -> Self {
        Self {
            document_id: document_id.into(),
            passage_id: passage_id.into(),
            text: text.into(),
        }
    }

    pub fn reference(&self) -> PassageRef {
        PassageRef::new(&self.document_id, &self.passage_id)
    }

    pub fn key(&self) -> String {
        format!("{}#{}", self.document_id, self.passage_id)
    }

    fn validate(&self) -> Result<()> {
        validate_id("document_id", &self.document_id)?;
        validate_id("passage_id", &self.passage_id)?;
        if self.text.trim().is_empty() {
            return Err(Error::invalid(format!("passage {} has empty text", self.key())));
        }
        Ok(())
    }
}

/// Immutable passage collection in ingestion order, indexed by reference.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Corpus {
    passages: Vec<Passage>,
    index: HashMap<PassageRef, usize>,
}

impl Corpus {
    pub fn new(passages: Vec<Passage>) -> Result<Self> {
        let mut index = HashMap::with_capacity(passages.len());
        for (i, p) in passages.iter().enumerate() {
            p.validate()?;
            if index.insert(p.reference(), i).is_some() {
                return Err(Error::DuplicateId(format!(
                    "({}, {})",
                    p.document_id, p.passage_id
                )));
            }
        }
        Ok(Self { passages, index })
    }

    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }

    pub fn passages(&self) -> &[Passage] {
        &self.passages
    }

    pub fn get(&self, r: &PassageRef) -> Option<&Passage> {
        self.index.get(r).map(|&i| &self.passages[i])
    }

    pub fn position(&self, r: &PassageRef) -> Option<usize> {
        self.index.get(r).copied()
    }

    pub fn contains(&self, r: &PassageRef) -> bool {
        self.index.contains_key(r)
    }

    /// Resolves every reference, or fails listing all that are missing.
    pub fn resolve(&self, refs: &[PassageRef]) -> Result<Vec<&Passage>> {
        let missing: Vec<String> = refs
            .iter()
            .filter(|r| !self.contains(r))
            .map(PassageRef::key)
            .collect();
        if !missing.is_empty() {
            return Err(Error::DanglingRefs(missing));
        }
        Ok(refs.iter().filter_map(|r| self.get(r)).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub question_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_passage_refs: Option<Vec<PassageRef>>,
}

impl Question {
    pub fn new(question_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            question_id: question_id.into(),
            text: text.into(),
            gold_passage_refs: None,
        }
    }

    pub fn with_gold(mut self, refs: Vec<PassageRef>) -> Self {
        self.gold_passage_refs = Some(refs);
        self
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct QuestionSet {
    questions: Vec<Question>,
}

impl QuestionSet {
    pub fn new(questions: Vec<Question>) -> Result<Self> {
        let mut seen = HashSet::new();
        for q in &questions {
            validate_id("question_id", &q.question_id)?;
            if q.text.trim().is_empty() {
                return Err(Error::invalid(format!(
                    "question {} has empty text",
                    q.question_id
                )));
            }
            if !seen.insert(q.question_id.as_str()) {
                return Err(Error::DuplicateId(q.question_id.clone()));
            }
        }
        Ok(Self { questions })
    }

    pub fn questions(&self) -> &[Question] {
        &self.questions
    }

    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    pub fn get(&self, question_id: &str) -> Option<&Question> {
        self.questions.iter().find(|q| q.question_id == question_id)
    }

    /// Checks that every gold reference resolves to a passage of `corpus`.
    pub fn validate_against(&self, corpus: &Corpus) -> Result<()> {
        let dangling: Vec<String> = self
            .questions
            .iter()
            .flat_map(|q| q.gold_passage_refs.iter().flatten())
            .filter(|r| !corpus.contains(r))
            .map(PassageRef::key)
            .collect();
        if dangling.is_empty() {
            Ok(())
        } else {
            Err(Error::DanglingRefs(dangling))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum StrategyTag {
    Noc,
    Loc,
    Vrr,
    Baseline,
}

impl StrategyTag {
    pub fn as_str(self) -> &'static str {
        match self {
            StrategyTag::Noc => "NOC",
            StrategyTag::Loc => "LOC",
            StrategyTag::Vrr => "VRR",
            StrategyTag::Baseline => "BASELINE",
        }
    }
}

impl fmt::Display for StrategyTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "NOC" => Ok(StrategyTag::Noc),
            "LOC" => Ok(StrategyTag::Loc),
            "VRR" => Ok(StrategyTag::Vrr),
            "BASELINE" => Ok(StrategyTag::Baseline),
            _ => Err(Error::config(format!(
                "unknown strategy {s:?} (expected NOC, LOC, VRR or BASELINE)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub question_id: String,
    pub retrieved_passage_refs: Vec<PassageRef>,
    pub answer_text: String,
    pub strategy_tag: StrategyTag,
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

pub(crate) fn write_jsonl<'a, T: Serialize + 'a>(
    path: &Path,
    records: impl IntoIterator<Item = &'a T>,
) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r)
            .map_err(|e| Error::invalid(format!("serialize record: {e}")))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn reparse_error(path: &Path, line: usize, err: Error) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: err.to_string(),
    }
}

pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let passages: Vec<Passage> = read_jsonl(path)?;
    // Line numbers for duplicate errors are recovered by re-validating one by one.
    let mut seen = HashSet::new();
    for (i, p) in passages.iter().enumerate() {
        p.validate().map_err(|e| reparse_error(path, i + 1, e))?;
        if !seen.insert(p.reference()) {
            return Err(Error::DuplicateId(format!(
                "({}, {})",
                p.document_id, p.passage_id
            )));
        }
    }
    Corpus::new(passages)
}

pub fn write_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    write_jsonl(path, corpus.passages())
}

pub fn load_questions(path: &Path) -> Result<QuestionSet> {
    let questions: Vec<Question> = read_jsonl(path)?;
    QuestionSet::new(questions)
}

pub fn write_questions(questions: &QuestionSet, path: &Path) -> Result<()> {
    write_jsonl(path, questions.questions())
}

pub fn load_answers(path: &Path) -> Result<Vec<AnswerRecord>> {
    read_jsonl(path)
}

/// Writes answers for submission; each record may carry at most
/// [`MAX_EXPORTED_REFS`] passage references.
pub fn write_answers(answers: &[AnswerRecord], path: &Path) -> Result<()> {
    if let Some(a) = answers
        .iter()
        .find(|a| a.retrieved_passage_refs.len() > MAX_EXPORTED_REFS)
    {
        return Err(Error::invalid(format!(
            "answer {} carries {} passage refs (max {MAX_EXPORTED_REFS})",
            a.question_id,
            a.retrieved_passage_refs.len()
        )));
    }
    write_jsonl(path, answers)
}
