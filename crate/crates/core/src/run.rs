//! Retrieval runs in the six-column TREC layout:
//! `question_id  Q0  document_id#passage_id  rank  score  run_tag`, tab separated.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use indexmap::IndexMap;

use crate::corpus::{validate_id, PassageRef};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct RunEntry {
    pub passage: PassageRef,
    pub rank: usize,
    pub score: f64,
}

/// Per-question ranked lists, in question insertion order.
#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalRun {
    pub tag: String,
    pub queries: IndexMap<String, Vec<RunEntry>>,
}

impl RetrievalRun {
    pub fn new(tag: impl Into<String>) -> Self {
        Self {
            tag: tag.into(),
            queries: IndexMap::new(),
        }
    }

    /// Inserts a ranked list, assigning ranks 1..n in the given order.
    pub fn insert_ranked(
        &mut self,
        question_id: impl Into<String>,
        ranked: impl IntoIterator<Item = (PassageRef, f64)>,
    ) {
        let entries = ranked
            .into_iter()
            .enumerate()
            .map(|(i, (passage, score))| RunEntry {
                passage,
                rank: i + 1,
                score,
            })
            .collect();
        self.queries.insert(question_id.into(), entries);
    }

    pub fn get(&self, question_id: &str) -> Option<&[RunEntry]> {
        self.queries.get(question_id).map(Vec::as_slice)
    }

    fn validate(&self) -> Result<()> {
        if self.tag.is_empty() || self.tag.contains(['\t', '\n', '\r']) {
            return Err(Error::invalid(format!("bad run tag {:?}", self.tag)));
        }
        for (qid, entries) in &self.queries {
            validate_id("question_id", qid)?;
            for (i, e) in entries.iter().enumerate() {
                if e.rank != i + 1 {
                    return Err(Error::invalid(format!(
                        "question {qid}: rank {} at position {}",
                        e.rank,
                        i + 1
                    )));
                }
                if !e.score.is_finite() {
                    return Err(Error::invalid(format!("question {qid}: non-finite score")));
                }
                e.passage.validate()?;
            }
        }
        Ok(())
    }
}

pub fn format_run(run: &RetrievalRun) -> Result<String> {
    run.validate()?;
    let mut out = String::new();
    for (qid, entries) in &run.queries {
        for e in entries {
            // `{}` on f64 prints the shortest representation that parses back exactly.
            let _ = writeln!(
                out,
                "{qid}\tQ0\t{}\t{}\t{}\t{}",
                e.passage.key(),
                e.rank,
                e.score,
                run.tag
            );
        }
    }
    Ok(out)
}

pub fn write_run(run: &RetrievalRun, path: &Path) -> Result<()> {
    let text = format_run(run)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn parse_run(content: &str, path: &Path) -> Result<RetrievalRun> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut run: Option<RetrievalRun> = None;
    for (i, line) in content.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = if line.contains('\t') {
            line.split('\t').collect()
        } else {
            line.split_whitespace().collect()
        };
        if cols.len() != 6 {
            return Err(err(lineno, format!("expected 6 columns, found {}", cols.len())));
        }
        let passage = PassageRef::parse_key(cols[2]).map_err(|e| err(lineno, e.to_string()))?;
        let rank: usize = cols[3]
            .parse()
            .map_err(|_| err(lineno, format!("bad rank {:?}", cols[3])))?;
        let score: f64 = cols[4]
            .parse()
            .map_err(|_| err(lineno, format!("bad score {:?}", cols[4])))?;
        let run = run.get_or_insert_with(|| RetrievalRun::new(cols[5]));
        if run.tag != cols[5] {
            return Err(err(lineno, format!("mixed run tags {:?} and {:?}", run.tag, cols[5])));
        }
        let entries = run.queries.entry(cols[0].to_string()).or_default();
        if rank != entries.len() + 1 {
            return Err(err(
                lineno,
                format!(
                    "non-monotone rank {rank} for question {} (expected {})",
                    cols[0],
                    entries.len() + 1
                ),
            ));
        }
        entries.push(RunEntry {
            passage,
            rank,
            score,
        });
    }
    Ok(run.unwrap_or_else(|| RetrievalRun::new("empty")))
}

pub fn read_run(path: &Path) -> Result<RetrievalRun> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_run(&content, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_passages_give_ten_lines() {
        let mut run = RetrievalRun::new("fusion");
        run.insert_ranked(
            "q1",
            (0..10).map(|i| (PassageRef::new("d", format!("p{i}")), 1.0 - i as f64 * 0.1)),
        );
        let text = format_run(&run).unwrap();
        assert_eq!(text.lines().count(), 10);
        assert!(text.starts_with("q1\tQ0\td#p0\t1\t1\tfusion\n"));
    }

    #[test]
    fn rank_sequence_out_of_order_is_format_error() {
        let text = "q1 Q0 d#p1 1 0.9 t\nq1 Q0 d#p2 3 0.8 t\nq1 Q0 d#p3 2 0.7 t\n";
        match parse_run(text, Path::new("x")).unwrap_err() {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("non-monotone"));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn whitespace_separated_input_is_accepted() {
        let run = parse_run("q1  Q0 d#p1 1 0.5 tag\n", Path::new("x")).unwrap();
        assert_eq!(run.get("q1").unwrap()[0].score, 0.5);
    }

    #[test]
    fn unsorted_run_cannot_be_written() {
        let mut run = RetrievalRun::new("t");
        run.queries.insert(
            "q".into(),
            vec![RunEntry {
                passage: PassageRef::new("d", "p"),
                rank: 2,
                score: 1.0,
            }],
        );
        assert!(format_run(&run).is_err());
    }
}
