//! System prompts for answer generation, loadable from a versioned TOML
//! file. The defaults are the prompts the strategies were designed around.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PROMPT_FILE_VERSION: u32 = 1;

pub const BASELINE: &str = "You are a regulatory compliance assistant. Provide a detailed answer for the question that fully integrates all the obligations and best practices from the given passages. Ensure your response is cohesive and directly addresses the question. Synthesize the information from all passages into a single, unified answer.";

pub const OBLIGATIONS_CONTEXT: &str = "You are a regulatory compliance assistant. Your task is to provide a brief but concise and detailed answer to the Question, ensuring that all Obligations are fully addressed. Directly integrate each obligation into the response, ensuring no obligation is missed or implied. Avoid adding information beyond what is explicitly stated in the Obligations, and cite specific rules when necessary. Use the exact terminology and structure from the obligations where applicable, to ensure high alignment and logical consistency. Focus solely on the provided obligations to craft a response that is well-structured, concise, and free of contradictions.";

pub const INSERT_OBLIGATIONS: &str = "You are a regulatory compliance assistant. Your task is to integrate the following Obligations that are missing from the Answer. You may change sentences or add new ones to cover all Obligations. Avoid adding changes or sentences that contradict the Answer and/or the Obligations.";

pub const LOC_REWRITE: &str = "You are a regulatory compliance assistant. Your task is to construct a brief but concise response that addresses the Question by focusing exclusively on the specified Obligation. Ensure your response clearly identifies and explains the obligation, including any relevant conditions or restrictions. Avoid addressing unrelated aspects of the Question, and limit your response strictly to what is explicitly stated in the provided passage.";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptSet {
    pub version: u32,
    pub baseline: String,
    pub obligations_context: String,
    pub insert_obligations: String,
    pub loc_rewrite: String,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            version: PROMPT_FILE_VERSION,
            baseline: BASELINE.into(),
            obligations_context: OBLIGATIONS_CONTEXT.into(),
            insert_obligations: INSERT_OBLIGATIONS.into(),
            loc_rewrite: LOC_REWRITE.into(),
        }
    }
}

impl PromptSet {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let set: Self = toml::from_str(&raw)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        set.validate()?;
        Ok(set)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("prompt set serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != PROMPT_FILE_VERSION {
            return Err(Error::config(format!(
                "unsupported prompt file version {} (expected {PROMPT_FILE_VERSION})",
                self.version
            )));
        }
        for (name, text) in [
            ("baseline", &self.baseline),
            ("obligations_context", &self.obligations_context),
            ("insert_obligations", &self.insert_obligations),
            ("loc_rewrite", &self.loc_rewrite),
        ] {
            if text.trim().is_empty() {
                return Err(Error::config(format!("prompt {name} is empty")));
            }
        }
        Ok(())
    }
}

fn bullets<S: AsRef<str>>(items: &[S]) -> String {
    items
        .iter()
        .map(|s| format!("- {}", s.as_ref()))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn passages_user<S: AsRef<str>>(question: &str, passages: &[S]) -> String {
    let body = passages
        .iter()
        .enumerate()
        .map(|(i, p)| format!("Passage {}: {}", i + 1, p.as_ref()))
        .collect::<Vec<_>>()
        .join("\n\n");
    format!("Question: {question}\n\nPassages:\n{body}")
}

pub fn obligations_user<S: AsRef<str>>(question: &str, obligations: &[S]) -> String {
    format!("Question: {question}\n\nObligations:\n{}", bullets(obligations))
}

pub fn insertion_user<S: AsRef<str>>(answer: &str, missing: &[S]) -> String {
    format!("Answer: {answer}\n\nObligations:\n{}", bullets(missing))
}

pub fn loc_user(question: &str, obligation: &str) -> String {
    format!("Question: {question}\n\nObligation: {obligation}")
}
