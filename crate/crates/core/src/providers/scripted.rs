//! Replay and recording of chat completions.
//!
//! A script maps a prompt key to the ordered completions returned for
//! successive calls with that prompt. The key is the first 16 hex digits of
//! the content hash of `(system_prompt, user_content)`; the entry `"*"`
//! answers any prompt without its own entry.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::{Arc, Mutex};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::providers::{ChatModel, Sampling};
use crate::text::content_hash;

pub const WILDCARD: &str = "*";
pub const SCRIPT_VERSION: u32 = 1;

pub fn prompt_key(system_prompt: &str, user_content: &str) -> String {
    content_hash(&[system_prompt, user_content])[..16].to_string()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub key: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub responses: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Script {
    pub version: u32,
    pub entries: Vec<ScriptEntry>,
}

impl Script {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        Self {
            version: SCRIPT_VERSION,
            entries,
        }
    }

    /// A script answering every prompt with `responses` in order.
    pub fn sequence(responses: Vec<String>) -> Self {
        Self::new(vec![ScriptEntry {
            key: WILDCARD.to_string(),
            note: None,
            responses,
        }])
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let script: Script = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        if script.version != SCRIPT_VERSION {
            return Err(Error::config(format!(
                "{}: unsupported script version {}",
                path.display(),
                script.version
            )));
        }
        Ok(script)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::invalid(format!("serialize script: {e}")))?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Replays a [`Script`]. Call counters are per key and synchronized, so
/// the n-th call with a given prompt always returns the n-th response.
#[derive(Debug)]
pub struct ScriptedChat {
    responses: HashMap<String, Vec<String>>,
    calls: Mutex<HashMap<String, usize>>,
}

impl ScriptedChat {
    pub fn new(script: Script) -> Self {
        let mut responses: HashMap<String, Vec<String>> = HashMap::new();
        for e in script.entries {
            responses.entry(e.key).or_default().extend(e.responses);
        }
        Self {
            responses,
            calls: Mutex::new(HashMap::new()),
        }
    }
}

impl ChatModel for ScriptedChat {
    fn provider_id(&self) -> &str {
        "mock-scripted-llm"
    }

    fn chat(&self, system_prompt: &str, user_content: &str, _sampling: &Sampling) -> Result<String> {
        let key = prompt_key(system_prompt, user_content);
        let slot = if self.responses.contains_key(&key) {
            key
        } else if self.responses.contains_key(WILDCARD) {
            WILDCARD.to_string()
        } else {
            return Err(Error::ScriptExhausted { key, call: 1 });
        };
        let call = {
            let mut calls = self.calls.lock().expect("script counter poisoned");
            let c = calls.entry(slot.clone()).or_insert(0);
            *c += 1;
            *c
        };
        self.responses[&slot]
            .get(call - 1)
            .cloned()
            .ok_or(Error::ScriptExhausted { key: slot, call })
    }
}

/// Wraps a chat model and records every completion into a replayable script.
pub struct RecordingChat {
    inner: Arc<dyn ChatModel>,
    log: Mutex<IndexMap<String, ScriptEntry>>,
}

impl RecordingChat {
    pub fn new(inner: Arc<dyn ChatModel>) -> Self {
        Self {
            inner,
            log: Mutex::new(IndexMap::new()),
        }
    }

    pub fn script(&self) -> Script {
        let log = self.log.lock().expect("recording log poisoned");
        let mut entries: Vec<ScriptEntry> = log.values().cloned().collect();
        entries.sort_by(|a, b| a.key.cmp(&b.key));
        Script::new(entries)
    }
}

impl ChatModel for RecordingChat {
    fn provider_id(&self) -> &str {
        self.inner.provider_id()
    }

    fn chat(&self, system_prompt: &str, user_content: &str, sampling: &Sampling) -> Result<String> {
        let out = self.inner.chat(system_prompt, user_content, sampling)?;
        let key = prompt_key(system_prompt, user_content);
        let mut log = self.log.lock().expect("recording log poisoned");
        log.entry(key.clone())
            .or_insert_with(|| ScriptEntry {
                key,
                note: user_content.lines().next().map(|l| l.chars().take(80).collect()),
                responses: Vec::new(),
            })
            .responses
            .push(out.clone());
        Ok(out)
    }
}
