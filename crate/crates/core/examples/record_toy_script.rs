//! Regenerates `fixtures/toy/scripted_llm.json`.
//!
//! Runs every LLM-backed strategy on the toy fixture with a rule-based
//! composer standing in for the chat model, recording each prompt and
//! response. `SCRIPTED_LLM` replays the recording.
//!
//! ```text
//! cargo run -p regrag --example record_toy_script
//! ```

use std::path::PathBuf;
use std::sync::Arc;

use regrag::corpus::StrategyTag;
use regrag::generation::{ContextVariant, PromptSet};
use regrag::orchestrator::{generate_answers_with, ranked_lists, RunConfig, Session};
use regrag::providers::{ChatModel, MockKind, ProviderSpec, RecordingChat, Sampling};
use regrag::repass::join_sentences;
use regrag::Result;

const FILLER: &str = "Firms should seek advice where unsure.";

/// Deterministic stand-in for a chat model. Verification alternatives vary
/// with the sampling seed so that they score differently.
struct Composer {
    prompts: PromptSet,
}

fn after<'a>(text: &'a str, marker: &str) -> &'a str {
    text.split_once(marker).map_or("", |(_, rest)| rest)
}

fn bullets(block: &str) -> Vec<String> {
    block.lines().filter_map(|l| l.strip_prefix("- ")).map(str::to_string).collect()
}

impl Composer {
    fn alternative(obligations: &[String], seed: u64) -> String {
        let first = obligations[0].clone();
        let half = obligations.len().div_ceil(2);
        let parts: Vec<String> = match seed % 5 {
            0 => vec![first, FILLER.into()],
            1 => {
                let mut v = vec![format!("NOT {first}")];
                v.extend(obligations.iter().skip(1).cloned());
                v
            }
            2 => vec!["The rules set out several duties.".into(), first],
            3 => obligations[..half].to_vec(),
            _ => vec!["Compliance is important.".into()],
        };
        join_sentences(&parts)
    }
}

impl ChatModel for Composer {
    fn provider_id(&self) -> &str {
        "toy-composer"
    }

    fn chat(&self, system: &str, user: &str, sampling: &Sampling) -> Result<String> {
        let p = &self.prompts;
        let out = if system == p.insert_obligations {
            let answer = after(user, "Answer: ").split("\n\nObligations:").next().unwrap_or("");
            let mut parts = vec![answer.to_string()];
            parts.extend(bullets(after(user, "Obligations:\n")));
            join_sentences(&parts)
        } else if system == p.loc_rewrite {
            format!("In short, {}", after(user, "Obligation: "))
        } else if system == p.obligations_context {
            Self::alternative(&bullets(after(user, "Obligations:\n")), sampling.seed)
        } else {
            let body = after(user, "\n\n");
            let lines: Vec<&str> = body
                .lines()
                .skip(1)
                .map(|l| l.trim_start_matches("- "))
                .map(|l| l.split_once(": ").filter(|(h, _)| h.starts_with("Passage ")).map_or(l, |(_, t)| t))
                .filter(|l| !l.is_empty())
                .collect();
            let mut parts = vec!["The relevant requirements are as follows.".to_string()];
            parts.extend(lines.iter().map(|s| s.to_string()));
            join_sentences(&parts)
        };
        Ok(out)
    }
}

fn main() -> Result<()> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/toy");
    let mut cfg = RunConfig::load(&dir.join("config.toml"))?;
    cfg.providers.llm = ProviderSpec::mock(MockKind::EchoLlm, 0);
    cfg.output_dir = std::env::temp_dir().join("regrag-record-toy");
    let mut session = Session::open(cfg)?;
    let prompts = session.prompts.clone();
    let recorder = Arc::new(RecordingChat::new(Arc::new(Composer { prompts })));
    let ranked = ranked_lists(&session)?;

    for strategy in [StrategyTag::Vrr, StrategyTag::Loc] {
        generate_answers_with(&session, strategy, &ranked, Some(recorder.clone()))?;
    }
    for variant in [ContextVariant::Passages, ContextVariant::Obligations, ContextVariant::ObligationsTailored] {
        session.config.context_variant = variant;
        generate_answers_with(&session, StrategyTag::Baseline, &ranked, Some(recorder.clone()))?;
    }
    let script = recorder.script();
    let out = dir.join("scripted_llm.json");
    script.save(&out)?;
    println!("recorded {} prompts to {}", script.entries.len(), out.display());
    Ok(())
}
