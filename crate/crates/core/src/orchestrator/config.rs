use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::StrategyTag;
use crate::error::{Error, Result};
use crate::generation::{ContextVariant, FilterConfig, LocConfig, VrrConfig};
use crate::providers::ProviderSpec;
use crate::repass::CoverageThreshold;
use crate::retrieval::RetrievalConfig;

pub const CONFIG_VERSION: u32 = 1;

fn default_version() -> u32 {
    CONFIG_VERSION
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_strategy() -> StrategyTag {
    StrategyTag::Vrr
}

fn default_run_tag() -> String {
    "regrag".into()
}

/// Model slots of a run. `coverage_nli` falls back to `nli`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderSlots {
    pub dense_y: ProviderSpec,
    pub dense_z: ProviderSpec,
    pub reranker: ProviderSpec,
    pub nli: ProviderSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage_nli: Option<ProviderSpec>,
    pub classifier: ProviderSpec,
    pub llm: ProviderSpec,
}

impl ProviderSlots {
    pub fn coverage_nli(&self) -> &ProviderSpec {
        self.coverage_nli.as_ref().unwrap_or(&self.nli)
    }

    fn specs_mut(&mut self) -> impl Iterator<Item = &mut ProviderSpec> {
        [
            Some(&mut self.dense_y),
            Some(&mut self.dense_z),
            Some(&mut self.reranker),
            Some(&mut self.nli),
            self.coverage_nli.as_mut(),
            Some(&mut self.classifier),
            Some(&mut self.llm),
        ]
        .into_iter()
        .flatten()
    }

    pub fn validate(&self) -> Result<()> {
        for (slot, spec) in [
            ("dense_y", &self.dense_y),
            ("dense_z", &self.dense_z),
            ("reranker", &self.reranker),
            ("nli", &self.nli),
            ("coverage_nli", self.coverage_nli()),
            ("classifier", &self.classifier),
            ("llm", &self.llm),
        ] {
            spec.validate().map_err(|e| e.context(format!("provider slot {slot}")))?;
        }
        Ok(())
    }
}

/// Everything one invocation needs. Relative paths in a config file are
/// resolved against the file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_version")]
    pub version: u32,
    pub corpus: PathBuf,
    pub questions: PathBuf,
    /// Existing run file for `generate`; retrieval runs inline when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<PathBuf>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompts: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_strategy")]
    pub strategy: StrategyTag,
    #[serde(default)]
    pub context_variant: ContextVariant,
    #[serde(default)]
    pub tau: CoverageThreshold,
    #[serde(default = "default_run_tag")]
    pub run_tag: String,
    #[serde(default)]
    pub retrieval: RetrievalConfig,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub loc: LocConfig,
    #[serde(default)]
    pub vrr: VrrConfig,
    pub providers: ProviderSlots,
}

impl RunConfig {
    pub fn from_toml(raw: &str) -> Result<Self> {
        toml::from_str(raw).map_err(|e| Error::config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&raw).map_err(|e| e.context(format!("config {}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(e.to_string()))
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus);
        fix(&mut self.questions);
        fix(&mut self.output_dir);
        for p in [&mut self.run, &mut self.cache_dir, &mut self.prompts].into_iter().flatten() {
            fix(p);
        }
        for spec in self.providers.specs_mut() {
            if let ProviderSpec::Mock(m) = spec {
                if let Some(p) = m.script.as_mut() {
                    fix(p);
                }
            }
        }
    }

    pub fn loc_config(&self) -> LocConfig {
        LocConfig { tau: self.tau, seed: self.seed, ..self.loc }
    }

    pub fn vrr_config(&self) -> VrrConfig {
        VrrConfig { seed: self.seed, ..self.vrr }
    }

    /// Checks everything that can be checked without calling a model.
    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        for (name, path) in [("corpus", Some(&self.corpus)), ("questions", Some(&self.questions)), ("run", self.run.as_ref()), ("prompts", self.prompts.as_ref())] {
            if let Some(p) = path {
                if !p.is_file() {
                    return Err(Error::config(format!("{name} file {} does not exist", p.display())));
                }
            }
        }
        if self.run_tag.is_empty() || self.run_tag.contains(char::is_whitespace) {
            return Err(Error::config(format!("run_tag {:?} must be non-empty without whitespace", self.run_tag)));
        }
        self.retrieval.validate()?;
        self.filter.validate()?;
        self.loc.validate()?;
        self.vrr.validate()?;
        self.providers.validate()
    }
}
