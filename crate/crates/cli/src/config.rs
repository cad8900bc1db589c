//! TOML run configuration. Flags override file values; the live-backend
//! credential only ever comes from the environment.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clinreason_core::llm::{MockRules, RetryPolicy, DEFAULT_IN_FLIGHT};
use clinreason_core::prompts::DecodeParams;
use clinreason_core::textualize::{Grouping, LevelCase};
use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub paths: Paths,
    pub backend: BackendSettings,
    pub decode: DecodeParams,
    pub textualize: TextualizeSettings,
    pub split: SplitSettings,
    pub seeds: Seeds,
    pub mock: MockRules,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub cohort: Option<PathBuf>,
    pub descriptions: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub exemplars: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths { cohort: None, descriptions: None, cache: None, exemplars: None, output_dir: PathBuf::from("runs") }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKindArg {
    Mock,
    Live,
    Replay,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSettings {
    pub kind: BackendKindArg,
    pub endpoint: String,
    pub model_id: String,
    pub max_in_flight: usize,
    /// Name of the variable holding the token, not the token itself.
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
}

impl Default for BackendSettings {
    fn default() -> Self {
        let live = clinreason_core::llm::LiveConfig::default();
        BackendSettings {
            kind: BackendKindArg::Mock,
            endpoint: live.endpoint,
            model_id: "mock".into(),
            max_in_flight: DEFAULT_IN_FLIGHT,
            api_key_env: live.api_key_env,
            timeout_secs: live.timeout_secs,
            retry: live.retry,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupingArg {
    SexAge,
    Global,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextualizeSettings {
    pub grouping: GroupingArg,
    pub age_bucket_width: u32,
    pub level_case: LevelCase,
}

impl Default for TextualizeSettings {
    fn default() -> Self {
        TextualizeSettings { grouping: GroupingArg::SexAge, age_bucket_width: 5, level_case: LevelCase::Sentence }
    }
}

impl TextualizeSettings {
    pub fn grouping(&self) -> Grouping {
        match self.grouping {
            GroupingArg::SexAge => Grouping::SexAgeBucket { width: self.age_bucket_width },
            GroupingArg::Global => Grouping::Global,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSettings {
    pub train: Option<usize>,
    pub valid: Option<usize>,
    pub test: Option<usize>,
    pub stratify: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub synth: u64,
    pub split: u64,
    pub campaign: u64,
    pub subsample: u64,
    pub review: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds { synth: 42, split: 42, campaign: 0, subsample: 0, review: 0 }
    }
}

const SECRET_KEYS: &[&str] = &["api_key", "apikey", "token", "secret", "password"];

impl Config {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Config> {
        let Some(path) = path else { return Ok(Config::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let raw: toml::Table = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        if let Some(key) = find_secret(&raw) {
            bail!("config key `{key}` looks like a credential; set the variable named by backend.api_key_env instead");
        }
        toml::Value::Table(raw)
            .try_into()
            .with_context(|| format!("invalid config {}", path.display()))
    }
}

fn find_secret(table: &toml::Table) -> Option<String> {
    for (k, v) in table {
        if SECRET_KEYS.contains(&k.to_ascii_lowercase().as_str()) {
            return Some(k.clone());
        }
        if let toml::Value::Table(t) = v {
            if let Some(inner) = find_secret(t) {
                return Some(format!("{k}.{inner}"));
            }
        }
    }
    None
}
