//! `medos.json`: store location, backends, policy and server settings.
//!
//! Relative paths are resolved against the directory holding the config
//! file (or the working directory when no file is used).

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use medos_core::gateway::{
    ChatBackend, EmbedBackend, OpenAiBackend, RemoteConfig, ScriptFixture, ScriptMode, ScriptedBackend,
    TrigramEmbedder,
};
use medos_core::grounding::{Grounder, GroundingCache};
use medos_core::sim::{ClinicianScript, SimClinician};
use medos_core::workflow::WorkflowPolicy;
use serde::{Deserialize, Serialize};

pub const DEFAULT_CONFIG: &str = "medos.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub store_root: PathBuf,
    /// Specialty folders created by `init`; the built-in list when absent.
    pub specialties: Option<Vec<String>>,
    pub policy: WorkflowPolicy,
    /// Referral, report and discharge require a named approver.
    pub attended: bool,
    pub chat: ChatConfig,
    pub embedding: EmbedConfig,
    pub grounding: GroundingConfig,
    pub server: ServerConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            store_root: PathBuf::from("store"),
            specialties: None,
            policy: WorkflowPolicy::default(),
            attended: false,
            chat: ChatConfig::default(),
            embedding: EmbedConfig::default(),
            grounding: GroundingConfig::default(),
            server: ServerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ChatConfig {
    /// Deterministic simulated clinician driven by an optional script file.
    Sim {
        #[serde(default)]
        script: Option<PathBuf>,
    },
    /// Fixture replay. With `lenient`, unmatched prompts get `fallback`.
    Scripted {
        fixture: PathBuf,
        #[serde(default)]
        lenient: bool,
        #[serde(default)]
        fallback: String,
    },
    /// OpenAI-compatible endpoint configured from the environment.
    Openai,
}

impl Default for ChatConfig {
    fn default() -> Self {
        ChatConfig::Sim { script: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum EmbedConfig {
    #[default]
    Trigram,
    Openai,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroundingMode {
    #[default]
    Offline,
    Online,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroundingConfig {
    pub mode: GroundingMode,
    /// Fixture tree for offline lookups.
    pub fixtures: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub addr: String,
    pub session_ttl_minutes: i64,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            addr: "127.0.0.1:8080".into(),
            session_ttl_minutes: 12 * 60,
        }
    }
}

impl Config {
    /// Loads `path`, or the default config file in the working directory
    /// when it exists, or built-in defaults.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let (file, required) = match path {
            Some(p) => (p.to_path_buf(), true),
            None => (PathBuf::from(DEFAULT_CONFIG), false),
        };
        if !file.exists() {
            if required {
                bail!("config file {} does not exist", file.display());
            }
            return Ok(Self::default().resolved(Path::new(".")));
        }
        let text = std::fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
        let config: Config = serde_json::from_str(&text).with_context(|| format!("parsing {}", file.display()))?;
        let base = file.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        Ok(config.resolved(base))
    }

    fn resolved(mut self, base: &Path) -> Self {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.store_root);
        if let Some(p) = self.grounding.fixtures.as_mut() {
            fix(p);
        }
        match &mut self.chat {
            ChatConfig::Sim { script: Some(p) } => fix(p),
            ChatConfig::Scripted { fixture, .. } => fix(fixture),
            _ => {}
        }
        self
    }

    pub fn chat_backend(&self) -> Result<Arc<dyn ChatBackend>> {
        Ok(match &self.chat {
            ChatConfig::Sim { script } => {
                let script: ClinicianScript = match script {
                    Some(p) => serde_json::from_str(
                        &std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
                    )
                    .with_context(|| format!("parsing {}", p.display()))?,
                    None => ClinicianScript::default(),
                };
                Arc::new(SimClinician::new(script))
            }
            ChatConfig::Scripted {
                fixture,
                lenient,
                fallback,
            } => {
                let mode = if *lenient {
                    ScriptMode::Fallback(fallback.clone())
                } else {
                    ScriptMode::Strict
                };
                Arc::new(ScriptedBackend::new(ScriptFixture::load(fixture, mode)?)?)
            }
            ChatConfig::Openai => Arc::new(OpenAiBackend::new(RemoteConfig::from_env()?)?),
        })
    }

    pub fn embed_backend(&self) -> Result<Arc<dyn EmbedBackend>> {
        Ok(match self.embedding {
            EmbedConfig::Trigram => Arc::new(TrigramEmbedder),
            EmbedConfig::Openai => Arc::new(OpenAiBackend::new(RemoteConfig::from_env()?)?),
        })
    }

    pub fn grounder(&self, store_root: &Path) -> Grounder {
        let cache = GroundingCache::for_store(store_root);
        match self.grounding.mode {
            GroundingMode::Offline => Grounder::offline(cache, self.grounding.fixtures.clone()),
            GroundingMode::Online => Grounder::public_sources(cache),
        }
    }

    pub fn is_offline(&self) -> bool {
        self.grounding.mode == GroundingMode::Offline
            && !matches!(self.chat, ChatConfig::Openai)
            && self.embedding != EmbedConfig::Openai
    }
}
