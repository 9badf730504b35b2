//! Hub configuration file (TOML).
//!
//! Sections: `identity`, `card`, `messages`, `targets`, `rules`, `docqa`,
//! `corpus`, `acl`, `canned_answers`. Corpus paths are relative to the
//! config file's directory.

use crate::boundaries::{BoundaryKind, DownstreamTarget, TargetError, DEFAULT_TARGET_TIMEOUT};
use crate::docqa::DEFAULT_TOP_K;
use crate::downstream::Messages;
use crate::generalqa::{CannedAnswerTable, CannedEntry, CannedTableError};
use crate::router::{default_rules, Route, RoutingRule, RuleTable, RuleTableError};
use crate::simnet::AclGrant;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::time::Duration;
use thiserror::Error;

pub const ENV_PORT: &str = "A2A_HUB_PORT";
pub const ENV_CONFIG: &str = "A2A_HUB_CONFIG";
pub const DEFAULT_PORT: u16 = 8080;
/// Scheme for target URLs that point at a simulator agent by id.
pub const SIM_SCHEME: &str = "sim://";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Rules(#[from] RuleTableError),
    #[error(transparent)]
    Target(#[from] TargetError),
    #[error(transparent)]
    Canned(#[from] CannedTableError),
    #[error("route `{route}` is bound to both `{first}` and `{second}`")]
    DuplicateBinding {
        route: Route,
        first: String,
        second: String,
    },
    #[error("target `{0}`: only the expense and pm routes are served by downstream agents")]
    InProcessRoute(String),
    #[error("target `{target}` points at simulator agent `{agent}`, which is not running")]
    UnresolvedSimTarget { target: String, agent: String },
    #[error("duplicate target id `{0}`")]
    DuplicateTarget(String),
    #[error("identity.caller must not be empty")]
    EmptyIdentity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdentityConfig {
    /// Service identity used for token requests and evidence reads.
    pub caller: String,
    pub build: String,
}

impl Default for IdentityConfig {
    fn default() -> Self {
        Self {
            caller: "a2a-hub@hub-project.iam".to_string(),
            build: concat!("a2a-hub ", env!("CARGO_PKG_VERSION")).to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillConfig {
    pub id: String,
    pub name: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CardConfig {
    pub name: String,
    pub description: String,
    pub url: String,
    pub version: String,
    pub skills: Vec<SkillConfig>,
}

impl Default for CardConfig {
    fn default() -> Self {
        Self {
            name: "A2A Hub".to_string(),
            description: "Routes enterprise questions to expense, project-management, document QA and general QA backends.".to_string(),
            url: format!("http://localhost:{DEFAULT_PORT}/"),
            version: env!("CARGO_PKG_VERSION").to_string(),
            skills: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetConfig {
    pub id: String,
    pub url: String,
    pub boundary: BoundaryKind,
    #[serde(default)]
    pub audience: Option<String>,
    #[serde(default)]
    pub timeout_ms: Option<u64>,
    /// Route served by this target.
    #[serde(default)]
    pub route: Option<Route>,
}

impl TargetConfig {
    pub fn to_target(&self, url: String) -> Result<DownstreamTarget, TargetError> {
        DownstreamTarget::new(
            self.id.clone(),
            url,
            self.boundary,
            self.audience.clone(),
            self.timeout_ms
                .map_or(DEFAULT_TARGET_TIMEOUT, Duration::from_millis),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub doc_uri: String,
    pub file_path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DocQaConfig {
    pub top_k: usize,
}

impl Default for DocQaConfig {
    fn default() -> Self {
        Self {
            top_k: DEFAULT_TOP_K,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CannedAnswersConfig {
    pub default_answer: String,
    pub entries: Vec<CannedEntry>,
}

impl Default for CannedAnswersConfig {
    fn default() -> Self {
        Self {
            default_answer: "I don't have a configured answer for that question yet.".to_string(),
            entries: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HubConfig {
    #[serde(default)]
    pub identity: IdentityConfig,
    #[serde(default)]
    pub card: CardConfig,
    #[serde(default)]
    pub messages: Messages,
    #[serde(default)]
    pub targets: Vec<TargetConfig>,
    #[serde(default = "default_rules")]
    pub rules: Vec<RoutingRule>,
    #[serde(default)]
    pub docqa: DocQaConfig,
    #[serde(default)]
    pub corpus: Vec<CorpusEntry>,
    #[serde(default)]
    pub acl: Vec<AclGrant>,
    #[serde(default)]
    pub canned_answers: CannedAnswersConfig,
}

impl Default for HubConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config uses defaults")
    }
}

/// Config plus everything read from disk, validated.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: HubConfig,
    pub rules: RuleTable,
    pub canned: CannedAnswerTable,
    /// `(doc_uri, text)` in config order.
    pub documents: Vec<(String, String)>,
}

impl HubConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    /// Reads the file and the corpus it references.
    pub fn load(path: impl AsRef<Path>) -> Result<LoadedConfig, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let config = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve(base)
    }

    /// Validates and reads corpus files relative to `base_dir`.
    pub fn resolve(self, base_dir: &Path) -> Result<LoadedConfig, ConfigError> {
        self.validate()?;
        let mut documents = Vec::with_capacity(self.corpus.len());
        for entry in &self.corpus {
            let file = base_dir.join(&entry.file_path);
            let text = std::fs::read_to_string(&file).map_err(|source| ConfigError::Io {
                path: file.clone(),
                source,
            })?;
            documents.push((entry.doc_uri.clone(), text));
        }
        Ok(LoadedConfig {
            rules: RuleTable::new(self.rules.clone())?,
            canned: CannedAnswerTable::new(
                self.canned_answers.entries.clone(),
                self.canned_answers.default_answer.clone(),
            )?,
            documents,
            config: self,
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.identity.caller.trim().is_empty() {
            return Err(ConfigError::EmptyIdentity);
        }
        RuleTable::new(self.rules.clone())?;
        let mut ids = BTreeMap::new();
        let mut bound: HashMap<Route, &str> = HashMap::new();
        for t in &self.targets {
            if ids.insert(t.id.as_str(), ()).is_some() {
                return Err(ConfigError::DuplicateTarget(t.id.clone()));
            }
            t.to_target(t.url.clone())?;
            if let Some(route) = t.route {
                if !matches!(route, Route::Expense | Route::Pm) {
                    return Err(ConfigError::InProcessRoute(t.id.clone()));
                }
                if let Some(first) = bound.insert(route, &t.id) {
                    return Err(ConfigError::DuplicateBinding {
                        route,
                        first: first.to_string(),
                        second: t.id.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Targets keyed by the route they serve. `sim://<agent>` URLs are
    /// resolved through `agent_urls`.
    pub fn route_targets(
        &self,
        agent_urls: &BTreeMap<String, String>,
    ) -> Result<HashMap<Route, DownstreamTarget>, ConfigError> {
        let mut out = HashMap::new();
        for t in &self.targets {
            let url = match t.url.strip_prefix(SIM_SCHEME) {
                Some(agent) => agent_urls
                    .get(agent.trim_end_matches('/'))
                    .cloned()
                    .ok_or_else(|| ConfigError::UnresolvedSimTarget {
                        target: t.id.clone(),
                        agent: agent.to_string(),
                    })?,
                None => t.url.clone(),
            };
            let target = t.to_target(url)?;
            if let Some(route) = t.route {
                out.insert(route, target);
            }
        }
        Ok(out)
    }
}
