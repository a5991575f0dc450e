use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use firewatch_core::classify::DEFAULT_THRESHOLD;
use serde::{Deserialize, Serialize};

use crate::query::{parse_keyword_query, Query, QueryError};
use crate::region::{AliasTable, AliasTableError, RegionAlias};
use crate::source::SourceDescriptor;

pub const ENV_PREFIX: &str = "FIREWATCH_";
pub const MIN_POLL_INTERVAL_SECS: u64 = 30;
pub const DEFAULT_POLL_INTERVAL_SECS: u64 = 300;
pub const DEFAULT_QUERY: &str = "(bala voando) OR tiro OR tiroteio OR baleado";
pub const DEFAULT_TEMPLATE: &str =
    "Olá @{handle}, vimos sua publicação sobre disparos em {region}. Pode nos dizer onde e quando aconteceu?";
pub const TEMPLATE_PLACEHOLDERS: [&str; 4] = ["handle", "region", "post_id", "url"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorConfig {
    pub keyword_query: String,
    pub poll_interval_secs: u64,
    pub region: String,
    /// Inline aliases; checked before the ones from `alias_table`.
    pub aliases: Vec<RegionAlias>,
    /// CSV file with `pattern,region` rows.
    pub alias_table: Option<PathBuf>,
    pub threshold: f64,
    /// Per-region threshold overrides.
    pub region_thresholds: BTreeMap<String, f64>,
    pub source: Option<SourceDescriptor>,
    /// Placeholders: `{handle}`, `{region}`, `{post_id}`, `{url}`.
    pub interaction_template: String,
    pub template_id: String,
    /// Link to the original post; `{handle}` and `{id}` are substituted.
    pub post_url_template: String,
    pub store_path: PathBuf,
    /// Static bearer token for every route except `/health`.
    pub api_token: Option<String>,
    pub bind: SocketAddr,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            keyword_query: DEFAULT_QUERY.into(),
            poll_interval_secs: DEFAULT_POLL_INTERVAL_SECS,
            region: String::new(),
            aliases: Vec::new(),
            alias_table: None,
            threshold: DEFAULT_THRESHOLD,
            region_thresholds: BTreeMap::new(),
            source: None,
            interaction_template: DEFAULT_TEMPLATE.into(),
            template_id: "follow-up-v1".into(),
            post_url_template: "https://twitter.com/{handle}/status/{id}".into(),
            store_path: PathBuf::from("firewatch-journal.jsonl"),
            api_token: None,
            bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Toml { path: PathBuf, source: toml::de::Error },
    #[error("{key}={value:?}: {reason}")]
    Env { key: String, value: String, reason: String },
    #[error("keyword_query: {0}")]
    Query(#[from] QueryError),
    #[error(transparent)]
    Aliases(#[from] AliasTableError),
    #[error("{0}")]
    Invalid(String),
}

impl MonitorConfig {
    pub fn new(region: impl Into<String>, keyword_query: impl Into<String>, source: SourceDescriptor) -> Self {
        Self {
            region: region.into(),
            keyword_query: keyword_query.into(),
            source: Some(source),
            ..Self::default()
        }
    }

    /// Reads a TOML file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: MonitorConfig = toml::from_str(&text).map_err(|source| ConfigError::Toml {
            path: path.to_path_buf(),
            source,
        })?;
        if let Some(dir) = path.parent() {
            let rebase = |p: &mut PathBuf| {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            };
            if let Some(p) = cfg.alias_table.as_mut() {
                rebase(p);
            }
            if let Some(SourceDescriptor::Replay { path, .. }) = cfg.source.as_mut() {
                rebase(path);
            }
            rebase(&mut cfg.store_path);
        }
        Ok(cfg)
    }

    /// Overrides fields from `FIREWATCH_*` variables. Unrelated variables
    /// are ignored.
    pub fn apply_env<I, K, V>(&mut self, vars: I) -> Result<(), ConfigError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut replay: Option<PathBuf> = None;
        let mut url: Option<String> = None;
        let mut source_token: Option<String> = None;
        let mut batch_size: Option<usize> = None;
        for (k, v) in vars {
            let (key, value) = (k.as_ref(), v.as_ref());
            let Some(name) = key.strip_prefix(ENV_PREFIX) else { continue };
            let bad = |reason: &str| ConfigError::Env {
                key: key.to_string(),
                value: value.to_string(),
                reason: reason.to_string(),
            };
            match name {
                "KEYWORD_QUERY" => self.keyword_query = value.to_string(),
                "POLL_INTERVAL_SECS" => self.poll_interval_secs = value.parse().map_err(|_| bad("not a whole number of seconds"))?,
                "REGION" => self.region = value.to_string(),
                "ALIAS_TABLE" => self.alias_table = Some(PathBuf::from(value)),
                "THRESHOLD" => self.threshold = value.parse().map_err(|_| bad("not a number"))?,
                "SOURCE_REPLAY" => replay = Some(PathBuf::from(value)),
                "SOURCE_URL" => url = Some(value.to_string()),
                "SOURCE_TOKEN" => source_token = Some(value.to_string()),
                "SOURCE_BATCH_SIZE" => batch_size = Some(value.parse().map_err(|_| bad("not a whole number"))?),
                "INTERACTION_TEMPLATE" => self.interaction_template = value.to_string(),
                "TEMPLATE_ID" => self.template_id = value.to_string(),
                "POST_URL_TEMPLATE" => self.post_url_template = value.to_string(),
                "STORE_PATH" => self.store_path = PathBuf::from(value),
                "API_TOKEN" => self.api_token = Some(value.to_string()).filter(|t| !t.is_empty()),
                "BIND" => self.bind = value.parse().map_err(|_| bad("not a socket address"))?,
                _ => {}
            }
        }
        match (replay, url) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::Invalid(
                    "FIREWATCH_SOURCE_REPLAY and FIREWATCH_SOURCE_URL are mutually exclusive".into(),
                ))
            }
            (Some(path), None) => self.source = Some(SourceDescriptor::Replay { path, batch_size }),
            (None, Some(url)) => {
                self.source = Some(SourceDescriptor::Http {
                    url,
                    token: source_token,
                    timeout_secs: 30,
                })
            }
            (None, None) => match self.source.as_mut() {
                Some(SourceDescriptor::Http { token, .. }) if source_token.is_some() => *token = source_token,
                Some(SourceDescriptor::Replay { batch_size: b, .. }) if batch_size.is_some() => *b = batch_size,
                _ => {}
            },
        }
        Ok(())
    }

    pub fn poll_interval(&self) -> Duration {
        Duration::from_secs(self.poll_interval_secs)
    }

    pub fn query(&self) -> Result<Query, QueryError> {
        parse_keyword_query(&self.keyword_query)
    }

    pub fn effective_threshold(&self) -> f64 {
        self.region_thresholds.get(&self.region).copied().unwrap_or(self.threshold)
    }

    /// Inline aliases followed by the CSV table, if any.
    pub fn alias_table_resolved(&self) -> Result<AliasTable, ConfigError> {
        let mut aliases = self.aliases.clone();
        if let Some(path) = &self.alias_table {
            aliases.extend(AliasTable::from_csv(path)?.aliases().iter().cloned());
        }
        Ok(AliasTable::new(aliases))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.poll_interval_secs < MIN_POLL_INTERVAL_SECS {
            return Err(ConfigError::Invalid(format!(
                "poll_interval_secs is {}; the minimum is {MIN_POLL_INTERVAL_SECS}",
                self.poll_interval_secs
            )));
        }
        self.query()?;
        if self.region.trim().is_empty() {
            return Err(ConfigError::Invalid("region is not set".into()));
        }
        for (name, t) in std::iter::once(("threshold", &self.threshold)).chain(self.region_thresholds.iter().map(|(k, v)| (k.as_str(), v))) {
            if !(0.0..=1.0).contains(t) {
                return Err(ConfigError::Invalid(format!("{name} threshold {t} is outside [0, 1]")));
            }
        }
        if self.source.is_none() {
            return Err(ConfigError::Invalid("no source configured".into()));
        }
        check_placeholders(&self.interaction_template, &TEMPLATE_PLACEHOLDERS)?;
        check_placeholders(&self.post_url_template, &["handle", "id"])?;
        Ok(())
    }
}

fn check_placeholders(template: &str, allowed: &[&str]) -> Result<(), ConfigError> {
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let Some(close) = after.find('}') else {
            return Err(ConfigError::Invalid(format!("unclosed '{{' in template {template:?}")));
        };
        let name = &after[..close];
        if !allowed.contains(&name) {
            return Err(ConfigError::Invalid(format!(
                "unknown placeholder {{{name}}} in template {template:?}; allowed: {}",
                allowed.join(", ")
            )));
        }
        rest = &after[close + 1..];
    }
    Ok(())
}

/// Substitutes `{name}` placeholders. Unknown names are left as written.
pub fn render_template(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (name, value) in values {
        out = out.replace(&format!("{{{name}}}"), value);
    }
    out
}
