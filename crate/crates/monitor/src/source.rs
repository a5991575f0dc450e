use std::collections::{BTreeSet, HashSet};
use std::path::PathBuf;
use std::time::Duration;

use chrono::{DateTime, Utc};
use firewatch_core::corpus::load_corpus;
use firewatch_core::textprep::RawPost;
use serde::{Deserialize, Serialize};

use crate::query::Query;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SourceDescriptor {
    /// A corpus file, re-read on every poll so appended lines show up.
    Replay {
        path: PathBuf,
        /// Release at most this many new posts per poll.
        #[serde(default)]
        batch_size: Option<usize>,
    },
    /// `GET url?q=<query>&since=<rfc3339>` returning a JSON array of posts
    /// or `{"posts": [...]}`.
    Http {
        url: String,
        #[serde(default)]
        token: Option<String>,
        #[serde(default = "default_http_timeout")]
        timeout_secs: u64,
    },
}

fn default_http_timeout() -> u64 {
    30
}

#[derive(Debug, thiserror::Error)]
pub enum SourceError {
    #[error("source unreachable: {0}")]
    Unreachable(String),
    #[error("source returned malformed data: {0}")]
    Malformed(String),
}

impl SourceError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, SourceError::Unreachable(_))
    }
}

/// High-water mark over `created_at`. Posts at exactly the watermark are
/// told apart by id so equal timestamps are neither lost nor repeated.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cursor {
    pub watermark: Option<DateTime<Utc>>,
    #[serde(default)]
    pub ids_at_watermark: BTreeSet<String>,
}

impl Cursor {
    pub fn is_new(&self, post: &RawPost) -> bool {
        match self.watermark {
            None => true,
            Some(w) => post.created_at > w || (post.created_at == w && !self.ids_at_watermark.contains(&post.id)),
        }
    }

    pub fn advanced(&self, posts: &[RawPost]) -> Cursor {
        let mut next = self.clone();
        for p in posts {
            match next.watermark {
                Some(w) if p.created_at < w => {}
                Some(w) if p.created_at == w => {
                    next.ids_at_watermark.insert(p.id.clone());
                }
                _ => {
                    next.watermark = Some(p.created_at);
                    next.ids_at_watermark = BTreeSet::from([p.id.clone()]);
                }
            }
        }
        next
    }
}

pub trait PostSource: Send {
    /// Posts newer than `cursor`. The query is a hint; callers filter again.
    fn fetch(&mut self, query: &Query, cursor: &Cursor) -> Result<Vec<RawPost>, SourceError>;

    fn describe(&self) -> String;
}

pub struct ReplaySource {
    path: Option<PathBuf>,
    posts: Vec<RawPost>,
    batch_size: Option<usize>,
}

impl ReplaySource {
    pub fn from_path(path: impl Into<PathBuf>, batch_size: Option<usize>) -> Self {
        Self {
            path: Some(path.into()),
            posts: Vec::new(),
            batch_size,
        }
    }

    pub fn from_posts(posts: Vec<RawPost>, batch_size: Option<usize>) -> Self {
        let mut s = Self {
            path: None,
            posts,
            batch_size,
        };
        s.sort();
        s
    }

    fn sort(&mut self) {
        self.posts.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.id.cmp(&b.id)));
    }
}

impl PostSource for ReplaySource {
    fn fetch(&mut self, _query: &Query, cursor: &Cursor) -> Result<Vec<RawPost>, SourceError> {
        if let Some(path) = &self.path {
            let loaded = load_corpus(path).map_err(|e| SourceError::Unreachable(e.to_string()))?;
            self.posts = loaded.posts;
            self.sort();
        }
        let fresh = self.posts.iter().filter(|p| cursor.is_new(p)).cloned();
        Ok(match self.batch_size {
            Some(n) => fresh.take(n).collect(),
            None => fresh.collect(),
        })
    }

    fn describe(&self) -> String {
        match &self.path {
            Some(p) => format!("replay:{}", p.display()),
            None => format!("replay:<{} in-memory posts>", self.posts.len()),
        }
    }
}

pub struct HttpSource {
    url: String,
    token: Option<String>,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum HttpPayload {
    Bare(Vec<RawPost>),
    Wrapped { posts: Vec<RawPost> },
}

impl HttpSource {
    pub fn new(url: impl Into<String>, token: Option<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into();
        Self {
            url: url.into(),
            token,
            agent,
        }
    }
}

impl PostSource for HttpSource {
    fn fetch(&mut self, query: &Query, cursor: &Cursor) -> Result<Vec<RawPost>, SourceError> {
        let mut req = self.agent.get(&self.url).query("q", query.to_string());
        if let Some(w) = cursor.watermark {
            req = req.query("since", w.to_rfc3339());
        }
        if let Some(t) = &self.token {
            req = req.header("Authorization", format!("Bearer {t}"));
        }
        let mut resp = req.call().map_err(|e| SourceError::Unreachable(e.to_string()))?;
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| SourceError::Unreachable(e.to_string()))?;
        let payload: HttpPayload = serde_json::from_str(&body).map_err(|e| SourceError::Malformed(e.to_string()))?;
        let posts = match payload {
            HttpPayload::Bare(p) | HttpPayload::Wrapped { posts: p } => p,
        };
        Ok(posts.into_iter().filter(|p| p.validate().is_ok()).collect())
    }

    fn describe(&self) -> String {
        format!("http:{}", self.url)
    }
}

pub fn build_source(desc: &SourceDescriptor) -> Box<dyn PostSource> {
    match desc {
        SourceDescriptor::Replay { path, batch_size } => Box::new(ReplaySource::from_path(path, *batch_size)),
        SourceDescriptor::Http {
            url,
            token,
            timeout_secs,
        } => Box::new(HttpSource::new(url, token.clone(), Duration::from_secs(*timeout_secs))),
    }
}

/// Fetches, drops anything at or behind the cursor and repeated ids, and
/// keeps the posts the query matches. The cursor advances past every new
/// post, matching or not; on error it is left alone.
pub fn poll_once(query: &Query, source: &mut dyn PostSource, cursor: &Cursor) -> Result<(Vec<RawPost>, Cursor), SourceError> {
    let fetched = source.fetch(query, cursor)?;
    let mut seen = HashSet::new();
    let fresh: Vec<RawPost> = fetched
        .into_iter()
        .filter(|p| cursor.is_new(p) && seen.insert(p.id.clone()))
        .collect();
    let next = cursor.advanced(&fresh);
    let matching = fresh.into_iter().filter(|p| query.matches(&p.text)).collect();
    Ok((matching, next))
}
