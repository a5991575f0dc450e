use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::JoinHandle;
use std::time::Duration;

use chrono::{DateTime, Utc};
use firewatch_core::classify::Classifier;
use firewatch_impact::InteractionRecord;
use serde::{Deserialize, Serialize};

use crate::bucket::{classify_and_bucket, Bucket};
use crate::config::{render_template, ConfigError, MonitorConfig};
use crate::query::{parse_keyword_query, Query, QueryError};
use crate::region::AliasTable;
use crate::source::{build_source, poll_once, PostSource, SourceError};
use crate::store::{BatchSummary, Store, StoreError, StoredPost};

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineStatus {
    /// End of the last poll, classify and persist cycle that completed.
    pub last_success_at: Option<DateTime<Utc>>,
    pub last_batch_size: usize,
    pub consecutive_failures: u32,
    pub last_error: Option<String>,
    pub last_quarantined: usize,
    pub cycles_completed: u64,
    pub poll_interval_secs: u64,
    pub source: String,
}

#[derive(Debug, thiserror::Error)]
pub enum MonitorError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, thiserror::Error)]
pub enum InteractionError {
    #[error("post {0} not found")]
    NotFound(String),
    #[error("post {} already answered by {} at {}", .0.post_id, .0.operator, .0.sent_at)]
    Conflict(Box<InteractionRecord>),
    #[error("operator id is empty")]
    MissingOperator,
    #[error(transparent)]
    Store(StoreError),
}

#[derive(Debug, thiserror::Error)]
pub enum KeywordError {
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleReport {
    pub fetched_matching: usize,
    pub summary: BatchSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionReceipt {
    pub record: InteractionRecord,
    /// Text for the analyst to post; nothing is sent from here.
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordUpdate {
    pub query: String,
    pub previous: String,
    pub changed: bool,
}

/// One table row as the triage UI shows it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabRow {
    pub post_id: String,
    pub text: String,
    pub created_at: DateTime<Utc>,
    pub author_handle: String,
    pub user_location: Option<String>,
    pub profile_bio: Option<String>,
    pub score: Option<f64>,
    pub matched_region: Option<String>,
    /// Absent when the author handle is unknown.
    pub post_url: Option<String>,
    pub avatar_url: Option<String>,
    pub interacted: bool,
    pub interaction: Option<InteractionRecord>,
    pub quarantine_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabPage {
    pub tab: Bucket,
    pub rows: Vec<TabRow>,
    pub next_cursor: Option<String>,
    pub total: usize,
}

struct Active {
    config: MonitorConfig,
    query: Query,
}

pub struct Monitor {
    active: RwLock<Arc<Active>>,
    aliases: AliasTable,
    classifier: Arc<dyn Classifier>,
    /// Also the cycle lock: one poll at a time.
    source: Mutex<Box<dyn PostSource>>,
    store: Store,
    status: RwLock<PipelineStatus>,
    clock: Clock,
}

impl Monitor {
    /// A keyword query changed at runtime and recorded in the store takes
    /// the place of the configured one.
    pub fn new(
        mut config: MonitorConfig,
        classifier: Arc<dyn Classifier>,
        source: Box<dyn PostSource>,
        store: Store,
    ) -> Result<Self, ConfigError> {
        config.validate()?;
        if let Some(q) = store.keyword_override() {
            match parse_keyword_query(&q) {
                Ok(_) => config.keyword_query = q,
                Err(e) => tracing::warn!(query = %q, error = %e, "ignoring stored keyword query"),
            }
        }
        let query = config.query()?;
        let aliases = config.alias_table_resolved()?;
        let status = PipelineStatus {
            last_success_at: store.last_batch_at(),
            last_batch_size: 0,
            consecutive_failures: 0,
            last_error: None,
            last_quarantined: 0,
            cycles_completed: 0,
            poll_interval_secs: config.poll_interval_secs,
            source: source.describe(),
        };
        Ok(Self {
            active: RwLock::new(Arc::new(Active { config, query })),
            aliases,
            classifier,
            source: Mutex::new(source),
            store,
            status: RwLock::new(status),
            clock: Arc::new(Utc::now),
        })
    }

    /// Builds the source and opens the journal named in the config.
    pub fn from_config(config: MonitorConfig, classifier: Arc<dyn Classifier>) -> Result<Self, MonitorError> {
        config.validate()?;
        let source = build_source(config.source.as_ref().expect("validated"));
        let store = Store::open(&config.store_path)?;
        Ok(Self::new(config, classifier, source, store)?)
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    fn now(&self) -> DateTime<Utc> {
        (self.clock)()
    }

    fn active(&self) -> Arc<Active> {
        self.active.read().unwrap().clone()
    }

    pub fn config(&self) -> MonitorConfig {
        self.active().config.clone()
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn status(&self) -> PipelineStatus {
        self.status.read().unwrap().clone()
    }

    /// One poll, classify and persist pass. Configuration is read once at
    /// the start, so a keyword change lands at the next cycle boundary.
    pub fn run_cycle(&self) -> Result<CycleReport, MonitorError> {
        let mut source = self.source.lock().unwrap();
        let active = self.active();
        let cfg = &active.config;
        let result = poll_once(&active.query, source.as_mut(), &self.store.cursor())
            .map_err(MonitorError::from)
            .and_then(|(batch, cursor)| {
                let fetched_matching = batch.len();
                let bucketed = classify_and_bucket(
                    batch,
                    self.classifier.as_ref(),
                    cfg.effective_threshold(),
                    &cfg.region,
                    &self.aliases,
                );
                let summary = self.store.commit_batch(self.now(), cursor, bucketed)?;
                Ok(CycleReport {
                    fetched_matching,
                    summary,
                })
            });
        let mut status = self.status.write().unwrap();
        status.poll_interval_secs = cfg.poll_interval_secs;
        match &result {
            Ok(report) => {
                let now = self.now();
                status.last_success_at = Some(status.last_success_at.map_or(now, |prev| prev.max(now)));
                status.last_batch_size = report.summary.inserted + report.summary.quarantined;
                status.last_quarantined = report.summary.quarantined;
                status.consecutive_failures = 0;
                status.last_error = None;
                status.cycles_completed += 1;
            }
            Err(e) => {
                tracing::warn!(error = %e, "poll cycle failed");
                status.consecutive_failures += 1;
                status.last_error = Some(e.to_string());
            }
        }
        result
    }

    fn row(&self, cfg: &MonitorConfig, entry: crate::store::PageEntry) -> TabRow {
        let StoredPost {
            post,
            score,
            matched_region,
            quarantine_reason,
            ..
        } = entry.post;
        let post_url = (!post.author_handle.is_empty())
            .then(|| render_template(&cfg.post_url_template, &[("handle", &post.author_handle), ("id", &post.id)]));
        TabRow {
            post_id: post.id,
            text: post.text,
            created_at: post.created_at,
            author_handle: post.author_handle,
            user_location: post.author_location_text,
            profile_bio: post.author_bio,
            score,
            matched_region,
            post_url,
            avatar_url: post.avatar_url,
            interacted: entry.interaction.is_some(),
            interaction: entry.interaction,
            quarantine_reason,
        }
    }

    pub fn get_tab(&self, tab: Bucket, cursor: Option<&str>, limit: usize) -> Result<TabPage, StoreError> {
        let page = self.store.get_tab(tab, cursor, limit)?;
        let active = self.active();
        Ok(TabPage {
            tab,
            rows: page.entries.into_iter().map(|e| self.row(&active.config, e)).collect(),
            next_cursor: page.next_cursor,
            total: page.total,
        })
    }

    /// Logs an analyst reply and renders the standard message for it.
    pub fn record_interaction(&self, post_id: &str, operator: &str) -> Result<InteractionReceipt, InteractionError> {
        if operator.trim().is_empty() {
            return Err(InteractionError::MissingOperator);
        }
        let stored = self
            .store
            .post(post_id)
            .ok_or_else(|| InteractionError::NotFound(post_id.to_string()))?;
        let cfg = self.config();
        let region = stored.matched_region.clone().unwrap_or_else(|| cfg.region.clone());
        let record = InteractionRecord {
            post_id: post_id.to_string(),
            region: region.clone(),
            sent_at: self.now(),
            template_id: cfg.template_id.clone(),
            operator: operator.trim().to_string(),
        };
        let record = self.store.record_interaction(record).map_err(|e| match e {
            StoreError::NotFound(id) => InteractionError::NotFound(id),
            StoreError::Conflict(r) => InteractionError::Conflict(r),
            other => InteractionError::Store(other),
        })?;
        let url = (!stored.post.author_handle.is_empty())
            .then(|| {
                render_template(
                    &cfg.post_url_template,
                    &[("handle", &stored.post.author_handle), ("id", &stored.post.id)],
                )
            })
            .unwrap_or_default();
        let message = render_template(
            &cfg.interaction_template,
            &[
                ("handle", &stored.post.author_handle),
                ("region", &region),
                ("post_id", post_id),
                ("url", &url),
            ],
        );
        Ok(InteractionReceipt { record, message })
    }

    /// Swaps in a new keyword query for the next poll. A query that parses
    /// to the same tree is acknowledged without change.
    pub fn update_keywords(&self, query: &str) -> Result<KeywordUpdate, KeywordError> {
        let parsed = parse_keyword_query(query)?;
        let mut active = self.active.write().unwrap();
        let previous = active.config.keyword_query.clone();
        if parsed == active.query {
            return Ok(KeywordUpdate {
                query: previous.clone(),
                previous,
                changed: false,
            });
        }
        let text = query.trim().to_string();
        self.store.record_keyword_change(self.now(), &previous, &text)?;
        tracing::info!(previous = %previous, query = %text, "keyword query changed");
        let mut config = active.config.clone();
        config.keyword_query = text.clone();
        *active = Arc::new(Active { config, query: parsed });
        Ok(KeywordUpdate {
            query: text,
            previous,
            changed: true,
        })
    }
}

pub struct PollerHandle {
    stop: mpsc::Sender<()>,
    join: JoinHandle<()>,
}

impl PollerHandle {
    /// Stops after the cycle in progress, if any.
    pub fn stop(self) {
        let _ = self.stop.send(());
        let _ = self.join.join();
    }
}

/// Runs a cycle right away, then once per poll interval until stopped.
pub fn spawn_poller(monitor: Arc<Monitor>) -> PollerHandle {
    spawn_poller_every(monitor, None)
}

/// Like [`spawn_poller`] with a fixed wait between cycles instead of the
/// configured interval. For demos and tests.
pub fn spawn_poller_every(monitor: Arc<Monitor>, every: Option<Duration>) -> PollerHandle {
    let (stop, rx) = mpsc::channel();
    let join = std::thread::Builder::new()
        .name("firewatch-poller".into())
        .spawn(move || loop {
            if let Ok(report) = monitor.run_cycle() {
                tracing::debug!(?report, "poll cycle done");
            }
            let wait = every.unwrap_or_else(|| monitor.config().poll_interval());
            match rx.recv_timeout(wait) {
                Err(RecvTimeoutError::Timeout) => continue,
                _ => break,
            }
        })
        .expect("spawn poller thread");
    PollerHandle { stop, join }
}
