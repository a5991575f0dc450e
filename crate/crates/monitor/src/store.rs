//! Append-only JSONL journal with an in-memory index. Each poll cycle is
//! one line, so a crash mid-write loses at most a torn last line, which is
//! skipped on reload.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use chrono::{DateTime, NaiveDate, Utc};
use firewatch_core::textprep::RawPost;
use firewatch_impact::InteractionRecord;
use serde::{Deserialize, Serialize};

use crate::bucket::{Bucket, Bucketed};
use crate::source::Cursor;

pub const MAX_PAGE_SIZE: usize = 200;
pub const DEFAULT_PAGE_SIZE: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredPost {
    /// Insertion order, unique across the store.
    pub seq: u64,
    pub post: RawPost,
    pub bucket: Bucket,
    pub score: Option<f64>,
    pub matched_region: Option<String>,
    pub model_id: Option<String>,
    pub quarantine_reason: Option<String>,
    pub ingested_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum JournalEntry {
    Batch {
        at: DateTime<Utc>,
        cursor: Cursor,
        posts: Vec<StoredPost>,
    },
    Interaction {
        record: InteractionRecord,
    },
    KeywordChange {
        at: DateTime<Utc>,
        previous: String,
        query: String,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path} line {line}: {reason}")]
    Corrupt { path: PathBuf, line: usize, reason: String },
    #[error("invalid page cursor {0:?}")]
    InvalidCursor(String),
    #[error("post {0} not found")]
    NotFound(String),
    #[error("post {} already has an interaction from {} at {}", .0.post_id, .0.operator, .0.sent_at)]
    Conflict(Box<InteractionRecord>),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub inserted: usize,
    pub quarantined: usize,
    /// Posts already in the store, skipped.
    pub duplicates: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PageEntry {
    pub post: StoredPost,
    pub interaction: Option<InteractionRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Page {
    pub entries: Vec<PageEntry>,
    /// Pass back to get the following page; `None` on the last page.
    pub next_cursor: Option<String>,
    /// Rows in the bucket at read time.
    pub total: usize,
}

type Key = (DateTime<Utc>, u64);

#[derive(Default)]
struct State {
    posts: Vec<StoredPost>,
    by_id: HashMap<String, usize>,
    index: HashMap<Bucket, BTreeSet<Key>>,
    by_key: HashMap<Key, usize>,
    interactions: BTreeMap<String, InteractionRecord>,
    daily: BTreeMap<(NaiveDate, String), u64>,
    cursor: Cursor,
    last_batch_at: Option<DateTime<Utc>>,
    keyword_override: Option<String>,
    keyword_log: Vec<(DateTime<Utc>, String, String)>,
}

impl State {
    fn apply(&mut self, entry: JournalEntry) {
        match entry {
            JournalEntry::Batch { at, cursor, posts } => {
                for p in posts {
                    let key = (p.post.created_at, p.seq);
                    let idx = self.posts.len();
                    self.by_id.insert(p.post.id.clone(), idx);
                    self.index.entry(p.bucket).or_default().insert(key);
                    self.by_key.insert(key, idx);
                    self.posts.push(p);
                }
                self.cursor = cursor;
                self.last_batch_at = Some(self.last_batch_at.map_or(at, |prev| prev.max(at)));
            }
            JournalEntry::Interaction { record } => {
                *self
                    .daily
                    .entry((record.sent_at.date_naive(), record.region.clone()))
                    .or_default() += 1;
                self.interactions.insert(record.post_id.clone(), record);
            }
            JournalEntry::KeywordChange { at, previous, query } => {
                self.keyword_override = Some(query.clone());
                self.keyword_log.push((at, previous, query));
            }
        }
    }

    fn next_seq(&self) -> u64 {
        self.posts.last().map_or(0, |p| p.seq + 1)
    }
}

pub struct Store {
    state: RwLock<State>,
    /// Held for the whole of every mutation, which makes this the single
    /// writer. `None` for in-memory stores.
    journal: Mutex<Option<(PathBuf, BufWriter<File>)>>,
}

fn encode_cursor(k: Key) -> String {
    format!("{}.{}", k.0.timestamp_micros(), k.1)
}

fn decode_cursor(s: &str) -> Result<Key, StoreError> {
    let bad = || StoreError::InvalidCursor(s.to_string());
    let (ts, seq) = s.split_once('.').ok_or_else(bad)?;
    let ts = DateTime::from_timestamp_micros(ts.parse().map_err(|_| bad())?).ok_or_else(bad)?;
    Ok((ts, seq.parse().map_err(|_| bad())?))
}

impl Store {
    pub fn in_memory() -> Self {
        Self {
            state: RwLock::new(State::default()),
            journal: Mutex::new(None),
        }
    }

    /// Opens or creates a journal, replaying whatever it already holds. A
    /// torn last line is cut off so later appends start on a clean line.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let io = |source| StoreError::Io {
            path: path.clone(),
            source,
        };
        let mut state = State::default();
        let text = match std::fs::read(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(io(e)),
        };
        let mut lines = Vec::new();
        let mut offset = 0;
        for (i, line) in text.split_inclusive(|&b| b == b'\n').enumerate() {
            if !line.iter().all(u8::is_ascii_whitespace) {
                lines.push((i, offset, line));
            }
            offset += line.len();
        }
        let mut keep = text.len();
        for (n, &(i, start, line)) in lines.iter().enumerate() {
            match serde_json::from_slice::<JournalEntry>(line) {
                Ok(entry) => state.apply(entry),
                Err(e) if n + 1 == lines.len() => {
                    tracing::warn!(path = %path.display(), line = i + 1, error = %e, "dropping torn last journal line");
                    keep = start;
                }
                Err(e) => {
                    return Err(StoreError::Corrupt {
                        path,
                        line: i + 1,
                        reason: e.to_string(),
                    })
                }
            }
        }
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(io)?;
        if keep < text.len() {
            file.set_len(keep as u64).map_err(io)?;
        }
        let mut writer = BufWriter::new(file);
        if keep > 0 && text[keep - 1] != b'\n' {
            writer.write_all(b"\n").map_err(io)?;
        }
        Ok(Self {
            state: RwLock::new(state),
            journal: Mutex::new(Some((path, writer))),
        })
    }

    fn append(journal: &mut Option<(PathBuf, BufWriter<File>)>, entry: &JournalEntry) -> Result<(), StoreError> {
        let Some((path, w)) = journal.as_mut() else { return Ok(()) };
        let io = |source| StoreError::Io {
            path: path.clone(),
            source,
        };
        let mut line = serde_json::to_vec(entry).expect("journal entries serialize");
        line.push(b'\n');
        w.write_all(&line).map_err(io)?;
        w.flush().map_err(io)?;
        w.get_ref().sync_data().map_err(io)
    }

    /// Persists one poll cycle and makes it visible to readers in a single
    /// step. Posts whose id is already stored are skipped.
    pub fn commit_batch(&self, at: DateTime<Utc>, cursor: Cursor, batch: Bucketed) -> Result<BatchSummary, StoreError> {
        let mut journal = self.journal.lock().unwrap();
        let mut summary = BatchSummary::default();
        let mut posts = Vec::with_capacity(batch.len());
        {
            let state = self.state.read().unwrap();
            let mut seq = state.next_seq();
            let mut taken = std::collections::HashSet::new();
            let mut push = |p: StoredPost, summary: &mut BatchSummary| {
                if state.by_id.contains_key(&p.post.id) || !taken.insert(p.post.id.clone()) {
                    summary.duplicates += 1;
                    return;
                }
                if p.bucket == Bucket::Quarantine {
                    summary.quarantined += 1;
                } else {
                    summary.inserted += 1;
                }
                posts.push(StoredPost { seq, ..p });
                seq += 1;
            };
            for (post, a) in batch.assigned {
                let stored = StoredPost {
                    seq: 0,
                    post,
                    bucket: a.tab.into(),
                    score: Some(a.score),
                    matched_region: a.matched_region,
                    model_id: Some(batch.model_id.clone()),
                    quarantine_reason: None,
                    ingested_at: at,
                };
                push(stored, &mut summary);
            }
            for q in batch.quarantined {
                let stored = StoredPost {
                    seq: 0,
                    post: q.post,
                    bucket: Bucket::Quarantine,
                    score: None,
                    matched_region: None,
                    model_id: Some(batch.model_id.clone()),
                    quarantine_reason: Some(q.reason),
                    ingested_at: at,
                };
                push(stored, &mut summary);
            }
            if posts.is_empty() && state.cursor == cursor {
                return Ok(summary);
            }
        }
        let entry = JournalEntry::Batch { at, cursor, posts };
        Self::append(&mut journal, &entry)?;
        self.state.write().unwrap().apply(entry);
        Ok(summary)
    }

    /// Logs an interaction. At most one per post.
    pub fn record_interaction(&self, record: InteractionRecord) -> Result<InteractionRecord, StoreError> {
        let mut journal = self.journal.lock().unwrap();
        {
            let state = self.state.read().unwrap();
            if !state.by_id.contains_key(&record.post_id) {
                return Err(StoreError::NotFound(record.post_id));
            }
            if let Some(prior) = state.interactions.get(&record.post_id) {
                return Err(StoreError::Conflict(Box::new(prior.clone())));
            }
        }
        let entry = JournalEntry::Interaction { record: record.clone() };
        Self::append(&mut journal, &entry)?;
        self.state.write().unwrap().apply(entry);
        Ok(record)
    }

    pub fn record_keyword_change(&self, at: DateTime<Utc>, previous: &str, query: &str) -> Result<(), StoreError> {
        let mut journal = self.journal.lock().unwrap();
        let entry = JournalEntry::KeywordChange {
            at,
            previous: previous.to_string(),
            query: query.to_string(),
        };
        Self::append(&mut journal, &entry)?;
        self.state.write().unwrap().apply(entry);
        Ok(())
    }

    /// Newest first by `created_at`, then by insertion order. The cursor is
    /// the sort key of the last row served, so rows inserted meanwhile never
    /// shift a page boundary.
    pub fn get_tab(&self, bucket: Bucket, cursor: Option<&str>, limit: usize) -> Result<Page, StoreError> {
        let after = cursor.filter(|c| !c.is_empty()).map(decode_cursor).transpose()?;
        let limit = limit.clamp(1, MAX_PAGE_SIZE);
        let state = self.state.read().unwrap();
        let Some(keys) = state.index.get(&bucket) else {
            return Ok(Page {
                entries: Vec::new(),
                next_cursor: None,
                total: 0,
            });
        };
        let mut iter: Box<dyn Iterator<Item = &Key>> = match after {
            Some(k) => Box::new(keys.range(..k).rev()),
            None => Box::new(keys.iter().rev()),
        };
        let mut entries = Vec::with_capacity(limit);
        let mut last = None;
        for key in iter.by_ref().take(limit) {
            let post = state.posts[state.by_key[key]].clone();
            let interaction = state.interactions.get(&post.post.id).cloned();
            entries.push(PageEntry { post, interaction });
            last = Some(*key);
        }
        let more = iter.next().is_some();
        Ok(Page {
            entries,
            next_cursor: last.filter(|_| more).map(encode_cursor),
            total: keys.len(),
        })
    }

    pub fn post(&self, id: &str) -> Option<StoredPost> {
        let state = self.state.read().unwrap();
        state.by_id.get(id).map(|&i| state.posts[i].clone())
    }

    pub fn counts(&self) -> BTreeMap<Bucket, usize> {
        let state = self.state.read().unwrap();
        Bucket::ALL
            .into_iter()
            .map(|b| (b, state.index.get(&b).map_or(0, BTreeSet::len)))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.state.read().unwrap().posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cursor(&self) -> Cursor {
        self.state.read().unwrap().cursor.clone()
    }

    pub fn last_batch_at(&self) -> Option<DateTime<Utc>> {
        self.state.read().unwrap().last_batch_at
    }

    pub fn keyword_override(&self) -> Option<String> {
        self.state.read().unwrap().keyword_override.clone()
    }

    /// `(at, previous, new)` for every accepted keyword change.
    pub fn keyword_log(&self) -> Vec<(DateTime<Utc>, String, String)> {
        self.state.read().unwrap().keyword_log.clone()
    }

    pub fn interactions(&self) -> Vec<InteractionRecord> {
        let mut v: Vec<_> = self.state.read().unwrap().interactions.values().cloned().collect();
        v.sort_by(|a, b| a.sent_at.cmp(&b.sent_at).then_with(|| a.post_id.cmp(&b.post_id)));
        v
    }

    /// Interactions per (UTC day, region).
    pub fn daily_counts(&self) -> BTreeMap<(NaiveDate, String), u64> {
        self.state.read().unwrap().daily.clone()
    }
}
