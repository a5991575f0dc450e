//! Labelled training set and holdout construction from line-delimited corpora.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Datelike, NaiveDate, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::textprep::{normalize, NormalizedMessage, RawPost};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::Negative => Label::Positive,
            Label::Positive => Label::Negative,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Negative => "negative",
            Label::Positive => "positive",
        })
    }
}

/// Where a label came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    /// The post received a reply from the monitoring organization.
    Interaction,
    HumanCoded,
    Pseudo,
    SampledNegative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub message: NormalizedMessage,
    pub label: Label,
    pub label_source: LabelSource,
}

impl LabeledExample {
    pub fn new(message: NormalizedMessage, label: Label, label_source: LabelSource) -> Result<Self, CorpusError> {
        if label_source == LabelSource::Interaction && label != Label::Positive {
            return Err(CorpusError::InvalidLabel(message.post_id));
        }
        Ok(Self {
            message,
            label,
            label_source,
        })
    }

    pub fn post_id(&self) -> &str {
        &self.message.post_id
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub positive: usize,
    pub negative: usize,
}

impl LabelCounts {
    pub fn total(&self) -> usize {
        self.positive + self.negative
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub name: String,
    examples: Vec<LabeledExample>,
    pub cutoff_date: Option<NaiveDate>,
}

impl LabeledDataset {
    pub fn new(
        name: impl Into<String>,
        examples: Vec<LabeledExample>,
        cutoff_date: Option<NaiveDate>,
    ) -> Result<Self, CorpusError> {
        let mut seen = HashSet::with_capacity(examples.len());
        let dups: Vec<String> = examples
            .iter()
            .filter(|e| !seen.insert(e.post_id()))
            .map(|e| e.post_id().to_string())
            .collect();
        if !dups.is_empty() {
            return Err(CorpusError::DuplicateIds(dups));
        }
        Ok(Self {
            name: name.into(),
            examples,
            cutoff_date,
        })
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    pub fn into_examples(self) -> Vec<LabeledExample> {
        self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn counts(&self) -> LabelCounts {
        let positive = self.examples.iter().filter(|e| e.label.is_positive()).count();
        LabelCounts {
            positive,
            negative: self.examples.len() - positive,
        }
    }

    pub fn ids(&self) -> HashSet<&str> {
        self.examples.iter().map(LabeledExample::post_id).collect()
    }

    pub fn get(&self, post_id: &str) -> Option<&LabeledExample> {
        self.examples.iter().find(|e| e.post_id() == post_id)
    }

    pub fn manifest(&self, seed: Option<u64>) -> DatasetManifest {
        let counts = self.counts();
        let mut by_source = BTreeMap::new();
        for e in &self.examples {
            *by_source
                .entry(serde_json::to_value(e.label_source).unwrap().as_str().unwrap().to_string())
                .or_insert(0usize) += 1;
        }
        DatasetManifest {
            name: self.name.clone(),
            cutoff: self.cutoff_date,
            seed,
            total: counts.total(),
            positive: counts.positive,
            negative: counts.negative,
            by_source,
        }
    }
}

/// Sidecar metadata written next to every dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub cutoff: Option<NaiveDate>,
    pub seed: Option<u64>,
    pub total: usize,
    pub positive: usize,
    pub negative: usize,
    pub by_source: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    /// Training data is strictly before this date (UTC midnight); holdouts are on or after.
    pub cutoff: NaiveDate,
    pub negative_ratio: usize,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(cutoff: NaiveDate, negative_ratio: usize, seed: u64) -> Result<Self, CorpusError> {
        if negative_ratio == 0 {
            return Err(CorpusError::InvalidRatio);
        }
        Ok(Self {
            cutoff,
            negative_ratio,
            seed,
        })
    }
}

/// First instant of `date` in UTC.
pub fn midnight_utc(date: NaiveDate) -> DateTime<Utc> {
    date.and_hms_opt(0, 0, 0).unwrap().and_utc()
}

pub fn is_before(post: &RawPost, cutoff: NaiveDate) -> bool {
    post.created_at < midnight_utc(cutoff)
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Format { path: PathBuf, line: usize, reason: String },
    #[error("negative pool too small: required {required}, available {available}")]
    PoolTooSmall { required: usize, available: usize },
    #[error("negative ratio must be at least 1")]
    InvalidRatio,
    #[error("duplicate post ids in dataset: {0:?}")]
    DuplicateIds(Vec<String>),
    #[error("interaction-derived example {0} must be labelled positive")]
    InvalidLabel(String),
    #[error("recode ids not present in the report window: {0:?}")]
    UnknownRecodeIds(Vec<String>),
}

/// Result of [`load_corpus`]: valid posts in file order plus skip accounting.
#[derive(Debug, Clone, Default)]
pub struct LoadedCorpus {
    pub posts: Vec<RawPost>,
    pub skipped: usize,
    /// 1-based line numbers of skipped lines.
    pub skipped_lines: Vec<usize>,
}

/// Reads a line-delimited JSON corpus. Malformed or invalid lines are
/// logged and skipped; blank lines are ignored.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<LoadedCorpus, CorpusError> {
    let path = path.as_ref();
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut out = LoadedCorpus::default();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<RawPost>(&line)
            .map_err(|e| e.to_string())
            .and_then(|p| p.validate().map(|_| p).map_err(|e| e.to_string()));
        match parsed {
            Ok(post) => out.posts.push(post),
            Err(reason) => {
                tracing::warn!(path = %path.display(), line = idx + 1, %reason, "skipping malformed corpus line");
                out.skipped += 1;
                out.skipped_lines.push(idx + 1);
            }
        }
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, rows: impl IntoIterator<Item = T>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    for row in rows {
        serde_json::to_writer(&mut w, &row).map_err(|e| io_err(e.into()))?;
        w.write_all(b"\n").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<Vec<T>, CorpusError> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?);
    let mut rows = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(serde_json::from_str(&line).map_err(|e| CorpusError::Format {
            path: path.to_path_buf(),
            line: idx + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(rows)
}

pub fn write_corpus(path: impl AsRef<Path>, posts: &[RawPost]) -> Result<(), CorpusError> {
    write_jsonl(path, posts)
}

pub fn manifest_path(dataset_path: &Path) -> PathBuf {
    let mut s = dataset_path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Writes the examples as JSONL and the manifest as a sidecar file.
pub fn write_dataset(path: impl AsRef<Path>, ds: &LabeledDataset, seed: Option<u64>) -> Result<DatasetManifest, CorpusError> {
    let path = path.as_ref();
    write_jsonl(path, ds.examples())?;
    let manifest = ds.manifest(seed);
    let mpath = manifest_path(path);
    let body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&mpath, body + "\n").map_err(|source| CorpusError::Io { path: mpath, source })?;
    Ok(manifest)
}

/// Reads a dataset written by [`write_dataset`]. The name and cutoff come
/// from the sidecar manifest when present.
pub fn read_dataset(path: impl AsRef<Path>) -> Result<LabeledDataset, CorpusError> {
    let path = path.as_ref();
    let examples: Vec<LabeledExample> = read_jsonl(path)?;
    let mpath = manifest_path(path);
    let (name, cutoff) = match std::fs::read_to_string(&mpath) {
        Ok(body) => {
            let m: DatasetManifest = serde_json::from_str(&body).map_err(|e| CorpusError::Format {
                path: mpath.clone(),
                line: 1,
                reason: e.to_string(),
            })?;
            (m.name, m.cutoff)
        }
        Err(_) => (
            path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
            None,
        ),
    };
    LabeledDataset::new(name, examples, cutoff)
}

/// Builds the initial training set: every pre-cutoff positive plus a seeded
/// uniform sample of `negative_ratio × |positives|` negatives drawn from
/// pre-cutoff unlabelled posts without location metadata that do not
/// overlap the positives. The result is shuffled with the same seed.
pub fn assemble_training_set(
    positives: &[RawPost],
    unlabeled: &[RawPost],
    spec: &SplitSpec,
) -> Result<LabeledDataset, CorpusError> {
    if spec.negative_ratio == 0 {
        return Err(CorpusError::InvalidRatio);
    }
    let pos: Vec<&RawPost> = positives.iter().filter(|p| is_before(p, spec.cutoff)).collect();
    let positive_ids: HashSet<&str> = positives.iter().map(|p| p.id.as_str()).collect();
    let mut pool: Vec<&RawPost> = unlabeled
        .iter()
        .filter(|p| is_before(p, spec.cutoff) && !p.has_location_metadata() && !positive_ids.contains(p.id.as_str()))
        .collect();
    // Input order must not leak into the sample.
    pool.sort_by(|a, b| a.id.cmp(&b.id));
    pool.dedup_by(|a, b| a.id == b.id);

    let required = spec.negative_ratio * pos.len();
    if pool.len() < required {
        return Err(CorpusError::PoolTooSmall {
            required,
            available: pool.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let picked = rand::seq::index::sample(&mut rng, pool.len(), required);

    let mut examples = Vec::with_capacity(pos.len() + required);
    for p in pos {
        examples.push(LabeledExample::new(normalize(p), Label::Positive, LabelSource::Interaction)?);
    }
    for i in picked {
        examples.push(LabeledExample::new(normalize(pool[i]), Label::Negative, LabelSource::SampledNegative)?);
    }
    examples.shuffle(&mut rng);
    LabeledDataset::new("train", examples, Some(spec.cutoff))
}

/// Time-split holdout: interaction positives on/after the cutoff against
/// every post-cutoff unlabelled geo post that is not itself a positive.
pub fn build_holdout_interactions(
    positives: &[RawPost],
    unlabeled_geo: &[RawPost],
    cutoff: NaiveDate,
) -> Result<LabeledDataset, CorpusError> {
    let positive_ids: HashSet<&str> = positives.iter().map(|p| p.id.as_str()).collect();
    let mut examples = Vec::new();
    for p in positives.iter().filter(|p| !is_before(p, cutoff)) {
        examples.push(LabeledExample::new(normalize(p), Label::Positive, LabelSource::Interaction)?);
    }
    let mut seen = HashSet::new();
    for p in unlabeled_geo {
        if is_before(p, cutoff) || positive_ids.contains(p.id.as_str()) || !seen.insert(p.id.as_str()) {
            continue;
        }
        examples.push(LabeledExample::new(normalize(p), Label::Negative, LabelSource::SampledNegative)?);
    }
    LabeledDataset::new("holdout_interactions", examples, Some(cutoff))
}

/// A calendar month, used as the human-review window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl YearMonth {
    pub fn contains(&self, ts: DateTime<Utc>) -> bool {
        ts.year() == self.year && ts.month() == self.month
    }
}

impl std::str::FromStr for YearMonth {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (y, m) = s.split_once('-').ok_or_else(|| format!("expected YYYY-MM, got {s:?}"))?;
        let year = y.parse().map_err(|_| format!("bad year in {s:?}"))?;
        let month: u32 = m.parse().map_err(|_| format!("bad month in {s:?}"))?;
        if !(1..=12).contains(&month) {
            return Err(format!("month out of range in {s:?}"));
        }
        Ok(Self { year, month })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecodeReport {
    pub flipped_to_positive: usize,
    pub flipped_to_negative: usize,
    pub unchanged: usize,
}

impl RecodeReport {
    pub fn flipped(&self) -> usize {
        self.flipped_to_positive + self.flipped_to_negative
    }
}

/// Restricts `holdout` to the review month and applies human recoding.
/// Entries whose label actually changes are marked `human_coded`.
pub fn build_holdout_reports(
    holdout: &LabeledDataset,
    recode: &BTreeMap<String, Label>,
    window: YearMonth,
) -> Result<(LabeledDataset, RecodeReport), CorpusError> {
    let subset: Vec<LabeledExample> = holdout
        .examples()
        .iter()
        .filter(|e| window.contains(e.message.created_at))
        .cloned()
        .collect();
    let index: HashMap<&str, usize> = subset.iter().enumerate().map(|(i, e)| (e.post_id(), i)).collect();
    let unknown: Vec<String> = recode.keys().filter(|id| !index.contains_key(id.as_str())).cloned().collect();
    if !unknown.is_empty() {
        return Err(CorpusError::UnknownRecodeIds(unknown));
    }
    let mut report = RecodeReport::default();
    let mut updates = Vec::new();
    for (id, &label) in recode {
        let i = index[id.as_str()];
        match (subset[i].label, label) {
            (old, new) if old == new => report.unchanged += 1,
            (_, Label::Positive) => {
                report.flipped_to_positive += 1;
                updates.push((i, label));
            }
            (_, Label::Negative) => {
                report.flipped_to_negative += 1;
                updates.push((i, label));
            }
        }
    }
    let mut subset = subset;
    for (i, label) in updates {
        subset[i].label = label;
        subset[i].label_source = LabelSource::HumanCoded;
    }
    let ds = LabeledDataset::new("holdout_reports", subset, holdout.cutoff_date)?;
    Ok((ds, report))
}

/// Parses a recode file: one `post_id<TAB or comma>label` per line.
pub fn parse_recode(text: &str) -> Result<BTreeMap<String, Label>, String> {
    let mut out = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (id, label) = line
            .split_once(['\t', ','])
            .ok_or_else(|| format!("line {}: expected `id<TAB>label`", idx + 1))?;
        if out.is_empty() && id.trim() == "post_id" {
            continue;
        }
        let label = match label.trim().to_lowercase().as_str() {
            "positive" | "1" => Label::Positive,
            "negative" | "0" => Label::Negative,
            other => return Err(format!("line {}: unknown label {other:?}", idx + 1)),
        };
        out.insert(id.trim().to_string(), label);
    }
    Ok(out)
}
