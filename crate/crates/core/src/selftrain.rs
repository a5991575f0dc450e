//! Self-training: pseudo-label an unlabelled pool with the current model,
//! audit a stratified sample, then retrain from scratch on the union.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classify::{ClassifyError, Classifier, NaiveBayesConfig, NaiveBayesModel};
use crate::corpus::{read_jsonl, write_jsonl, CorpusError, Label, LabelCounts, LabelSource, LabeledDataset, LabeledExample};
use crate::textprep::NormalizedMessage;

#[derive(Debug, thiserror::Error)]
pub enum SelfTrainError {
    #[error("pool overlaps training or holdout data: {0:?}")]
    Overlap(Vec<String>),
    #[error("duplicate ids in pool: {0:?}")]
    DuplicateIds(Vec<String>),
    #[error("audit sample size k must be at least 1")]
    InvalidSampleSize,
    #[error("corrections reference ids not in the pseudo-label set: {0:?}")]
    UnknownCorrection(Vec<String>),
    #[error("scoring the pool failed: {0}")]
    Scoring(#[from] ClassifyError),
    #[error("trainer failed during {stage}: {source}")]
    Trainer {
        stage: String,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoEntry {
    pub message: NormalizedMessage,
    pub score: f64,
    pub pseudo_label: Label,
}

impl PseudoEntry {
    pub fn post_id(&self) -> &str {
        &self.message.post_id
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabelSet {
    pub entries: Vec<PseudoEntry>,
    pub source_model_id: String,
    pub pool_name: String,
}

impl PseudoLabelSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn counts(&self) -> LabelCounts {
        let positive = self.entries.iter().filter(|e| e.pseudo_label.is_positive()).count();
        LabelCounts {
            positive,
            negative: self.entries.len() - positive,
        }
    }

    /// Keeps only entries whose winning-class probability reaches `floor`.
    pub fn with_confidence_floor(mut self, floor: f64) -> Self {
        self.entries.retain(|e| e.score.max(1.0 - e.score) >= floor);
        self
    }

    /// Overrides pseudo-labels with reviewer decisions. Returns how many
    /// labels changed.
    pub fn apply_corrections(&mut self, corrections: &BTreeMap<String, Label>) -> Result<usize, SelfTrainError> {
        let index: HashMap<&str, usize> = self.entries.iter().enumerate().map(|(i, e)| (e.post_id(), i)).collect();
        let unknown: Vec<String> = corrections.keys().filter(|id| !index.contains_key(id.as_str())).cloned().collect();
        if !unknown.is_empty() {
            return Err(SelfTrainError::UnknownCorrection(unknown));
        }
        let updates: Vec<(usize, Label)> = corrections.iter().map(|(id, &l)| (index[id.as_str()], l)).collect();
        let mut changed = 0;
        for (i, label) in updates {
            if self.entries[i].pseudo_label != label {
                self.entries[i].pseudo_label = label;
                changed += 1;
            }
        }
        Ok(changed)
    }
}

/// Scores every pool message with `model` and labels it by the model's
/// threshold. `forbidden` holds the ids of training and holdout data.
pub fn generate_pseudo_labels(
    model: &dyn Classifier,
    pool: &[NormalizedMessage],
    pool_name: &str,
    forbidden: &HashSet<String>,
) -> Result<PseudoLabelSet, SelfTrainError> {
    let overlap: Vec<String> = pool
        .iter()
        .filter(|m| forbidden.contains(&m.post_id))
        .map(|m| m.post_id.clone())
        .collect();
    if !overlap.is_empty() {
        return Err(SelfTrainError::Overlap(overlap));
    }
    let mut seen = HashSet::with_capacity(pool.len());
    let dups: Vec<String> = pool
        .iter()
        .filter(|m| !seen.insert(m.post_id.as_str()))
        .map(|m| m.post_id.clone())
        .collect();
    if !dups.is_empty() {
        return Err(SelfTrainError::DuplicateIds(dups));
    }
    let preds = model.predict_batch(pool)?;
    let entries = pool
        .iter()
        .zip(preds)
        .map(|(m, p)| PseudoEntry {
            message: m.clone(),
            score: p.score,
            pseudo_label: p.label,
        })
        .collect();
    Ok(PseudoLabelSet {
        entries,
        source_model_id: model.model_id().to_string(),
        pool_name: pool_name.to_string(),
    })
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Quartile cut points of the positive-class scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
}

impl Quartiles {
    pub fn of(scores: &[f64]) -> Option<Self> {
        if scores.is_empty() {
            return None;
        }
        let mut sorted = scores.to_vec();
        sorted.sort_by(f64::total_cmp);
        Some(Self {
            q1: quantile(&sorted, 0.25),
            q2: quantile(&sorted, 0.5),
            q3: quantile(&sorted, 0.75),
        })
    }

    /// Quartile number 1..=4. Bins include their lower edge; the top bin is closed.
    pub fn bin(&self, score: f64) -> u8 {
        if score < self.q1 {
            1
        } else if score < self.q2 {
            2
        } else if score < self.q3 {
            3
        } else {
            4
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditCell {
    pub quartile: u8,
    pub label: Label,
    /// Number of pseudo-labelled entries in the cell before sampling.
    pub population: usize,
    pub entries: Vec<PseudoEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSample {
    pub k: usize,
    /// Cut points per pseudo-label, over that label's positive-class scores.
    pub quartiles: BTreeMap<Label, Quartiles>,
    /// Non-empty cells ordered by (quartile, label).
    pub cells: Vec<AuditCell>,
}

impl AuditSample {
    pub fn total(&self) -> usize {
        self.cells.iter().map(|c| c.entries.len()).sum()
    }

    pub fn cell(&self, quartile: u8, label: Label) -> Option<&AuditCell> {
        self.cells.iter().find(|c| c.quartile == quartile && c.label == label)
    }
}

/// Draws up to `k` entries uniformly (seeded) from each of the eight
/// (score quartile × pseudo-label) cells. Quartiles are taken within each
/// pseudo-label, so both classes spread over all four whenever they have
/// four or more distinct scores.
pub fn quantile_audit_sample(p: &PseudoLabelSet, k: usize, seed: u64) -> Result<AuditSample, SelfTrainError> {
    if k == 0 {
        return Err(SelfTrainError::InvalidSampleSize);
    }
    let mut by_label: BTreeMap<Label, Vec<&PseudoEntry>> = BTreeMap::new();
    for e in &p.entries {
        by_label.entry(e.pseudo_label).or_default().push(e);
    }
    let mut quartiles = BTreeMap::new();
    let mut buckets: BTreeMap<(u8, Label), Vec<&PseudoEntry>> = BTreeMap::new();
    for (label, members) in by_label {
        let scores: Vec<f64> = members.iter().map(|e| e.score).collect();
        let q = Quartiles::of(&scores).expect("label groups are non-empty");
        quartiles.insert(label, q);
        for e in members {
            buckets.entry((q.bin(e.score), label)).or_default().push(e);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cells = Vec::with_capacity(buckets.len());
    for ((quartile, label), mut members) in buckets {
        members.sort_by(|a, b| a.post_id().cmp(b.post_id()));
        let take = k.min(members.len());
        let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, members.len(), take).into_vec();
        picked.sort_unstable();
        cells.push(AuditCell {
            quartile,
            label,
            population: members.len(),
            entries: picked.into_iter().map(|i| members[i].clone()).collect(),
        });
    }
    Ok(AuditSample { k, quartiles, cells })
}

/// One line of the audit review file. Reviewers fill in `human_label`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub post_id: String,
    pub text: String,
    pub score: f64,
    pub pseudo_label: Label,
    pub quartile: u8,
    pub human_label: Option<Label>,
}

pub fn write_audit_review(path: impl AsRef<Path>, sample: &AuditSample) -> Result<(), SelfTrainError> {
    let rows = sample.cells.iter().flat_map(|c| {
        c.entries.iter().map(move |e| AuditRow {
            post_id: e.post_id().to_string(),
            text: e.message.text.clone(),
            score: e.score,
            pseudo_label: e.pseudo_label,
            quartile: c.quartile,
            human_label: None,
        })
    });
    Ok(write_jsonl(path, rows)?)
}

/// Reviewer decisions from a filled-in audit file; blank rows are skipped.
pub fn read_audit_corrections(path: impl AsRef<Path>) -> Result<BTreeMap<String, Label>, SelfTrainError> {
    let rows: Vec<AuditRow> = read_jsonl(path)?;
    Ok(rows
        .into_iter()
        .filter_map(|r| r.human_label.map(|l| (r.post_id, l)))
        .collect())
}

/// Something that fits a fresh model on a labelled dataset.
pub trait Trainer {
    type Model;
    type Error: std::error::Error + Send + Sync + 'static;

    fn train(&self, data: &LabeledDataset) -> Result<Self::Model, Self::Error>;
}

impl Trainer for NaiveBayesConfig {
    type Model = NaiveBayesModel;
    type Error = ClassifyError;

    fn train(&self, data: &LabeledDataset) -> Result<NaiveBayesModel, ClassifyError> {
        self.fit(data.examples())
    }
}

pub struct Retrained<M> {
    pub model: M,
    pub augmented: LabeledDataset,
}

/// Union of the base training set and the pseudo-labelled entries.
pub fn augment(base: &LabeledDataset, p: &PseudoLabelSet) -> Result<LabeledDataset, SelfTrainError> {
    let base_ids = base.ids();
    let overlap: Vec<String> = p
        .entries
        .iter()
        .filter(|e| base_ids.contains(e.post_id()))
        .map(|e| e.post_id().to_string())
        .collect();
    if !overlap.is_empty() {
        return Err(SelfTrainError::Overlap(overlap));
    }
    let mut examples: Vec<LabeledExample> = base.examples().to_vec();
    examples.reserve(p.len());
    for e in &p.entries {
        examples.push(LabeledExample::new(e.message.clone(), e.pseudo_label, LabelSource::Pseudo)?);
    }
    Ok(LabeledDataset::new(format!("{}+{}", base.name, p.pool_name), examples, base.cutoff_date)?)
}

/// Trains a new model from scratch on `base ∪ p`.
pub fn augment_and_retrain<T: Trainer>(
    base: &LabeledDataset,
    p: &PseudoLabelSet,
    trainer: &T,
) -> Result<Retrained<T::Model>, SelfTrainError> {
    let augmented = augment(base, p)?;
    let model = trainer.train(&augmented).map_err(|e| SelfTrainError::Trainer {
        stage: "retrain on augmented set".to_string(),
        source: Box::new(e),
    })?;
    Ok(Retrained { model, augmented })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub iteration: usize,
    pub pseudo_counts: LabelCounts,
    pub augmented_size: usize,
}

pub struct SelfTrainOutcome<M> {
    pub model: M,
    pub last_pseudo_labels: Option<PseudoLabelSet>,
    pub iterations: Vec<IterationReport>,
}

/// Runs `iterations` rounds. Every round pseudo-labels the whole pool with
/// the latest model and retrains on the original base set plus the new
/// labels only, so nothing carries over between rounds except the model.
pub fn self_train<T>(
    base: &LabeledDataset,
    pool: &[NormalizedMessage],
    pool_name: &str,
    trainer: &T,
    iterations: usize,
    forbidden: &HashSet<String>,
) -> Result<SelfTrainOutcome<T::Model>, SelfTrainError>
where
    T: Trainer,
    T::Model: Classifier,
{
    let mut model = trainer.train(base).map_err(|e| SelfTrainError::Trainer {
        stage: "initial training".to_string(),
        source: Box::new(e),
    })?;
    let mut reports = Vec::with_capacity(iterations);
    let mut last = None;
    for iteration in 1..=iterations {
        let p = generate_pseudo_labels(&model, pool, pool_name, forbidden)?;
        let retrained = augment_and_retrain(base, &p, trainer)?;
        reports.push(IterationReport {
            iteration,
            pseudo_counts: p.counts(),
            augmented_size: retrained.augmented.len(),
        });
        model = retrained.model;
        last = Some(p);
    }
    Ok(SelfTrainOutcome {
        model,
        last_pseudo_labels: last,
        iterations: reports,
    })
}
