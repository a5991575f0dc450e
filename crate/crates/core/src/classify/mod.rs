//! Binary report classifiers behind one trait: a random baseline, TF-IDF
//! multinomial Naive Bayes, and a client for an out-of-process transformer
//! runtime.

mod naive_bayes;
mod random;
mod runtime;
mod tfidf;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use naive_bayes::{train_naive_bayes, NaiveBayesConfig, NaiveBayesModel};
pub use random::{predict_random, RandomBaseline};
pub use runtime::{external_score, ExternalRuntimeConfig, RuntimeClient, RuntimeTransport, TrainingHyperparameters};
pub use tfidf::{fit_tfidf, tokenize, vectorize, SparseVector, TfidfVocabulary};

use crate::corpus::Label;
use crate::textprep::NormalizedMessage;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPrediction {
    pub post_id: String,
    /// Probability of the positive class.
    pub score: f64,
    pub label: Label,
    pub model_id: String,
}

/// Scores at or above the threshold are positive; a tie goes to the
/// positive class because a missed report costs more than a false alarm.
pub fn decide(score: f64, threshold: f64) -> Label {
    if score >= threshold {
        Label::Positive
    } else {
        Label::Negative
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ClassifyError {
    #[error("cannot fit on an empty corpus")]
    EmptyCorpus,
    #[error("training data contains only the {0} class")]
    SingleClass(Label),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("runtime timed out after {0:?}")]
    Timeout(std::time::Duration),
    #[error("runtime transport error: {0}")]
    Transport(String),
    #[error("runtime protocol error: {0}")]
    Protocol(String),
    #[error("{path}: {reason}")]
    ModelFile { path: PathBuf, reason: String },
}

impl ClassifyError {
    /// Whether repeating the same call may succeed.
    pub fn is_retryable(&self) -> bool {
        matches!(self, ClassifyError::Timeout(_) | ClassifyError::Transport(_))
    }
}

/// Anything that can turn a batch of messages into positive-class scores.
pub trait Classifier: Send + Sync {
    fn model_id(&self) -> &str;

    fn threshold(&self) -> f64;

    /// One score in `[0, 1]` per message, in input order.
    fn score_batch(&self, batch: &[NormalizedMessage]) -> Result<Vec<f64>, ClassifyError>;

    fn predict_batch(&self, batch: &[NormalizedMessage]) -> Result<Vec<ScoredPrediction>, ClassifyError> {
        let scores = self.score_batch(batch)?;
        if scores.len() != batch.len() {
            return Err(ClassifyError::Protocol(format!(
                "expected {} scores, got {}",
                batch.len(),
                scores.len()
            )));
        }
        let threshold = self.threshold();
        Ok(batch
            .iter()
            .zip(scores)
            .map(|(m, score)| ScoredPrediction {
                post_id: m.post_id.clone(),
                score,
                label: decide(score, threshold),
                model_id: self.model_id().to_string(),
            })
            .collect())
    }
}

impl<C: Classifier + ?Sized> Classifier for Box<C> {
    fn model_id(&self) -> &str {
        (**self).model_id()
    }
    fn threshold(&self) -> f64 {
        (**self).threshold()
    }
    fn score_batch(&self, batch: &[NormalizedMessage]) -> Result<Vec<f64>, ClassifyError> {
        (**self).score_batch(batch)
    }
}

impl<C: Classifier + ?Sized> Classifier for std::sync::Arc<C> {
    fn model_id(&self) -> &str {
        (**self).model_id()
    }
    fn threshold(&self) -> f64 {
        (**self).threshold()
    }
    fn score_batch(&self, batch: &[NormalizedMessage]) -> Result<Vec<f64>, ClassifyError> {
        (**self).score_batch(batch)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Random,
    NaiveBayes,
    External,
}

/// Metadata written next to every model artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub model_id: String,
    pub kind: ModelKind,
    pub threshold: f64,
    pub hyperparameters: BTreeMap<String, serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training_counts: Option<crate::corpus::LabelCounts>,
}

/// A serialized model file: manifest plus the kind-specific payload.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelFile {
    Random { model_id: String, seed: u64 },
    NaiveBayes(NaiveBayesModel),
    External(ExternalRuntimeConfig),
}

impl ModelFile {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ClassifyError> {
        let path = path.as_ref();
        let body = serde_json::to_string(self).expect("model serializes");
        std::fs::write(path, body).map_err(|e| ClassifyError::ModelFile {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ClassifyError> {
        let path = path.as_ref();
        let err = |reason: String| ClassifyError::ModelFile {
            path: path.to_path_buf(),
            reason,
        };
        let body = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        serde_json::from_str(&body).map_err(|e| err(e.to_string()))
    }

    /// Builds a ready-to-use classifier. External runtimes are connected here.
    pub fn into_classifier(self) -> Result<Box<dyn Classifier>, ClassifyError> {
        Ok(match self {
            ModelFile::Random { model_id, seed } => Box::new(RandomBaseline::new(seed).with_model_id(model_id)),
            ModelFile::NaiveBayes(m) => Box::new(m),
            ModelFile::External(cfg) => Box::new(RuntimeClient::connect(cfg)?),
        })
    }
}
