use serde::{Deserialize, Serialize};

use super::tfidf::{fit_texts, SparseVector, TfidfVocabulary};
use super::{ClassifyError, Classifier, DEFAULT_THRESHOLD};
use crate::corpus::{Label, LabeledDataset, LabeledExample};
use crate::textprep::NormalizedMessage;
use crate::Execution;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesConfig {
    /// Additive (Lidstone) smoothing.
    pub alpha: f64,
    pub threshold: f64,
    pub model_id: String,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for NaiveBayesConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            threshold: DEFAULT_THRESHOLD,
            model_id: "naive-bayes-tfidf".to_string(),
            execution: Execution::available(),
        }
    }
}

/// Multinomial Naive Bayes over L2-normalized tf·idf features.
///
/// Index 0 of every per-class array is the negative class, index 1 the
/// positive class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesModel {
    pub model_id: String,
    pub alpha: f64,
    pub threshold: f64,
    pub class_log_prior: [f64; 2],
    /// `feature_log_prob[c][t] = ln((F_ct + α) / (Σ_t F_ct + α·V))` where
    /// `F_ct` is the summed tf·idf weight of term `t` in class `c`.
    pub feature_log_prob: [Vec<f64>; 2],
    pub vocabulary: TfidfVocabulary,
    pub class_counts: [usize; 2],
}

fn class_index(label: Label) -> usize {
    match label {
        Label::Negative => 0,
        Label::Positive => 1,
    }
}

impl NaiveBayesConfig {
    pub fn validate(&self) -> Result<(), ClassifyError> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(ClassifyError::InvalidConfig(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(ClassifyError::InvalidConfig(format!(
                "threshold must lie in (0, 1), got {}",
                self.threshold
            )));
        }
        Ok(())
    }

    pub fn fit(&self, examples: &[LabeledExample]) -> Result<NaiveBayesModel, ClassifyError> {
        self.validate()?;
        if examples.is_empty() {
            return Err(ClassifyError::EmptyCorpus);
        }
        let mut class_counts = [0usize; 2];
        for e in examples {
            class_counts[class_index(e.label)] += 1;
        }
        if class_counts[0] == 0 {
            return Err(ClassifyError::SingleClass(Label::Positive));
        }
        if class_counts[1] == 0 {
            return Err(ClassifyError::SingleClass(Label::Negative));
        }

        let vocabulary = fit_texts(examples.iter().map(|e| e.message.text.as_str()))?;
        let vectors: Vec<SparseVector> = self.execution.map(examples, |e| vocabulary.transform(&e.message.text));

        let v = vocabulary.len();
        let mut feature_sum = [vec![0.0; v], vec![0.0; v]];
        for (e, x) in examples.iter().zip(&vectors) {
            let row = &mut feature_sum[class_index(e.label)];
            for &(i, w) in x {
                row[i] += w;
            }
        }
        let feature_log_prob = feature_sum.map(|row| {
            let denom = (row.iter().sum::<f64>() + self.alpha * v as f64).ln();
            row.into_iter().map(|f| (f + self.alpha).ln() - denom).collect::<Vec<f64>>()
        });
        let n = examples.len() as f64;
        Ok(NaiveBayesModel {
            model_id: self.model_id.clone(),
            alpha: self.alpha,
            threshold: self.threshold,
            class_log_prior: class_counts.map(|c| (c as f64 / n).ln()),
            feature_log_prob,
            vocabulary,
            class_counts,
        })
    }
}

/// Trains with default threshold and the given smoothing.
pub fn train_naive_bayes(data: &LabeledDataset, alpha: f64) -> Result<NaiveBayesModel, ClassifyError> {
    NaiveBayesConfig {
        alpha,
        ..NaiveBayesConfig::default()
    }
    .fit(data.examples())
}

impl NaiveBayesModel {
    /// Per-class joint log-likelihood of the text.
    pub fn joint_log_likelihood(&self, text: &str) -> [f64; 2] {
        let x = self.vocabulary.transform(text);
        let mut jll = self.class_log_prior;
        for (c, flp) in self.feature_log_prob.iter().enumerate() {
            jll[c] += x.iter().map(|&(i, w)| w * flp[i]).sum::<f64>();
        }
        jll
    }

    /// Normalized posterior probability of the positive class.
    pub fn positive_posterior(&self, text: &str) -> f64 {
        let [neg, pos] = self.joint_log_likelihood(text);
        // logistic of the log-odds, written to avoid overflow on either side
        let d = pos - neg;
        if d >= 0.0 {
            1.0 / (1.0 + (-d).exp())
        } else {
            let e = d.exp();
            e / (1.0 + e)
        }
    }

    pub fn prior_positive(&self) -> f64 {
        self.class_log_prior[1].exp()
    }

    pub fn predict(&self, msg: &NormalizedMessage) -> super::ScoredPrediction {
        let score = self.positive_posterior(&msg.text);
        super::ScoredPrediction {
            post_id: msg.post_id.clone(),
            score,
            label: super::decide(score, self.threshold),
            model_id: self.model_id.clone(),
        }
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }
}

impl Classifier for NaiveBayesModel {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn threshold(&self) -> f64 {
        self.threshold
    }

    fn score_batch(&self, batch: &[NormalizedMessage]) -> Result<Vec<f64>, ClassifyError> {
        Ok(Execution::available().map(batch, |m| self.positive_posterior(&m.text)))
    }
}
