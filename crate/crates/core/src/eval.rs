//! Confusion matrices, summary metrics, ROC curves and error profiles.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::classify::ScoredPrediction;
use crate::corpus::{Label, LabeledDataset};
use crate::textprep::NormalizedMessage;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EvalError {
    #[error("prediction ids do not match the labelled set: {missing} without a prediction, {unexpected} unexpected, {duplicated} duplicated (e.g. {example:?})")]
    IdMismatch {
        missing: usize,
        unexpected: usize,
        duplicated: usize,
        example: Option<String>,
    },
    #[error("metrics need at least one evaluated message")]
    Empty,
    #[error("ROC needs both classes; only {0} present")]
    SingleClass(Label),
    #[error("score {0} is not a finite number")]
    NonFiniteScore(f64),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn errors(&self) -> usize {
        self.fp + self.fn_
    }

    pub fn record(&mut self, predicted: Label, truth: Label) {
        match (predicted, truth) {
            (Label::Positive, Label::Positive) => self.tp += 1,
            (Label::Positive, Label::Negative) => self.fp += 1,
            (Label::Negative, Label::Negative) => self.tn += 1,
            (Label::Negative, Label::Positive) => self.fn_ += 1,
        }
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (Label, Label)>) -> Self {
        let mut cm = Self::default();
        for (p, t) in pairs {
            cm.record(p, t);
        }
        cm
    }
}

/// Matches predictions to gold labels by post id. Every labelled example
/// needs exactly one prediction and vice versa.
pub fn confusion(preds: &[ScoredPrediction], truth: &LabeledDataset) -> Result<ConfusionMatrix, EvalError> {
    let mut by_id: HashMap<&str, Label> = HashMap::with_capacity(preds.len());
    let mut duplicated = Vec::new();
    for p in preds {
        if by_id.insert(p.post_id.as_str(), p.label).is_some() {
            duplicated.push(p.post_id.clone());
        }
    }
    let mut cm = ConfusionMatrix::default();
    let mut missing = Vec::new();
    for e in truth.examples() {
        match by_id.remove(e.post_id()) {
            Some(pred) => cm.record(pred, e.label),
            None => missing.push(e.post_id().to_string()),
        }
    }
    if !missing.is_empty() || !by_id.is_empty() || !duplicated.is_empty() {
        let mut unexpected: Vec<&str> = by_id.keys().copied().collect();
        unexpected.sort_unstable();
        let example = missing
            .first()
            .cloned()
            .or_else(|| unexpected.first().map(|s| s.to_string()))
            .or_else(|| duplicated.first().cloned());
        return Err(EvalError::IdMismatch {
            missing: missing.len(),
            unexpected: unexpected.len(),
            duplicated: duplicated.len(),
            example,
        });
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    /// Precision of the positive class.
    pub precision: f64,
    pub recall_pos: f64,
    pub recall_neg: f64,
    pub macro_f1: f64,
    /// F1 of the (negative, positive) classes.
    pub f1: (f64, f64),
    pub confusion: ConfusionMatrix,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Undefined precision, recall or F1 are reported as 0.
pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricsReport, EvalError> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::Empty);
    }
    let precision = ratio(cm.tp, cm.tp + cm.fp);
    let recall_pos = ratio(cm.tp, cm.tp + cm.fn_);
    let precision_neg = ratio(cm.tn, cm.tn + cm.fn_);
    let recall_neg = ratio(cm.tn, cm.tn + cm.fp);
    let f1_pos = f1(precision, recall_pos);
    let f1_neg = f1(precision_neg, recall_neg);
    Ok(MetricsReport {
        accuracy: ratio(cm.tp + cm.tn, total),
        precision,
        recall_pos,
        recall_neg,
        macro_f1: (f1_neg + f1_pos) / 2.0,
        f1: (f1_neg, f1_pos),
        confusion: *cm,
    })
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cm = &self.confusion;
        writeln!(f, "evaluated  {}", cm.total())?;
        writeln!(f, "accuracy   {:.4}", self.accuracy)?;
        writeln!(f, "precision  {:.4}", self.precision)?;
        writeln!(f, "recall     {:.4}", self.recall_pos)?;
        writeln!(f, "macro F1   {:.4}  (neg {:.4}, pos {:.4})", self.macro_f1, self.f1.0, self.f1.1)?;
        writeln!(f)?;
        writeln!(f, "              pred neg  pred pos")?;
        writeln!(f, "  true neg  {:>10}{:>10}", cm.tn, cm.fp)?;
        write!(f, "  true pos  {:>10}{:>10}", cm.fn_, cm.tp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Scores at or above this value are called positive. The first point
    /// uses +∞.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
    /// Exact AUC numerator: twice the number of (positive, negative) pairs
    /// ranked correctly, with ties counted once.
    pub concordant_halves: u64,
    /// Number of (positive, negative) pairs.
    pub pairs: u64,
}

/// Sweeps thresholds over the distinct scores from high to low. Tied scores
/// move in a single diagonal step, so the trapezoid area counts a tied
/// positive/negative pair as one half.
pub fn roc_auc(scored: &[(f64, Label)]) -> Result<RocCurve, EvalError> {
    if let Some(&(s, _)) = scored.iter().find(|(s, _)| !s.is_finite()) {
        return Err(EvalError::NonFiniteScore(s));
    }
    let pos = scored.iter().filter(|(_, l)| l.is_positive()).count();
    let neg = scored.len() - pos;
    if pos == 0 {
        return Err(EvalError::SingleClass(Label::Negative));
    }
    if neg == 0 {
        return Err(EvalError::SingleClass(Label::Positive));
    }
    let mut sorted = scored.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut halves = 0u64;
    let mut i = 0;
    while i < sorted.len() {
        let threshold = sorted[i].0;
        let (prev_tp, prev_fp) = (tp, fp);
        while i < sorted.len() && sorted[i].0 == threshold {
            if sorted[i].1.is_positive() {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        // doubled trapezoid in count units, so the sum stays an integer
        halves += (fp - prev_fp) * (tp + prev_tp);
        points.push(RocPoint {
            threshold,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
    }
    let pairs = pos as u64 * neg as u64;
    Ok(RocCurve {
        points,
        auc: halves as f64 / (2 * pairs) as f64,
        concordant_halves: halves,
        pairs,
    })
}

/// ROC over predictions aligned to a labelled set.
pub fn roc_for(preds: &[ScoredPrediction], truth: &LabeledDataset) -> Result<RocCurve, EvalError> {
    confusion(preds, truth)?;
    let scored: Vec<(f64, Label)> = preds
        .iter()
        .map(|p| (p.score, truth.get(&p.post_id).expect("aligned above").label))
        .collect();
    roc_auc(&scored)
}

impl RocCurve {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "threshold,fpr,tpr")?;
        for p in &self.points {
            let t = if p.threshold.is_infinite() {
                "inf".to_string()
            } else {
                p.threshold.to_string()
            };
            writeln!(out, "{t},{},{}", p.fpr, p.tpr)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorProfile {
    pub count: usize,
    pub train_mean_chars: f64,
    pub long_text: usize,
    pub long_text_share: f64,
    pub with_emoji: usize,
    pub emoji_share: f64,
}

/// How many misclassified messages are longer than the training mean and
/// how many contain an emoji.
pub fn error_profile(misclassified: &[NormalizedMessage], train_mean_chars: f64) -> ErrorProfile {
    let long_text = misclassified.iter().filter(|m| m.char_count as f64 > train_mean_chars).count();
    let with_emoji = misclassified.iter().filter(|m| m.emoji_count > 0).count();
    let n = misclassified.len();
    ErrorProfile {
        count: n,
        train_mean_chars,
        long_text,
        long_text_share: ratio(long_text, n),
        with_emoji,
        emoji_share: ratio(with_emoji, n),
    }
}

pub fn mean_chars(messages: &[NormalizedMessage]) -> f64 {
    if messages.is_empty() {
        return 0.0;
    }
    messages.iter().map(|m| m.char_count as f64).sum::<f64>() / messages.len() as f64
}

/// Messages of `truth` whose prediction disagrees with the gold label.
pub fn misclassified<'a>(preds: &[ScoredPrediction], truth: &'a LabeledDataset) -> Vec<&'a NormalizedMessage> {
    preds
        .iter()
        .filter_map(|p| truth.get(&p.post_id).filter(|e| e.label != p.label).map(|e| &e.message))
        .collect()
}

/// Everything `eval` reports for one model on one labelled set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub model_id: String,
    pub dataset: String,
    pub metrics: MetricsReport,
    pub auc: Option<f64>,
    pub error_profile: ErrorProfile,
}

impl EvaluationReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "model      {}", self.model_id);
        let _ = writeln!(s, "dataset    {}", self.dataset);
        let _ = writeln!(s, "{}", self.metrics);
        match self.auc {
            Some(a) => {
                let _ = writeln!(s, "AUC        {a:.4}");
            }
            None => {
                let _ = writeln!(s, "AUC        n/a (single class)");
            }
        }
        let e = &self.error_profile;
        let _ = writeln!(s, "errors     {}", e.count);
        let _ = writeln!(
            s,
            "  longer than {:.1} chars: {} ({:.1}%)",
            e.train_mean_chars,
            e.long_text,
            e.long_text_share * 100.0
        );
        let _ = writeln!(s, "  with emoji: {} ({:.1}%)", e.with_emoji, e.emoji_share * 100.0);
        s
    }
}
