use chrono::{TimeZone, Utc};
use firewatch_core::classify::ScoredPrediction;
use firewatch_core::corpus::{Label, LabelSource, LabeledDataset, LabeledExample};
use firewatch_core::eval::{confusion, metrics};
use firewatch_core::textprep::NormalizedMessage;

const TOTAL: usize = 1_211;
const ERRORS: usize = 89;
const FALSE_NEGATIVES: usize = 61;
const RECALL: f64 = 0.87;
const ACCURACY: f64 = 0.93;

/// True positives consistent with a two-decimal recall of 0.87 given the
/// false negatives.
fn true_positive_candidates() -> Vec<usize> {
    (1..TOTAL)
        .filter(|&tp| ((tp as f64 / (tp + FALSE_NEGATIVES) as f64) * 100.0).round() / 100.0 == RECALL)
        .collect()
}

pub fn check() -> Result<String, String> {
    let fp = ERRORS - FALSE_NEGATIVES;
    ensure!(fp == 28, "fp {fp}");
    // tp / (tp + fn) = recall solved for tp, then rounded; it has to sit
    // inside the range a two-decimal recall allows.
    let tp = (RECALL * FALSE_NEGATIVES as f64 / (1.0 - RECALL)).round() as usize;
    let candidates = true_positive_candidates();
    ensure!(candidates.contains(&tp), "tp {tp} outside {}..={}", candidates[0], candidates[candidates.len() - 1]);
    ensure!(tp == 408, "reconstructed tp {tp}");
    let tn = TOTAL - tp - fp - FALSE_NEGATIVES;
    ensure!(tn == 714, "tn {tn}");

    // Build the predictions one message at a time and let the library count.
    let at = Utc.with_ymd_and_hms(2023, 4, 10, 0, 0, 0).unwrap();
    let mut examples = Vec::with_capacity(TOTAL);
    let mut preds = Vec::with_capacity(TOTAL);
    let cells = [
        (Label::Positive, Label::Positive, tp),
        (Label::Negative, Label::Positive, fp),
        (Label::Negative, Label::Negative, tn),
        (Label::Positive, Label::Negative, FALSE_NEGATIVES),
    ];
    for (truth, predicted, count) in cells {
        for _ in 0..count {
            let id = format!("r{}", examples.len());
            let source = if truth.is_positive() { LabelSource::HumanCoded } else { LabelSource::SampledNegative };
            examples.push(
                LabeledExample::new(NormalizedMessage::from_text(id.clone(), "texto", at), truth, source)
                    .map_err(|e| e.to_string())?,
            );
            preds.push(ScoredPrediction {
                post_id: id,
                score: if predicted.is_positive() { 0.9 } else { 0.1 },
                label: predicted,
                model_id: "reconstructed".into(),
            });
        }
    }
    let truth = LabeledDataset::new("holdout_reports", examples, None).map_err(|e| e.to_string())?;
    let cm = confusion(&preds, &truth).map_err(|e| e.to_string())?;
    let m = metrics(&cm).map_err(|e| e.to_string())?;
    ensure!(cm.total() == TOTAL, "total {}", cm.total());
    ensure!(cm.fp + cm.fn_ == ERRORS, "errors {}", cm.fp + cm.fn_);
    ensure!((cm.tp, cm.fp, cm.tn, cm.fn_) == (tp, fp, tn, FALSE_NEGATIVES), "cells {cm:?}");

    let by_hand = (tp + tn) as f64 / TOTAL as f64;
    ensure!((m.accuracy - by_hand).abs() < 1e-15, "accuracy {} vs {by_hand}", m.accuracy);
    ensure!((m.accuracy - ACCURACY).abs() <= 0.005, "accuracy {:.4} is not within 0.005 of {ACCURACY}", m.accuracy);
    ensure!((m.recall_pos - RECALL).abs() <= 0.005, "recall {:.4}", m.recall_pos);
    Ok(format!(
        "tp {tp} fp {fp} tn {tn} fn {FALSE_NEGATIVES}; accuracy {:.4}, recall {:.4}, macro F1 {:.4}, precision {:.4}",
        m.accuracy, m.recall_pos, m.macro_f1, m.precision
    ))
}
