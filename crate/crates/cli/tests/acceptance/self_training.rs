use std::collections::{HashMap, HashSet};

use chrono::{TimeZone, Utc};
use firewatch_core::classify::{Classifier, NaiveBayesConfig};
use firewatch_core::corpus::{Label, LabelSource, LabeledDataset, LabeledExample};
use firewatch_core::eval::{confusion, metrics};
use firewatch_core::selftrain::{augment_and_retrain, generate_pseudo_labels, quantile_audit_sample, Trainer};
use firewatch_core::textprep::NormalizedMessage;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const POSITIVE: &[&str] = &["tiro", "tiroteio", "baleado", "disparo", "bala", "rajada", "confronto"];
const NEGATIVE: &[&str] = &["bolo", "festa", "jogo", "praia", "cafe", "samba", "novela"];
const SHARED: &[&str] = &["hoje", "agora", "aqui", "rua", "gente", "muito", "perto", "noite"];

/// Class words never cross over; shared words pad every message.
fn message(id: String, positive: bool, rng: &mut ChaCha8Rng) -> NormalizedMessage {
    let own = if positive { POSITIVE } else { NEGATIVE };
    let mut words: Vec<&str> = (0..rng.random_range(1..=3)).map(|_| *own.choose(rng).unwrap()).collect();
    words.extend((0..rng.random_range(1..=5)).map(|_| *SHARED.choose(rng).unwrap()));
    words.shuffle(rng);
    let at = Utc.with_ymd_and_hms(2022, 9, 1, 0, 0, 0).unwrap();
    NormalizedMessage::from_text(id, words.join(" "), at)
}

fn dataset(name: &str, prefix: &str, n: usize, share: f64, rng: &mut ChaCha8Rng) -> LabeledDataset {
    let examples = (0..n)
        .map(|i| {
            let positive = rng.random_bool(share);
            let (label, source) = if positive {
                (Label::Positive, LabelSource::HumanCoded)
            } else {
                (Label::Negative, LabelSource::SampledNegative)
            };
            LabeledExample::new(message(format!("{prefix}{i}"), positive, rng), label, source).unwrap()
        })
        .collect();
    LabeledDataset::new(name, examples, None).unwrap()
}

fn recall(model: &impl Classifier, holdout: &LabeledDataset) -> Result<f64, String> {
    let msgs: Vec<NormalizedMessage> = holdout.examples().iter().map(|e| e.message.clone()).collect();
    let preds = model.predict_batch(&msgs).map_err(|e| e.to_string())?;
    let m = metrics(&confusion(&preds, holdout).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    Ok(m.recall_pos)
}

pub fn check() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    let labeled = dataset("labeled", "l", 200, 0.25, &mut rng);
    let holdout = dataset("holdout", "h", 600, 0.3, &mut rng);
    let mut truth = HashMap::new();
    let pool: Vec<NormalizedMessage> = (0..2_000)
        .map(|i| {
            let positive = rng.random_bool(0.3);
            let m = message(format!("u{i}"), positive, &mut rng);
            truth.insert(m.post_id.clone(), positive);
            m
        })
        .collect();
    let forbidden: HashSet<String> = labeled.ids().into_iter().chain(holdout.ids()).map(String::from).collect();

    let trainer = NaiveBayesConfig::default();
    let base = trainer.train(&labeled).map_err(|e| e.to_string())?;
    let before = recall(&base, &holdout)?;

    let pseudo = generate_pseudo_labels(&base, &pool, "unlabeled", &forbidden).map_err(|e| e.to_string())?;
    ensure!(pseudo.len() == 2_000, "{} pseudo-labels", pseudo.len());
    let agree = pseudo.entries.iter().filter(|e| truth[e.post_id()] == e.pseudo_label.is_positive()).count();
    let retrained = augment_and_retrain(&labeled, &pseudo, &trainer).map_err(|e| e.to_string())?;
    ensure!(retrained.augmented.len() == 2_200, "augmented set has {}", retrained.augmented.len());
    let after = recall(&retrained.model, &holdout)?;
    ensure!(after >= before - 0.01, "recall fell from {before:.4} to {after:.4}");

    let audit = quantile_audit_sample(&pseudo, 10, 80).map_err(|e| e.to_string())?;
    let full = audit.cells.len() == 8 && audit.cells.iter().all(|c| c.population >= 10);
    ensure!(
        full,
        "fixture did not fill every cell: {:?}",
        audit.cells.iter().map(|c| (c.quartile, c.label, c.population)).collect::<Vec<_>>()
    );
    ensure!(audit.total() == 80, "audit sample has {} entries", audit.total());
    let sampled: HashSet<&str> = audit.cells.iter().flat_map(|c| c.entries.iter().map(|e| e.post_id())).collect();
    ensure!(sampled.len() == 80, "audit sample repeats entries");
    let again = quantile_audit_sample(&pseudo, 10, 80).map_err(|e| e.to_string())?;
    ensure!(again == audit, "audit sample is not reproducible under its seed");

    Ok(format!(
        "recall {before:.4} -> {after:.4}; pseudo-labels agree with hidden truth on {agree}/2000; audit 80 from 8 full cells (smallest {})",
        audit.cells.iter().map(|c| c.population).min().unwrap()
    ))
}
