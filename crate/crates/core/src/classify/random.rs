use std::sync::atomic::{AtomicU64, Ordering};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ClassifyError, Classifier, ScoredPrediction};
use crate::corpus::Label;
use crate::textprep::NormalizedMessage;

/// Fair coin at a fixed position of the seeded stream. Positions are
/// independent, so batches can be scored in any order.
fn coin(seed: u64, position: u64) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_word_pos(position as u128);
    rng.next_u32() >> 31 == 1
}

/// Random baseline prediction for the message at `position` of the stream.
/// The text is ignored; the score is 1 for positive and 0 for negative.
pub fn predict_random(seed: u64, position: u64, msg: &NormalizedMessage) -> ScoredPrediction {
    let label = if coin(seed, position) { Label::Positive } else { Label::Negative };
    ScoredPrediction {
        post_id: msg.post_id.clone(),
        score: if label.is_positive() { 1.0 } else { 0.0 },
        label,
        model_id: RandomBaseline::DEFAULT_ID.to_string(),
    }
}

/// Ignores the text and picks either class with equal probability.
#[derive(Debug)]
pub struct RandomBaseline {
    seed: u64,
    model_id: String,
    position: AtomicU64,
}

impl RandomBaseline {
    pub const DEFAULT_ID: &'static str = "random-baseline";

    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            model_id: Self::DEFAULT_ID.to_string(),
            position: AtomicU64::new(0),
        }
    }

    pub fn with_model_id(mut self, id: impl Into<String>) -> Self {
        self.model_id = id.into();
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

impl Classifier for RandomBaseline {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn threshold(&self) -> f64 {
        0.5
    }

    fn score_batch(&self, batch: &[NormalizedMessage]) -> Result<Vec<f64>, ClassifyError> {
        let start = self.position.fetch_add(batch.len() as u64, Ordering::Relaxed);
        Ok((0..batch.len() as u64)
            .map(|i| if coin(self.seed, start + i) { 1.0 } else { 0.0 })
            .collect())
    }
}
