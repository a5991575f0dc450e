use chrono::{TimeZone, Utc};
use firewatch_core::classify::{ClassifyError, NaiveBayesConfig};
use firewatch_core::corpus::{Label, LabelSource, LabeledExample};
use firewatch_core::textprep::NormalizedMessage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TERMS: [&str; 8] = ["alfa", "bravo", "charlie", "delta", "eco", "foxtrot", "golf", "hotel"];
const ALPHAS: [f64; 3] = [0.1, 1.0, 2.5];
const TOL: f64 = 1e-9;

/// Term counts per document, one row per document.
type Counts = Vec<Vec<u32>>;

fn text(row: &[u32]) -> String {
    let mut words = Vec::new();
    // Interleave so repeated terms are not adjacent.
    for round in 0..row.iter().copied().max().unwrap_or(0) {
        for (k, &c) in row.iter().enumerate() {
            if c > round {
                words.push(TERMS[k]);
            }
        }
    }
    words.join(" ")
}

/// Posterior of the positive class from first principles: smoothed idf,
/// L2-normalized tf-idf rows, class totals, and the product of per-term
/// probabilities raised to the query weights.
fn oracle(docs: &Counts, positive: &[bool], query: &[u32], alpha: f64) -> f64 {
    let n = docs.len() as f64;
    let t = query.len();
    let df: Vec<f64> = (0..t).map(|k| docs.iter().filter(|d| d[k] > 0).count() as f64).collect();
    let in_vocab: Vec<bool> = df.iter().map(|&d| d > 0.0).collect();
    let v = in_vocab.iter().filter(|&&b| b).count() as f64;
    let weights = |row: &[u32]| -> Vec<f64> {
        let raw: Vec<f64> = (0..t)
            .map(|k| if in_vocab[k] { row[k] as f64 * (((1.0 + n) / (1.0 + df[k])).ln() + 1.0) } else { 0.0 })
            .collect();
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            raw
        } else {
            raw.iter().map(|x| x / norm).collect()
        }
    };
    let q = weights(query);
    let mut joint = [0.0; 2];
    for (c, class) in [false, true].into_iter().enumerate() {
        let members: Vec<&Vec<u32>> = docs.iter().zip(positive).filter(|(_, &p)| p == class).map(|(d, _)| d).collect();
        let mut f = vec![0.0; t];
        for d in &members {
            for (k, w) in weights(d).into_iter().enumerate() {
                f[k] += w;
            }
        }
        let total: f64 = f.iter().sum();
        let mut p = members.len() as f64 / n;
        for k in (0..t).filter(|&k| in_vocab[k]) {
            p *= ((f[k] + alpha) / (total + alpha * v)).powf(q[k]);
        }
        joint[c] = p;
    }
    joint[1] / (joint[0] + joint[1])
}

struct Tally {
    corpora: usize,
    rejected: usize,
    comparisons: usize,
    worst: f64,
}

fn examples(docs: &Counts, positive: &[bool]) -> Vec<LabeledExample> {
    let at = Utc.with_ymd_and_hms(2022, 1, 1, 0, 0, 0).unwrap();
    docs.iter()
        .zip(positive)
        .enumerate()
        .map(|(i, (d, &p))| {
            let (label, source) = if p {
                (Label::Positive, LabelSource::HumanCoded)
            } else {
                (Label::Negative, LabelSource::SampledNegative)
            };
            LabeledExample::new(NormalizedMessage::from_text(format!("d{i}"), text(d), at), label, source).unwrap()
        })
        .collect()
}

/// Fits every smoothing value and compares each query against the oracle.
fn compare(docs: &Counts, positive: &[bool], queries: &[Vec<u32>], tally: &mut Tally) -> Result<(), String> {
    tally.corpora += 1;
    let ex = examples(docs, positive);
    let single = positive.iter().all(|&p| p) || positive.iter().all(|&p| !p);
    for alpha in ALPHAS {
        let fitted = NaiveBayesConfig { alpha, ..Default::default() }.fit(&ex);
        let model = match (fitted, single) {
            (Err(ClassifyError::SingleClass(_)), true) => {
                tally.rejected += 1;
                return Ok(());
            }
            (Ok(m), false) => m,
            (Ok(_), true) => return Err(format!("single-class corpus {docs:?} was accepted")),
            (Err(e), _) => return Err(format!("{docs:?} {positive:?}: {e}")),
        };
        for q in queries {
            let mut qtext = text(q);
            qtext.push_str(" zulu");
            let got = model.positive_posterior(&qtext);
            let want = oracle(docs, positive, q, alpha);
            let diff = (got - want).abs();
            tally.worst = tally.worst.max(diff);
            tally.comparisons += 1;
            ensure!(diff <= TOL, "docs {docs:?} labels {positive:?} query {q:?} alpha {alpha}: {got} vs {want}");
        }
    }
    Ok(())
}

fn labelings(d: usize) -> impl Iterator<Item = Vec<bool>> {
    (0u32..1 << d).map(move |mask| (0..d).map(|j| mask >> j & 1 == 1).collect())
}

/// Every subset of the first `t` terms, once each, plus the empty query.
fn subset_queries(t: usize, rng: Option<&mut ChaCha8Rng>) -> Vec<Vec<u32>> {
    let mut out: Vec<Vec<u32>> = (0u32..1 << t).map(|m| (0..t).map(|k| m >> k & 1).collect()).collect();
    if let Some(rng) = rng {
        // and a few with repeated terms
        for _ in 0..4 {
            out.push((0..t).map(|_| rng.random_range(0..4)).collect());
        }
    }
    out
}

pub fn check() -> Result<String, String> {
    let mut tally = Tally {
        corpora: 0,
        rejected: 0,
        comparisons: 0,
        worst: 0.0,
    };

    // Tier one: every corpus of up to three documents, each a non-empty set
    // of up to three terms, under every labelling.
    for t in 1..=3usize {
        let subsets: Vec<Vec<u32>> = (1u32..1 << t).map(|m| (0..t).map(|k| m >> k & 1).collect()).collect();
        let queries = subset_queries(t, None);
        for d in 1..=3usize {
            let mut idx = vec![0usize; d];
            loop {
                let docs: Counts = idx.iter().map(|&i| subsets[i].clone()).collect();
                for positive in labelings(d) {
                    compare(&docs, &positive, &queries, &mut tally)?;
                }
                // odometer over document choices
                let mut j = 0;
                while j < d && idx[j] + 1 == subsets.len() {
                    idx[j] = 0;
                    j += 1;
                }
                if j == d {
                    break;
                }
                idx[j] += 1;
            }
        }
    }
    let tier_one = tally.corpora;

    // Tier two: every (documents <= 6, terms <= 8, labelling) shape with
    // seeded counts in 0..=3, every term used at least once, queried on
    // every subset of the vocabulary.
    let mut rng = ChaCha8Rng::seed_from_u64(68);
    for d in 1..=6usize {
        for t in 1..=8usize {
            let queries = subset_queries(t, Some(&mut rng));
            for positive in labelings(d) {
                for _draw in 0..2 {
                    let mut docs: Counts = (0..d).map(|_| (0..t).map(|_| rng.random_range(0..=3)).collect()).collect();
                    for k in 0..t {
                        if docs.iter().all(|r| r[k] == 0) {
                            docs[k % d][k] = 1;
                        }
                    }
                    for r in docs.iter_mut() {
                        if r.iter().all(|&c| c == 0) {
                            r[rng.random_range(0..t)] = 1;
                        }
                    }
                    compare(&docs, &positive, &queries, &mut tally)?;
                }
            }
        }
    }
    Ok(format!(
        "{} corpora ({} fully enumerated), {} single-class rejected, {} posteriors compared, max |diff| {:.1e}",
        tally.corpora, tier_one, tally.rejected, tally.comparisons, tally.worst
    ))
}
