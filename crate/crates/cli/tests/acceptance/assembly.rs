use std::collections::HashSet;

use chrono::{Duration, NaiveDate, TimeZone, Utc};
use firewatch_core::corpus::{assemble_training_set, build_holdout_interactions, Label, LabelSource, SplitSpec};
use firewatch_core::textprep::RawPost;

const POSITIVES_BEFORE: usize = 24_353;
const POSITIVES_AFTER: usize = 1_909;
const GEO_AFTER: usize = 4_815;

fn cutoff() -> NaiveDate {
    NaiveDate::from_ymd_opt(2023, 1, 1).unwrap()
}

/// `day` counts from the cutoff; negative is before it.
fn post(id: String, day: i64, geo: bool) -> RawPost {
    let at = Utc.with_ymd_and_hms(2023, 1, 1, 0, 0, 0).unwrap() + Duration::days(day) + Duration::minutes(day.rem_euclid(600));
    let mut p = RawPost::new(id, "ouvi tiro", at);
    p.has_geo_tag = geo;
    p
}

struct Fixture {
    positives: Vec<RawPost>,
    unlabeled: Vec<RawPost>,
    geo: Vec<RawPost>,
    eligible: HashSet<String>,
}

/// Same shape as the original collection: interaction positives on both
/// sides of the cutoff; a language-filtered pool with every kind of post the
/// sampler has to skip; a geo pool with pre-cutoff posts, positives and
/// repeats mixed in.
fn fixture() -> Fixture {
    let mut positives = Vec::with_capacity(POSITIVES_BEFORE + POSITIVES_AFTER);
    for i in 0..POSITIVES_BEFORE {
        positives.push(post(format!("L{i}"), -1 - (i % 2000) as i64, false));
    }
    for i in 0..POSITIVES_AFTER {
        positives.push(post(format!("L{}", POSITIVES_BEFORE + i), (i % 120) as i64, i % 3 == 0));
    }

    let mut unlabeled = Vec::new();
    let mut eligible = HashSet::new();
    for i in 0..80_000 {
        let id = format!("U{i}");
        eligible.insert(id.clone());
        unlabeled.push(post(id, -1 - (i % 2000) as i64, false));
    }
    for i in 0..3_000 {
        unlabeled.push(post(format!("Ugeo{i}"), -5, true));
    }
    for i in 0..2_000 {
        unlabeled.push(post(format!("Unew{i}"), (i % 90) as i64, false));
    }
    for i in 0..500 {
        unlabeled.push(post(format!("L{}", i * 7), -3, false));
    }
    for i in 0..1_000 {
        unlabeled.push(post(format!("U{}", i * 13), -2, false));
    }

    let mut geo = Vec::new();
    for i in 0..GEO_AFTER {
        geo.push(post(format!("G{i}"), (i % 130) as i64, true));
    }
    for i in 0..600 {
        geo.push(post(format!("Gold{i}"), -10 - i as i64, true));
    }
    for i in 0..300 {
        geo.push(post(format!("L{}", POSITIVES_BEFORE + i), 4, true));
    }
    for i in 0..200 {
        geo.push(post(format!("G{}", i * 11), 9, true));
    }
    Fixture {
        positives,
        unlabeled,
        geo,
        eligible,
    }
}

pub fn check() -> Result<String, String> {
    let f = fixture();
    let spec = SplitSpec::new(cutoff(), 3, 97_412).map_err(|e| e.to_string())?;
    let train = assemble_training_set(&f.positives, &f.unlabeled, &spec).map_err(|e| e.to_string())?;
    let c = train.counts();
    ensure!(c.positive == 24_353, "{} positives", c.positive);
    ensure!(c.negative == 73_059, "{} negatives", c.negative);
    ensure!(train.len() == 97_412, "{} examples", train.len());
    let cut = Utc.from_utc_datetime(&cutoff().and_hms_opt(0, 0, 0).unwrap());
    for e in train.examples() {
        ensure!(e.message.created_at < cut, "{} is not before the cutoff", e.post_id());
        match e.label {
            Label::Positive => ensure!(e.label_source == LabelSource::Interaction, "{} positive source", e.post_id()),
            Label::Negative => {
                ensure!(f.eligible.contains(e.post_id()), "{} is not an eligible negative", e.post_id());
                ensure!(e.label_source == LabelSource::SampledNegative, "{} negative source", e.post_id());
            }
        }
    }
    let again = assemble_training_set(&f.positives, &f.unlabeled, &spec).map_err(|e| e.to_string())?;
    ensure!(again.ids() == train.ids(), "same seed drew a different sample");

    let holdout = build_holdout_interactions(&f.positives, &f.geo, cutoff()).map_err(|e| e.to_string())?;
    let h = holdout.counts();
    ensure!(h.positive == 1_909, "{} holdout positives", h.positive);
    ensure!(h.negative == 4_815, "{} holdout negatives", h.negative);
    ensure!(holdout.len() == 6_724, "{} holdout examples", holdout.len());
    let train_ids: HashSet<&str> = train.ids().into_iter().collect();
    ensure!(holdout.ids().iter().all(|id| !train_ids.contains(id)), "holdout shares ids with training");

    Ok(format!(
        "train {} + {} = {}; holdout {} + {} = {}; {} pool posts skipped as ineligible or repeated",
        c.positive,
        c.negative,
        train.len(),
        h.positive,
        h.negative,
        holdout.len(),
        f.unlabeled.len() - f.eligible.len()
    ))
}
