use std::path::PathBuf;

use anyhow::Context;
use chrono::NaiveDate;
use clap::Args;
use firewatch_core::corpus::{
    assemble_training_set, build_holdout_interactions, build_holdout_reports, load_corpus, manifest_path,
    parse_recode, write_dataset, SplitSpec, YearMonth,
};
use firewatch_core::textprep::RawPost;
use serde::{Deserialize, Serialize};

use crate::{need, usage, Failure, Run};

pub const DEFAULT_RATIO: usize = 3;

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssembleArgs {
    /// Interaction-derived positives (raw posts).
    #[arg(long, value_name = "FILE")]
    pub positives: Option<PathBuf>,
    /// Unlabelled keyword-matched posts; negatives are sampled from the
    /// ones without location metadata.
    #[arg(long, value_name = "FILE")]
    pub unlabeled: Option<PathBuf>,
    /// Unlabelled posts with location metadata, for the holdout negatives.
    #[arg(long, value_name = "FILE")]
    pub geo: Option<PathBuf>,
    /// Training data is strictly before this date; holdouts on or after.
    #[arg(long, value_name = "YYYY-MM-DD")]
    pub cutoff: Option<NaiveDate>,
    /// Sampled negatives per positive.
    #[arg(long)]
    pub ratio: Option<usize>,
    #[arg(long, env = "FIREWATCH_SEED")]
    pub seed: Option<u64>,
    /// `post_id,label` lines from the human review of the holdout.
    #[arg(long, value_name = "FILE", requires = "review_month")]
    pub recode: Option<PathBuf>,
    /// Month the reviewers covered.
    #[arg(long, value_name = "YYYY-MM")]
    pub review_month: Option<String>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

fn load(path: &PathBuf, run: &mut Run) -> Result<Vec<RawPost>, Failure> {
    run.input(path)?;
    Ok(load_corpus(path).with_context(|| format!("loading {}", path.display()))?.posts)
}

pub fn run(args: AssembleArgs, run: &mut Run) -> Result<(), Failure> {
    let positives_path = need(args.positives, "positives")?;
    let unlabeled_path = need(args.unlabeled, "unlabeled")?;
    let cutoff = need(args.cutoff, "cutoff")?;
    let out = need(args.out, "out")?;
    let ratio = args.ratio.unwrap_or(DEFAULT_RATIO);
    let seed = args.seed.unwrap_or(0);
    let spec = SplitSpec::new(cutoff, ratio, seed).map_err(|e| usage(e.to_string()))?;
    let review = match (&args.recode, &args.review_month) {
        (Some(path), Some(month)) => {
            if args.geo.is_none() {
                return Err(usage("--recode needs --geo to build the holdout it recodes"));
            }
            Some((path.clone(), month.parse::<YearMonth>().map_err(usage)?))
        }
        (None, None) => None,
        _ => return Err(usage("--recode and --review-month go together")),
    };
    run.seed(seed);
    run.create_out(&out)?;

    let positives = load(&positives_path, run)?;
    let unlabeled = load(&unlabeled_path, run)?;
    let train = assemble_training_set(&positives, &unlabeled, &spec).context("assembling the training set")?;
    let path = run.out().file("train.jsonl");
    run.out().file(&sidecar("train.jsonl"));
    let m = write_dataset(&path, &train, Some(seed)).context("writing train.jsonl")?;
    println!("train: {} positive + {} negative = {}", m.positive, m.negative, m.total);

    if let Some(geo_path) = &args.geo {
        let geo = load(geo_path, run)?;
        let holdout = build_holdout_interactions(&positives, &geo, cutoff).context("building the interaction holdout")?;
        let path = run.out().file("holdout_interactions.jsonl");
        run.out().file(&sidecar("holdout_interactions.jsonl"));
        let m = write_dataset(&path, &holdout, None).context("writing holdout_interactions.jsonl")?;
        println!("holdout_interactions: {} positive + {} negative = {}", m.positive, m.negative, m.total);

        if let Some((recode_path, month)) = review {
            run.input(&recode_path)?;
            let text = std::fs::read_to_string(&recode_path)
                .with_context(|| format!("reading {}", recode_path.display()))?;
            let recode = parse_recode(&text).map_err(|e| anyhow::anyhow!("{}: {e}", recode_path.display()))?;
            let (reports, changes) =
                build_holdout_reports(&holdout, &recode, month).context("building the recoded holdout")?;
            let path = run.out().file("holdout_reports.jsonl");
            run.out().file(&sidecar("holdout_reports.jsonl"));
            let m = write_dataset(&path, &reports, None).context("writing holdout_reports.jsonl")?;
            run.out().write_json("recode_report.json", &changes)?;
            println!(
                "holdout_reports: {} positive + {} negative = {} ({} relabelled)",
                m.positive,
                m.negative,
                m.total,
                changes.flipped()
            );
        }
    }
    Ok(())
}

/// File name of the metadata sidecar that `write_dataset` puts next to a
/// dataset.
fn sidecar(name: &str) -> String {
    manifest_path(std::path::Path::new(name)).display().to_string()
}
