use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use firewatch_core::classify::{Classifier, ModelFile, RandomBaseline, ScoredPrediction};
use firewatch_core::corpus::{read_dataset, read_jsonl, write_jsonl};
use firewatch_core::eval::{
    confusion, error_profile, mean_chars, metrics, misclassified, roc_for, EvalError, EvaluationReport,
};
use firewatch_core::textprep::NormalizedMessage;
use serde::{Deserialize, Serialize};

use crate::layered::is_false;
use crate::{need, usage, Failure, Run};

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalArgs {
    /// Labelled dataset to evaluate on.
    #[arg(long, value_name = "FILE")]
    pub data: Option<PathBuf>,
    /// Model file from `train-nb`, `pseudo`, or an external runtime descriptor.
    #[arg(long, value_name = "FILE", conflicts_with_all = ["predictions", "random_baseline"])]
    pub model: Option<PathBuf>,
    /// Precomputed predictions, one JSON object per line.
    #[arg(long, value_name = "FILE", conflicts_with = "random_baseline")]
    pub predictions: Option<PathBuf>,
    /// Score with the seeded random baseline.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    pub random_baseline: bool,
    #[arg(long, env = "FIREWATCH_SEED")]
    pub seed: Option<u64>,
    /// Training set; its mean message length is the error-profile yardstick.
    /// Defaults to the evaluated set.
    #[arg(long, value_name = "FILE")]
    pub train: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

enum Scorer {
    Model(PathBuf),
    Predictions(PathBuf),
    Random(u64),
}

pub fn run(args: EvalArgs, run: &mut Run) -> Result<(), Failure> {
    let data_path = need(args.data, "data")?;
    let out = need(args.out, "out")?;
    let scorer = match (args.model, args.predictions, args.random_baseline) {
        (Some(m), None, false) => Scorer::Model(m),
        (None, Some(p), false) => Scorer::Predictions(p),
        (None, None, true) => Scorer::Random(args.seed.unwrap_or(0)),
        _ => return Err(usage("give exactly one of --model, --predictions, --random-baseline")),
    };
    if let Scorer::Random(seed) = scorer {
        run.seed(seed);
    }
    run.create_out(&out)?;

    run.input(&data_path)?;
    let truth = read_dataset(&data_path).with_context(|| format!("reading {}", data_path.display()))?;
    let msgs: Vec<NormalizedMessage> = truth.examples().iter().map(|e| e.message.clone()).collect();
    let preds: Vec<ScoredPrediction> = match &scorer {
        Scorer::Model(path) => {
            run.input(path)?;
            let model = ModelFile::load(path).and_then(ModelFile::into_classifier).context("loading the model")?;
            model.predict_batch(&msgs).context("scoring")?
        }
        Scorer::Predictions(path) => {
            run.input(path)?;
            read_jsonl(path).with_context(|| format!("reading {}", path.display()))?
        }
        Scorer::Random(seed) => RandomBaseline::new(*seed).predict_batch(&msgs).context("scoring")?,
    };
    let model_id = preds.first().map(|p| p.model_id.clone()).unwrap_or_else(|| "none".to_string());

    let cm = confusion(&preds, &truth).context("matching predictions to labels")?;
    let m = metrics(&cm).context("computing metrics")?;
    let roc = match roc_for(&preds, &truth) {
        Ok(r) => Some(r),
        Err(EvalError::SingleClass(_)) => None,
        Err(e) => return Err(anyhow::Error::from(e).context("computing the ROC curve").into()),
    };
    let yardstick = match &args.train {
        Some(path) => {
            run.input(path)?;
            let train = read_dataset(path).with_context(|| format!("reading {}", path.display()))?;
            let train_msgs: Vec<NormalizedMessage> = train.examples().iter().map(|e| e.message.clone()).collect();
            mean_chars(&train_msgs)
        }
        None => mean_chars(&msgs),
    };
    let wrong: Vec<NormalizedMessage> = misclassified(&preds, &truth).into_iter().cloned().collect();
    let report = EvaluationReport {
        model_id,
        dataset: truth.name.clone(),
        metrics: m,
        auc: roc.as_ref().map(|r| r.auc),
        error_profile: error_profile(&wrong, yardstick),
    };

    let out = run.out();
    out.write_json("report.json", &report)?;
    let text = report.to_text();
    out.write_text("report.txt", &text)?;
    if let Some(r) = &roc {
        let path = out.file("roc.csv");
        let file = std::fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
        r.write_csv(std::io::BufWriter::new(file)).context("writing roc.csv")?;
    }
    write_jsonl(out.file("predictions.jsonl"), &preds).context("writing predictions")?;
    write_jsonl(out.file("misclassified.jsonl"), &wrong).context("writing misclassified messages")?;
    print!("{text}");
    Ok(())
}
