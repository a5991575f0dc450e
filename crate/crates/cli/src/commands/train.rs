use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use firewatch_core::classify::{ModelFile, ModelKind, ModelManifest, NaiveBayesConfig, DEFAULT_THRESHOLD};
use firewatch_core::corpus::read_dataset;
use firewatch_core::Execution;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::layered::is_false;
use crate::{need, usage, Failure, Run};

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainArgs {
    /// Labelled dataset written by `assemble`.
    #[arg(long, value_name = "FILE")]
    pub train: Option<PathBuf>,
    /// Additive smoothing.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub model_id: Option<String>,
    /// Single-threaded fitting.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    pub sequential: bool,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

pub(crate) fn nb_config(alpha: Option<f64>, threshold: Option<f64>, sequential: bool) -> Result<NaiveBayesConfig, Failure> {
    let defaults = NaiveBayesConfig::default();
    let cfg = NaiveBayesConfig {
        alpha: alpha.unwrap_or(defaults.alpha),
        threshold: threshold.unwrap_or(DEFAULT_THRESHOLD),
        execution: if sequential { Execution::Sequential } else { defaults.execution },
        ..defaults
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

pub fn run(args: TrainArgs, run: &mut Run) -> Result<(), Failure> {
    let train_path = need(args.train, "train")?;
    let out = need(args.out, "out")?;
    let mut cfg = nb_config(args.alpha, args.threshold, args.sequential)?;
    if let Some(id) = args.model_id {
        cfg.model_id = id;
    }
    run.create_out(&out)?;
    run.input(&train_path)?;

    let train = read_dataset(&train_path).with_context(|| format!("reading {}", train_path.display()))?;
    let model = cfg.fit(train.examples()).context("fitting Naive Bayes")?;
    let counts = train.counts();
    let manifest = ModelManifest {
        model_id: model.model_id.clone(),
        kind: ModelKind::NaiveBayes,
        threshold: model.threshold,
        hyperparameters: BTreeMap::from([
            ("alpha".to_string(), json!(model.alpha)),
            ("vocabulary".to_string(), json!(model.vocabulary.len())),
        ]),
        training_counts: Some(counts),
    };
    let path = run.out().file("model.json");
    ModelFile::NaiveBayes(model).save(&path).context("saving the model")?;
    run.out().write_json("model_manifest.json", &manifest)?;
    println!(
        "trained {} on {} positive + {} negative, vocabulary {}",
        manifest.model_id, counts.positive, counts.negative, manifest.hyperparameters["vocabulary"]
    );
    Ok(())
}
