use std::collections::HashSet;
use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use firewatch_core::classify::ModelFile;
use firewatch_core::corpus::{load_corpus, read_dataset, write_jsonl};
use firewatch_core::selftrain::{
    augment_and_retrain, generate_pseudo_labels, quantile_audit_sample, read_audit_corrections, write_audit_review,
    IterationReport, Trainer,
};
use firewatch_core::textprep::normalize;
use firewatch_core::Execution;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::commands::train::nb_config;
use crate::layered::is_false;
use crate::{need, usage, Failure, Run};

pub const DEFAULT_AUDIT_PER_CELL: usize = 10;

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PseudoArgs {
    /// Labelled training set.
    #[arg(long, value_name = "FILE")]
    pub train: Option<PathBuf>,
    /// Unlabelled pool (raw posts) to pseudo-label.
    #[arg(long, value_name = "FILE")]
    pub pool: Option<PathBuf>,
    /// Dataset whose ids must not appear in the pool, e.g. a holdout. Repeatable.
    #[arg(long = "exclude", value_name = "FILE")]
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub exclude: Vec<PathBuf>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    pub sequential: bool,
    /// Drop pseudo-labels whose winning-class probability is below this.
    #[arg(long)]
    pub confidence_floor: Option<f64>,
    /// Audit entries drawn per (score quartile, label) cell.
    #[arg(long)]
    pub audit_per_cell: Option<usize>,
    /// Reviewed audit file; filled-in labels override pseudo-labels.
    #[arg(long, value_name = "FILE")]
    pub corrections: Option<PathBuf>,
    #[arg(long, env = "FIREWATCH_SEED")]
    pub seed: Option<u64>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

pub fn run(args: PseudoArgs, run: &mut Run) -> Result<(), Failure> {
    let train_path = need(args.train, "train")?;
    let pool_path = need(args.pool, "pool")?;
    let out = need(args.out, "out")?;
    let trainer = nb_config(args.alpha, args.threshold, args.sequential)?;
    let iterations = args.iterations.unwrap_or(1);
    if iterations == 0 {
        return Err(usage("--iterations must be at least 1"));
    }
    let k = args.audit_per_cell.unwrap_or(DEFAULT_AUDIT_PER_CELL);
    if k == 0 {
        return Err(usage("--audit-per-cell must be at least 1"));
    }
    if let Some(f) = args.confidence_floor {
        if !(0.5..=1.0).contains(&f) {
            return Err(usage("--confidence-floor must be in [0.5, 1]"));
        }
    }
    let seed = args.seed.unwrap_or(0);
    run.seed(seed);
    run.create_out(&out)?;

    run.input(&train_path)?;
    let base = read_dataset(&train_path).with_context(|| format!("reading {}", train_path.display()))?;
    let mut forbidden: HashSet<String> = base.ids().into_iter().map(String::from).collect();
    for path in &args.exclude {
        run.input(path)?;
        let ds = read_dataset(path).with_context(|| format!("reading {}", path.display()))?;
        forbidden.extend(ds.ids().into_iter().map(String::from));
    }
    run.input(&pool_path)?;
    let pool_posts = load_corpus(&pool_path).with_context(|| format!("loading {}", pool_path.display()))?.posts;
    let pool = Execution::available().map(&pool_posts, normalize);
    let pool_name = pool_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let corrections = match &args.corrections {
        Some(path) => {
            run.input(path)?;
            Some(read_audit_corrections(path).with_context(|| format!("reading {}", path.display()))?)
        }
        None => None,
    };

    let mut model = trainer.train(&base).context("initial training")?;
    let mut reports = Vec::with_capacity(iterations);
    let mut corrected = 0;
    let mut last = None;
    for iteration in 1..=iterations {
        let mut p = generate_pseudo_labels(&model, &pool, &pool_name, &forbidden).context("pseudo-labelling")?;
        if let Some(c) = &corrections {
            corrected = p.apply_corrections(c).context("applying corrections")?;
        }
        if let Some(floor) = args.confidence_floor {
            // Reviewed entries stay whatever their score.
            p.entries.retain(|e| {
                corrections.as_ref().is_some_and(|c| c.contains_key(e.post_id())) || e.score.max(1.0 - e.score) >= floor
            });
        }
        let retrained = augment_and_retrain(&base, &p, &trainer).context("retraining")?;
        reports.push(IterationReport {
            iteration,
            pseudo_counts: p.counts(),
            augmented_size: retrained.augmented.len(),
        });
        model = retrained.model;
        last = Some(p);
    }
    let pseudo = last.expect("at least one iteration");
    let audit = quantile_audit_sample(&pseudo, k, seed).context("drawing the audit sample")?;

    let out = run.out();
    write_jsonl(out.file("pseudo_labels.jsonl"), &pseudo.entries).context("writing pseudo-labels")?;
    write_audit_review(out.file("audit_review.jsonl"), &audit).context("writing the audit file")?;
    let path = out.file("model.json");
    ModelFile::NaiveBayes(model).save(&path).context("saving the model")?;
    let cells: Vec<_> = audit
        .cells
        .iter()
        .map(|c| json!({ "quartile": c.quartile, "label": c.label, "population": c.population, "sampled": c.entries.len() }))
        .collect();
    out.write_json(
        "self_train.json",
        &json!({
            "iterations": reports,
            "pool": pool_name,
            "pool_size": pool.len(),
            "confidence_floor": args.confidence_floor,
            "corrections_applied": corrected,
            "audit": { "k": k, "quartiles": audit.quartiles, "cells": cells, "total": audit.total() },
        }),
    )?;
    let last = reports.last().unwrap();
    println!(
        "{} iteration(s); pseudo-labels {} positive + {} negative; augmented set {}; audit sample {}",
        iterations,
        last.pseudo_counts.positive,
        last.pseudo_counts.negative,
        last.augmented_size,
        audit.total()
    );
    Ok(())
}
