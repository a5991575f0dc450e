use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use firewatch_core::corpus::{load_corpus, write_jsonl};
use firewatch_core::textprep::{filter_corpus, ExclusionRuleSet};
use firewatch_core::Execution;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::layered::is_false;
use crate::{need, Failure, Run};

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrepArgs {
    /// Line-delimited JSON corpus of raw posts.
    #[arg(long, value_name = "FILE")]
    pub input: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Partner account; posts mentioning it are dropped. Repeatable.
    #[arg(long = "partner", value_name = "HANDLE")]
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub partners: Vec<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    pub keep_replies: bool,
    /// Keep posts whose normalized text was already seen.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    pub keep_duplicates: bool,
}

pub fn run(args: PrepArgs, run: &mut Run) -> Result<(), Failure> {
    let input = need(args.input, "input")?;
    let out = need(args.out, "out")?;
    let rules = ExclusionRuleSet {
        drop_replies: !args.keep_replies,
        drop_duplicates: !args.keep_duplicates,
        ..ExclusionRuleSet::with_partners(&args.partners)
    };
    run.create_out(&out)?;
    run.input(&input)?;

    let loaded = load_corpus(&input).with_context(|| format!("loading {}", input.display()))?;
    let skipped_lines = loaded.skipped_lines.clone();
    let (kept, stats) = filter_corpus(loaded.posts, &rules, Execution::available());

    let out = run.out();
    write_jsonl(out.file("posts.jsonl"), kept.iter().map(|(raw, _)| raw)).context("writing posts")?;
    write_jsonl(out.file("normalized.jsonl"), kept.iter().map(|(_, msg)| msg)).context("writing messages")?;
    out.write_json(
        "prep_stats.json",
        &json!({ "filter": stats, "rules": rules, "skipped_lines": skipped_lines }),
    )?;
    println!(
        "kept {} of {} posts ({} partner mentions, {} replies, {} duplicates, {} unreadable lines)",
        stats.kept,
        stats.input,
        stats.partner_mentions,
        stats.replies,
        stats.duplicates,
        skipped_lines.len()
    );
    Ok(())
}
