use std::io::BufRead;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use chrono::NaiveDate;
use clap::Args;
use firewatch_impact::{
    build_panel, diagnostics, diff_in_means, fit_negbin, fit_ols, format_table, read_events_csv, write_panel_csv,
    DateWindow, Formula, InteractionRecord, PanelSpec,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::{need, usage, Failure, Run};

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImpactArgs {
    /// Interaction records, one JSON object per line. A monitor journal works
    /// too; only its interaction entries are read.
    #[arg(long, value_name = "FILE")]
    pub interactions: Option<PathBuf>,
    /// Event CSV with `date,region,victims,population` columns.
    #[arg(long, value_name = "FILE")]
    pub events: Option<PathBuf>,
    #[arg(long)]
    pub treatment: Option<String>,
    #[arg(long)]
    pub control: Option<String>,
    /// First day of the panel.
    #[arg(long, value_name = "YYYY-MM-DD")]
    pub start: Option<NaiveDate>,
    /// Last day of the panel, inclusive.
    #[arg(long, value_name = "YYYY-MM-DD")]
    pub end: Option<NaiveDate>,
    /// First day of the intervention period.
    #[arg(long, value_name = "YYYY-MM-DD")]
    pub intervention: Option<NaiveDate>,
    /// Right-hand side for both models, e.g. `replies ~ intervention*treatment + number_victims`.
    #[arg(long)]
    pub formula: Option<String>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

fn read_interactions(path: &Path) -> anyhow::Result<Vec<InteractionRecord>> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut value: serde_json::Value =
            serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?;
        let value = match value.get("type").and_then(|t| t.as_str()) {
            Some("interaction") => value["record"].take(),
            Some(_) => continue,
            None => value,
        };
        out.push(serde_json::from_value(value).with_context(|| format!("{}:{}", path.display(), i + 1))?);
    }
    Ok(out)
}

pub fn run(args: ImpactArgs, run: &mut Run) -> Result<(), Failure> {
    let interactions_path = need(args.interactions, "interactions")?;
    let events_path = need(args.events, "events")?;
    let treatment = need(args.treatment, "treatment")?;
    let control = need(args.control, "control")?;
    let start = need(args.start, "start")?;
    let end = need(args.end, "end")?;
    let intervention = need(args.intervention, "intervention")?;
    let out = need(args.out, "out")?;
    let window = DateWindow::new(start, end).map_err(|e| usage(e.to_string()))?;
    if intervention <= start || intervention > end {
        return Err(usage("--intervention must fall after --start and no later than --end"));
    }
    let formula = match &args.formula {
        Some(f) => Formula::parse(f).map_err(|e| usage(e.to_string()))?,
        None => Formula::full(),
    };
    run.create_out(&out)?;

    run.input(&interactions_path)?;
    let interactions = read_interactions(&interactions_path)?;
    run.input(&events_path)?;
    let events = read_events_csv(&events_path).with_context(|| format!("reading {}", events_path.display()))?;
    let spec = PanelSpec {
        window,
        intervention_start: intervention,
        treatment_region: treatment,
        control_region: control,
    };
    let panel = build_panel(&interactions, &events, &spec).context("building the panel")?;
    write_panel_csv(run.out().file("panel.csv"), &panel).context("writing panel.csv")?;

    let did = diff_in_means(&panel).context("difference in means")?;
    run.out().write_json("did.json", &did)?;
    println!(
        "difference in means: {:.4} (treatment {:.3} -> {:.3}, control {:.3} -> {:.3})",
        did.estimate, did.treatment_before, did.treatment_after, did.control_before, did.control_after
    );

    let ols = fit_ols(&panel, &formula).context("OLS")?;
    let diag = diagnostics(&ols, &panel);
    for name in ["series.csv", "trends.csv", "qq.csv"] {
        run.out().file(name);
    }
    diag.write_csvs(run.out().root()).context("writing diagnostics")?;
    run.out().write_json("dispersion.json", &diag.dispersion)?;

    let negbin = fit_negbin(&panel, &formula);
    let mut fits = vec![&ols];
    if let Ok(nb) = &negbin {
        fits.push(nb);
    }
    let table = format_table(&fits);
    run.out().write_text("table.txt", &table)?;
    run.out().write_json(
        "fits.json",
        &json!({
            "formula": formula.names(),
            "ols": ols,
            "negbin": negbin.as_ref().ok(),
            "negbin_error": negbin.as_ref().err().map(|e| e.to_string()),
        }),
    )?;
    print!("{table}");
    if let Err(e) = negbin {
        return Err(anyhow!("negative binomial fit failed: {e}").into());
    }
    Ok(())
}
