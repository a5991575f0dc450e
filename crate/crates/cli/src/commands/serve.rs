use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use clap::Args;
use firewatch_core::classify::{Classifier, ModelFile};
use firewatch_monitor::api::router;
use firewatch_monitor::{spawn_poller, Monitor, MonitorConfig, SourceDescriptor};
use serde::{Deserialize, Serialize};

use crate::{need, usage, Failure, Run};

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeArgs {
    /// Monitor settings (TOML). `FIREWATCH_*` variables and the flags below
    /// override it.
    #[arg(long, value_name = "FILE")]
    pub monitor_config: Option<PathBuf>,
    /// Model file used to score incoming posts.
    #[arg(long, value_name = "FILE", env = "FIREWATCH_MODEL")]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub bind: Option<SocketAddr>,
    #[arg(long)]
    pub region: Option<String>,
    /// Keyword query, e.g. `(bala voando) OR tiro`.
    #[arg(long)]
    pub query: Option<String>,
    /// Replay a corpus file instead of the configured source.
    #[arg(long, value_name = "FILE")]
    pub replay: Option<PathBuf>,
    #[arg(long)]
    pub poll_interval_secs: Option<u64>,
    /// Journal file. Defaults to `journal.jsonl` under `--out` when that is given.
    #[arg(long, value_name = "FILE")]
    pub store: Option<PathBuf>,
    /// Directory for the journal and the run manifest.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

fn monitor_config(args: &ServeArgs) -> Result<MonitorConfig, Failure> {
    let mut cfg = match &args.monitor_config {
        Some(path) => MonitorConfig::from_file(path).map_err(|e| usage(e.to_string()))?,
        None => MonitorConfig::default(),
    };
    cfg.apply_env(std::env::vars()).map_err(|e| usage(e.to_string()))?;
    if let Some(r) = &args.region {
        cfg.region = r.clone();
    }
    if let Some(q) = &args.query {
        cfg.keyword_query = q.clone();
    }
    if let Some(path) = &args.replay {
        cfg.source = Some(SourceDescriptor::Replay {
            path: path.clone(),
            batch_size: None,
        });
    }
    if let Some(s) = args.poll_interval_secs {
        cfg.poll_interval_secs = s;
    }
    if let Some(b) = args.bind {
        cfg.bind = b;
    }
    match (&args.store, &args.out) {
        (Some(p), _) => cfg.store_path = p.clone(),
        (None, Some(out)) if std::env::var_os("FIREWATCH_STORE_PATH").is_none() => {
            cfg.store_path = out.join("journal.jsonl")
        }
        _ => {}
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

pub fn run(args: ServeArgs, run: &mut Run) -> Result<(), Failure> {
    let model_path = need(args.model.clone(), "model")?;
    let cfg = monitor_config(&args)?;
    if let Some(out) = &args.out {
        run.create_out(out)?;
        if cfg.store_path.starts_with(out) {
            run.out().file("journal.jsonl");
        }
    }
    run.input(&model_path)?;
    if let Some(p) = &args.monitor_config {
        run.input(p)?;
    }

    let classifier: Arc<dyn Classifier> = Arc::from(
        ModelFile::load(&model_path)
            .and_then(ModelFile::into_classifier)
            .context("loading the model")?,
    );
    let bind = cfg.bind;
    let monitor = Arc::new(Monitor::from_config(cfg, classifier).context("starting the monitor")?);

    let rt = tokio::runtime::Runtime::new().context("starting the async runtime")?;
    let poller = spawn_poller(monitor.clone());
    let served = rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(bind).await.with_context(|| format!("binding {bind}"))?;
        let addr = listener.local_addr()?;
        // Scripts wait for this line before talking to the API.
        println!("listening on http://{addr}");
        axum::serve(listener, router(monitor))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .context("serving")
    });
    poller.stop();
    served?;
    Ok(())
}
