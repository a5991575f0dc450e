use std::collections::HashMap;
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use chrono::{Duration, TimeZone, Utc};
use firewatch_core::classify::{ClassifyError, Classifier};
use firewatch_core::corpus::write_jsonl;
use firewatch_core::textprep::{NormalizedMessage, RawPost};
use firewatch_monitor::api::router;
use firewatch_monitor::{
    classify_and_bucket, AliasTable, Bucket, Monitor, MonitorConfig, RegionAlias, SourceDescriptor, Store, Tab,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use tower::ServiceExt;

const QUERY: &str = "(bala voando) OR tiro OR tiroteio OR baleado";
const LOCATIONS: [Option<&str>; 6] = [
    Some("Rio de Janeiro, Brasil"),
    Some("Niterói"),
    Some("São Paulo"),
    Some("no mundo"),
    Some(""),
    None,
];

struct Table(HashMap<String, f64>);

impl Classifier for Table {
    fn model_id(&self) -> &str {
        "table"
    }
    fn threshold(&self) -> f64 {
        0.5
    }
    fn score_batch(&self, batch: &[NormalizedMessage]) -> Result<Vec<f64>, ClassifyError> {
        Ok(batch.iter().map(|m| self.0.get(&m.post_id).copied().unwrap_or(f64::NAN)).collect())
    }
}

fn aliases() -> Vec<RegionAlias> {
    vec![
        RegionAlias::new("rio de janeiro", "RJ"),
        RegionAlias::new("niteroi", "RJ"),
        RegionAlias::new("sao paulo", "SP"),
    ]
}

fn expected_tab(score: f64, threshold: f64, location: Option<&str>) -> Tab {
    let in_region = matches!(location, Some("Rio de Janeiro, Brasil") | Some("Niterói"));
    if score < threshold {
        Tab::Negative
    } else if in_region {
        Tab::ReportInRegion
    } else {
        Tab::ReportNoGeo
    }
}

async fn get(app: &axum::Router, uri: &str) -> Result<Value, String> {
    let req = Request::builder().uri(uri).body(Body::empty()).map_err(|e| e.to_string())?;
    let resp = app.clone().oneshot(req).await.map_err(|e| e.to_string())?;
    if resp.status() != StatusCode::OK {
        return Err(format!("GET {uri}: {}", resp.status()));
    }
    let bytes = to_bytes(resp.into_body(), 1 << 24).await.map_err(|e| e.to_string())?;
    serde_json::from_slice(&bytes).map_err(|e| e.to_string())
}

fn truth_table() -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(10_000);
    let t0 = Utc.with_ymd_and_hms(2023, 3, 1, 0, 0, 0).unwrap();
    let table = AliasTable::new(aliases());
    let mut checked = 0;
    for threshold in [0.5, 0.3, 0.9, 0.72] {
        let mut posts = Vec::new();
        let mut scores = HashMap::new();
        let mut locs = Vec::new();
        for i in 0..2_500 {
            // Put a share of scores right on the threshold.
            let score = if i % 50 == 0 { threshold } else { rng.random::<f64>() };
            let loc = LOCATIONS[rng.random_range(0..LOCATIONS.len())];
            let mut p = RawPost::new(format!("p{i}"), "tiro", t0);
            p.author_location_text = loc.map(str::to_string);
            scores.insert(p.id.clone(), score);
            posts.push(p);
            locs.push((score, loc));
        }
        let out = classify_and_bucket(posts, &Table(scores), threshold, "RJ", &table);
        ensure!(out.quarantined.is_empty(), "{} in-range scores quarantined", out.quarantined.len());
        ensure!(out.assigned.len() == locs.len(), "{} of {} assigned", out.assigned.len(), locs.len());
        for ((post, a), &(score, loc)) in out.assigned.iter().zip(&locs) {
            let want = expected_tab(score, threshold, loc);
            ensure!(a.tab == want, "{}: score {score} at {loc:?} went to {:?}, want {want:?}", post.id, a.tab);
            checked += 1;
        }
    }
    Ok(checked)
}

pub fn check() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let feed = dir.path().join("feed.jsonl");
    let mut rng = ChaCha8Rng::seed_from_u64(1_000);
    let t0 = Utc.with_ymd_and_hms(2023, 3, 1, 0, 0, 0).unwrap();
    let texts = ["ouvi tiro agora", "tiroteio no morro", "moleque baleado", "bala voando aqui"];
    let mut posts = Vec::new();
    let mut scores = HashMap::new();
    for i in 0..1_000 {
        let id = format!("m{i:04}");
        let mut p = RawPost::new(&id, texts[i % texts.len()], t0 + Duration::minutes((i / 3 * 3) as i64));
        p.author_handle = format!("user{i}");
        p.author_location_text = LOCATIONS[rng.random_range(0..LOCATIONS.len())].map(str::to_string);
        let score = match i % 97 {
            0 => f64::NAN,
            1 => 1.5,
            _ => rng.random::<f64>(),
        };
        scores.insert(id, score);
        posts.push(p);
    }
    write_jsonl(&feed, &posts).map_err(|e| e.to_string())?;

    let mut cfg = MonitorConfig::new(
        "RJ",
        QUERY,
        SourceDescriptor::Replay {
            path: feed,
            batch_size: Some(90),
        },
    );
    cfg.aliases = aliases();
    cfg.store_path = dir.path().join("journal.jsonl");
    let tick = Arc::new(AtomicI64::new(0));
    let clock = t0 + Duration::days(90);
    let monitor = Monitor::new(
        cfg.clone(),
        Arc::new(Table(scores)),
        firewatch_monitor::source::build_source(cfg.source.as_ref().unwrap()),
        Store::open(&cfg.store_path).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?
    .with_clock(Arc::new(move || clock + Duration::seconds(tick.fetch_add(1, Ordering::SeqCst))));
    let monitor = Arc::new(monitor);
    let app = router(monitor.clone());
    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().map_err(|e| e.to_string())?;

    let mut last: Option<String> = None;
    let mut cycles = 0;
    loop {
        let report = monitor.run_cycle().map_err(|e| e.to_string())?;
        cycles += 1;
        let status = rt.block_on(get(&app, "/status"))?;
        let now = status["last_success_at"]
            .as_str()
            .ok_or(format!("cycle {cycles}: last_success_at is {}", status["last_success_at"]))?
            .to_string();
        let moved = match &last {
            None => true,
            Some(prev) => chrono::DateTime::parse_from_rfc3339(&now).map_err(|e| e.to_string())?
                > chrono::DateTime::parse_from_rfc3339(prev).map_err(|e| e.to_string())?,
        };
        ensure!(moved, "cycle {cycles}: last_success_at stayed at {now}");
        last = Some(now);
        if report.fetched_matching == 0 {
            break;
        }
    }

    // Count every tab through the API, page by page.
    let mut per_tab = Vec::new();
    for bucket in Bucket::ALL {
        let mut cursor: Option<String> = None;
        let mut rows = 0;
        let mut total;
        loop {
            let uri = match &cursor {
                Some(c) => format!("/tabs/{}?limit=200&cursor={c}", bucket.as_str()),
                None => format!("/tabs/{}?limit=200", bucket.as_str()),
            };
            let page = rt.block_on(get(&app, &uri))?;
            rows += page["rows"].as_array().map(Vec::len).unwrap_or(0);
            total = page["total"].as_u64().unwrap_or(0) as usize;
            match page["next_cursor"].as_str() {
                Some(c) => cursor = Some(c.to_string()),
                None => break,
            }
        }
        ensure!(rows == total, "{}: paged {rows} rows but total says {total}", bucket.as_str());
        per_tab.push((bucket.as_str(), rows));
    }
    let bucketed: usize = per_tab.iter().map(|t| t.1).sum();
    ensure!(bucketed == 1_000, "tabs hold {bucketed} of 1000: {per_tab:?}");
    let quarantined = per_tab.iter().find(|t| t.0 == Bucket::Quarantine.as_str()).map(|t| t.1).unwrap_or(0);
    ensure!(quarantined == 22, "{quarantined} quarantined, fixture has 22 out-of-range scores");

    let pairs = truth_table()?;
    Ok(format!("{cycles} cycles, status advanced each time; tabs {per_tab:?}; {pairs} truth-table pairs agree"))
}
