//! End-to-end acceptance checks, one line per criterion. Exits non-zero if
//! any check fails or runs over its time budget.
//!
//! `cargo test -p firewatch-cli --test acceptance`; pass a substring to run
//! only the matching checks.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

mod assembly;
mod auc;
mod impact;
mod monitor;
mod naive_bayes;
mod prep;
mod query;
mod reports;
mod self_training;

type Check = fn() -> Result<String, String>;

struct Criterion {
    name: &'static str,
    budget: Option<Duration>,
    check: Check,
}

const fn criterion(name: &'static str, budget_secs: Option<u64>, check: Check) -> Criterion {
    Criterion {
        name,
        budget: match budget_secs {
            Some(s) => Some(Duration::from_secs(s)),
            None => None,
        },
        check,
    }
}

const CRITERIA: [Criterion; 9] = [
    criterion("prep: idempotence, no leaks, dedup on 10k fuzzed messages", Some(1), prep::check),
    criterion("assembly: 24,353 + 73,059 = 97,412; holdout 1,909 + 4,815 = 6,724", None, assembly::check),
    criterion("naive bayes: brute-force posterior oracle, <=6 docs x <=8 terms", Some(10), naive_bayes::check),
    criterion("auc: pairwise estimator on 1,000 sets, label flip", None, auc::check),
    criterion("metrics: reports holdout arithmetic 1,211 / 89 / 61 / 28", None, reports::check),
    criterion("self-training: recall holds, audit of 80", None, self_training::check),
    criterion("monitor: 1,000-post replay, 10k tab pairs, status per cycle", Some(5), monitor::check),
    criterion("impact: DiD 9, OLS oracles, NB recovery, Poisson limit, Cox-Snell", Some(60), impact::check),
    criterion("query: verbatim round trip, unbalanced input rejected", None, query::check),
];

fn main() -> ExitCode {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let selected: Vec<&Criterion> = CRITERIA
        .iter()
        .filter(|c| filter.is_empty() || filter.iter().any(|f| c.name.contains(f.as_str())))
        .collect();
    // Checks report through their return value; keep panics to one line.
    std::panic::set_hook(Box::new(|_| {}));

    let mut failed = 0;
    for c in &selected {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let took = started.elapsed();
        let outcome = match (outcome, c.budget) {
            (Ok(_), Some(b)) if took > b => Err(format!("took {took:.2?}, budget {b:?}")),
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("PASS  {}  [{took:.2?}]  {detail}", c.name),
            Err(why) => {
                failed += 1;
                println!("FAIL  {}  [{took:.2?}]  {why}", c.name);
            }
        }
    }
    println!("\n{} passed, {failed} failed", selected.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
