//! Stand-in scoring runtime speaking the line protocol of the external
//! classifier: `{"id":N,"texts":[...]}` in, `{"id":N,"scores":[...]}` out.
//! Useful for wiring up `serve` or `eval` without a real model.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::TcpListener;

use clap::{Parser, ValueEnum};
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    /// The same score for every text.
    Constant,
    /// Token count over the truncation limit.
    Length,
    /// High for texts with a gunfire keyword, low otherwise.
    Keyword,
}

#[derive(Debug, Parser)]
#[command(name = "firewatch-stub-runtime", version)]
struct Args {
    #[arg(long, value_enum, default_value = "constant")]
    mode: Mode,
    /// Score returned in constant mode.
    #[arg(long, default_value_t = 0.5)]
    score: f64,
    /// Serve TCP connections on this address instead of stdin/stdout.
    #[arg(long)]
    listen: Option<String>,
}

const KEYWORDS: [&str; 6] = ["tiro", "tiros", "tiroteio", "baleado", "bala", "disparo"];

fn max_tokens() -> usize {
    std::env::var("FIREWATCH_MAX_TOKEN_LENGTH")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(128)
}

fn score(args: &Args, text: &str, limit: usize) -> f64 {
    let tokens: Vec<String> = text.split_whitespace().take(limit).map(str::to_lowercase).collect();
    match args.mode {
        Mode::Constant => args.score,
        Mode::Length => tokens.len() as f64 / limit as f64,
        Mode::Keyword => {
            let hit = tokens
                .iter()
                .any(|t| KEYWORDS.contains(&t.trim_matches(|c: char| !c.is_alphanumeric())));
            if hit {
                0.95
            } else {
                0.05
            }
        }
    }
}

fn serve(args: &Args, input: impl BufRead, output: impl Write) -> std::io::Result<()> {
    let limit = max_tokens();
    let mut out = BufWriter::new(output);
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match serde_json::from_str::<Value>(&line) {
            Ok(req) => {
                let scores: Vec<f64> = req["texts"]
                    .as_array()
                    .map(|ts| ts.iter().map(|t| score(args, t.as_str().unwrap_or(""), limit)).collect())
                    .unwrap_or_default();
                json!({ "id": req["id"], "scores": scores })
            }
            Err(e) => json!({ "error": e.to_string() }),
        };
        writeln!(out, "{reply}")?;
        out.flush()?;
    }
    Ok(())
}

fn main() -> std::io::Result<()> {
    let args = Args::parse();
    match &args.listen {
        None => serve(&args, std::io::stdin().lock(), std::io::stdout().lock()),
        Some(addr) => {
            let listener = TcpListener::bind(addr)?;
            println!("listening on {}", listener.local_addr()?);
            std::thread::scope(|s| {
                for conn in listener.incoming() {
                    let conn = conn?;
                    let args = &args;
                    s.spawn(move || {
                        let reader = BufReader::new(conn.try_clone()?);
                        serve(args, reader, conn)
                    });
                }
                Ok(())
            })
        }
    }
}
