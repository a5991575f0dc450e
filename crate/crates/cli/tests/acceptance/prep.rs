use std::collections::{HashMap, HashSet};

use chrono::{TimeZone, Utc};
use firewatch_core::textprep::{filter_corpus, normalize, ExclusionRuleSet, RawPost};
use firewatch_core::Execution;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FRAGMENTS: &[&str] = &[
    "tiro", "Tiroteio", "bala", "voando", "https://t.co/abc", "HTTP://x.y/z?q=1", "t.co/zz", "@joao", "@Maria_2",
    "@", "🔫", "🔫🔫", "😂", "👍🏽", "❤️", "🇧🇷", "\u{200D}", "\u{FE0F}", " ", "  ", "\t", "\n", "\u{00A0}", ".",
    ",", "!", "<URL>", "<USER>", ":pistol:", "são", "joão", "ç", "x", "1", "www", "http", "//", "co/",
];
const WORDS: &[&str] = &["tiro", "bala", "rua", "morro", "agora", "aqui", "perto", "muito", "🔫", "😱"];
const LINKS: &[&str] = &["https://t.co/a1", "http://x.com/p?q=2", "t.co/q", "HTTPS://Y.org/z"];
const USERS: &[&str] = &["@ana", "@Beto_9", "@c"];
const SPACES: &[&str] = &[" ", "  ", "\t", "\n ", "\u{00A0}"];

/// Leftovers the normalizer must never emit, spotted by plain string
/// scanning: a scheme anywhere, `t.co/` at a clear word start, or `@`
/// followed by a word character.
fn obvious_leak(text: &str) -> Option<&'static str> {
    let lower = text.to_lowercase();
    if lower.contains("http://") || lower.contains("https://") {
        return Some("scheme");
    }
    for (i, _) in lower.match_indices("t.co/") {
        let before = lower[..i].chars().next_back();
        if before.map_or(true, |c| c.is_whitespace() || c.is_ascii_punctuation()) {
            return Some("t.co");
        }
    }
    let chars: Vec<char> = text.chars().collect();
    if chars.windows(2).any(|w| w[0] == '@' && (w[1].is_alphanumeric() || w[1] == '_')) {
        return Some("mention");
    }
    None
}

/// 7,000 random fragment soups plus 1,000 groups of three posts that differ
/// only in links, mentions and spacing.
fn corpus(rng: &mut ChaCha8Rng) -> (Vec<RawPost>, Vec<[String; 3]>) {
    let at = Utc.with_ymd_and_hms(2022, 6, 1, 12, 0, 0).unwrap();
    let mut posts = Vec::with_capacity(10_000);
    for i in 0..7_000 {
        let n = rng.random_range(1..20);
        let text: String = (0..n).map(|_| *FRAGMENTS.choose(rng).unwrap()).collect();
        posts.push(RawPost::new(format!("f{i}"), text, at));
    }
    let mut groups = Vec::with_capacity(1_000);
    for g in 0..1_000 {
        let n = rng.random_range(1..6);
        let mut body: Vec<String> = (0..n).map(|_| WORDS.choose(rng).unwrap().to_string()).collect();
        body.push(format!("grupo{g}"));
        let ids = [0, 1, 2].map(|v| format!("g{g}v{v}"));
        for id in &ids {
            let sp = |rng: &mut ChaCha8Rng| *SPACES.choose(rng).unwrap();
            let mut text = String::from(sp(rng));
            for w in &body {
                text += w;
                text += sp(rng);
            }
            text += LINKS.choose(rng).unwrap();
            text += sp(rng);
            text += USERS.choose(rng).unwrap();
            posts.push(RawPost::new(id.clone(), text, at));
        }
        groups.push(ids);
    }
    (posts, groups)
}

pub fn check() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (posts, groups) = corpus(&mut rng);
    ensure!(posts.len() == 10_000, "fixture has {} posts", posts.len());

    let mut by_id = HashMap::with_capacity(posts.len());
    for p in &posts {
        let once = normalize(p);
        let twice = normalize(&RawPost::new(p.id.clone(), once.text.clone(), p.created_at));
        ensure!(once.text == twice.text, "not idempotent on {:?}: {:?} -> {:?}", p.text, once.text, twice.text);
        if let Some(kind) = obvious_leak(&once.text) {
            return Err(format!("{kind} leaked from {:?} into {:?}", p.text, once.text));
        }
        ensure!(once.text.trim() == once.text && !once.text.contains("  "), "untidy spacing in {:?}", once.text);
        by_id.insert(p.id.clone(), once.text);
    }

    let distinct: HashSet<&String> = by_id.values().collect();
    let (kept, stats) = filter_corpus(posts, &ExclusionRuleSet::default(), Execution::available());
    ensure!(kept.len() == distinct.len(), "kept {} posts for {} distinct normalized texts", kept.len(), distinct.len());
    ensure!(stats.duplicates == 10_000 - distinct.len(), "{} duplicates reported", stats.duplicates);
    let kept_texts: HashSet<&str> = kept.iter().map(|(_, m)| m.text.as_str()).collect();
    ensure!(kept_texts.len() == kept.len(), "two kept posts share a normalized text");
    let kept_ids: HashSet<&str> = kept.iter().map(|(p, _)| p.id.as_str()).collect();
    for ids in &groups {
        let survivors = ids.iter().filter(|id| kept_ids.contains(id.as_str())).count();
        ensure!(survivors == 1, "{survivors} of {ids:?} survived dedup");
    }
    Ok(format!(
        "10,000 messages, {} distinct after normalization, {} duplicates dropped, 1,000/1,000 planted groups collapsed",
        distinct.len(),
        stats.duplicates
    ))
}
