//! Deterministic normalization and exclusion rules applied to every post
//! before training or inference.

mod emoji;

use std::collections::{BTreeSet, HashSet};
use std::sync::OnceLock;

use chrono::{DateTime, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};

pub use emoji::{emoji_to_text, is_emoji_like, EmojiTable, EmojiTableError};

pub const URL_TOKEN: &str = "<URL>";
pub const USER_TOKEN: &str = "<USER>";

/// An ingested social post, in the line-delimited corpus record shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawPost {
    pub id: String,
    pub text: String,
    pub created_at: DateTime<Utc>,
    pub author_handle: String,
    #[serde(default)]
    pub author_location_text: Option<String>,
    #[serde(default)]
    pub author_bio: Option<String>,
    #[serde(default)]
    pub has_geo_tag: bool,
    #[serde(default)]
    pub language_tag: Option<String>,
    #[serde(default)]
    pub is_reply: bool,
    /// Place name attached by the platform when the post is geo-tagged.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geo_place: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub avatar_url: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InvalidPost {
    #[error("post id is empty")]
    EmptyId,
    #[error("post {0} has empty text")]
    EmptyText(String),
}

impl RawPost {
    /// Minimal post, mostly for fixtures.
    pub fn new(id: impl Into<String>, text: impl Into<String>, created_at: DateTime<Utc>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            created_at,
            author_handle: String::new(),
            author_location_text: None,
            author_bio: None,
            has_geo_tag: false,
            language_tag: None,
            is_reply: false,
            geo_place: None,
            avatar_url: None,
        }
    }

    pub fn validate(&self) -> Result<(), InvalidPost> {
        if self.id.trim().is_empty() {
            return Err(InvalidPost::EmptyId);
        }
        if self.text.is_empty() {
            return Err(InvalidPost::EmptyText(self.id.clone()));
        }
        Ok(())
    }

    /// True when the post carries a platform geo-tag. Free-text profile
    /// locations do not count.
    pub fn has_location_metadata(&self) -> bool {
        self.has_geo_tag
    }
}

/// Cleaned text form of a [`RawPost`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedMessage {
    pub post_id: String,
    pub text: String,
    pub created_at: DateTime<Utc>,
    pub char_count: usize,
    pub emoji_count: usize,
    pub contained_url: bool,
    pub contained_mention: bool,
}

impl NormalizedMessage {
    /// Wraps already-clean text, recomputing the counters.
    pub fn from_text(post_id: impl Into<String>, text: impl Into<String>, created_at: DateTime<Utc>) -> Self {
        let text = text.into();
        Self {
            post_id: post_id.into(),
            char_count: text.chars().count(),
            text,
            created_at,
            emoji_count: 0,
            contained_url: false,
            contained_mention: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionRuleSet {
    /// Lowercase handles without the leading `@`.
    pub partner_handles: BTreeSet<String>,
    pub drop_replies: bool,
    pub drop_duplicates: bool,
}

impl Default for ExclusionRuleSet {
    fn default() -> Self {
        Self {
            partner_handles: BTreeSet::new(),
            drop_replies: true,
            drop_duplicates: true,
        }
    }
}

impl ExclusionRuleSet {
    pub fn with_partners<I, S>(handles: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            partner_handles: handles
                .into_iter()
                .map(|h| h.as_ref().trim_start_matches('@').to_lowercase())
                .collect(),
            ..Self::default()
        }
    }
}

fn url_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)https?://\S*|\bt\.co/\S*").unwrap())
}

fn mention_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"@\w+").unwrap())
}

/// Collapses every whitespace run to a single ASCII space and trims the ends.
pub fn collapse_whitespace(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// True if `text` still contains something the normalizer should have replaced.
pub fn has_placeholder_leak(text: &str) -> bool {
    url_regex().is_match(text) || mention_regex().is_match(text)
}

/// Normalizes the text of a post. Casing is preserved.
pub fn normalize(raw: &RawPost) -> NormalizedMessage {
    normalize_text(&raw.id, &raw.text, raw.created_at)
}

pub fn normalize_text(post_id: &str, text: &str, created_at: DateTime<Utc>) -> NormalizedMessage {
    // Emoji go first: dropping a selector or joiner can expose a word
    // boundary in front of a bare link that the link pattern needs.
    let (step, emoji_count) = EmojiTable::bundled().replace(text);
    let contained_url = url_regex().is_match(&step);
    let step = url_regex().replace_all(&step, format!(" {URL_TOKEN} ").as_str());
    let contained_mention = mention_regex().is_match(&step);
    let step = mention_regex().replace_all(&step, format!(" {USER_TOKEN} ").as_str());
    let text = collapse_whitespace(&step);
    NormalizedMessage {
        post_id: post_id.to_string(),
        char_count: text.chars().count(),
        text,
        created_at,
        emoji_count,
        contained_url,
        contained_mention,
    }
}

/// Case-insensitive check for `@handle` mentions of any partner account.
pub fn mentions_partner(text: &str, partners: &BTreeSet<String>) -> bool {
    if partners.is_empty() {
        return false;
    }
    mention_regex()
        .find_iter(text)
        .any(|m| partners.contains(&m.as_str()[1..].to_lowercase()))
}

/// Applies the exclusion rules. `seen_texts` holds normalized texts already
/// admitted by the caller.
pub fn should_exclude(raw: &RawPost, rules: &ExclusionRuleSet, seen_texts: &HashSet<String>) -> bool {
    if mentions_partner(&raw.text, &rules.partner_handles) {
        return true;
    }
    if rules.drop_replies && raw.is_reply {
        return true;
    }
    rules.drop_duplicates && seen_texts.contains(&normalize(raw).text)
}

/// Outcome of filtering a corpus with [`filter_corpus`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterStats {
    pub input: usize,
    pub kept: usize,
    pub partner_mentions: usize,
    pub replies: usize,
    pub duplicates: usize,
}

/// Runs exclusions over a corpus in order, owning the dedup set, and
/// returns the surviving posts alongside their normalized forms.
pub fn filter_corpus(
    posts: Vec<RawPost>,
    rules: &ExclusionRuleSet,
    exec: crate::Execution,
) -> (Vec<(RawPost, NormalizedMessage)>, FilterStats) {
    let normalized = exec.map(&posts, normalize);
    let mut stats = FilterStats {
        input: posts.len(),
        ..FilterStats::default()
    };
    let mut seen = HashSet::new();
    let mut kept = Vec::with_capacity(posts.len());
    for (raw, msg) in posts.into_iter().zip(normalized) {
        if mentions_partner(&raw.text, &rules.partner_handles) {
            stats.partner_mentions += 1;
            continue;
        }
        if rules.drop_replies && raw.is_reply {
            stats.replies += 1;
            continue;
        }
        if rules.drop_duplicates && !seen.insert(msg.text.clone()) {
            stats.duplicates += 1;
            continue;
        }
        kept.push((raw, msg));
    }
    stats.kept = kept.len();
    (kept, stats)
}
