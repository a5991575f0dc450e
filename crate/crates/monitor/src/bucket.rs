use std::fmt;
use std::str::FromStr;

use firewatch_core::classify::Classifier;
use firewatch_core::textprep::{normalize, NormalizedMessage, RawPost};
use serde::{Deserialize, Serialize};

use crate::region::AliasTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tab {
    ReportInRegion,
    Negative,
    ReportNoGeo,
}

impl Tab {
    pub const ALL: [Tab; 3] = [Tab::ReportInRegion, Tab::Negative, Tab::ReportNoGeo];
}

/// Where a stored post lives: one of the three tabs, or quarantine when it
/// could not be scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bucket {
    ReportInRegion,
    Negative,
    ReportNoGeo,
    Quarantine,
}

impl Bucket {
    pub const ALL: [Bucket; 4] = [Bucket::ReportInRegion, Bucket::Negative, Bucket::ReportNoGeo, Bucket::Quarantine];

    pub fn as_str(self) -> &'static str {
        match self {
            Bucket::ReportInRegion => "report_in_region",
            Bucket::Negative => "negative",
            Bucket::ReportNoGeo => "report_no_geo",
            Bucket::Quarantine => "quarantine",
        }
    }
}

impl From<Tab> for Bucket {
    fn from(t: Tab) -> Self {
        match t {
            Tab::ReportInRegion => Bucket::ReportInRegion,
            Tab::Negative => Bucket::Negative,
            Tab::ReportNoGeo => Bucket::ReportNoGeo,
        }
    }
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Tab {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        Bucket::from(*self).fmt(f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown tab {0:?}; expected report_in_region, negative, report_no_geo or quarantine")]
pub struct UnknownTab(pub String);

impl FromStr for Bucket {
    type Err = UnknownTab;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Bucket::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| UnknownTab(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabAssignment {
    pub post_id: String,
    pub tab: Tab,
    pub score: f64,
    /// Set only when the post's location matched the configured region.
    pub matched_region: Option<String>,
}

/// Below the threshold is negative whatever the location; at or above it,
/// the location decides between the in-region and no-geo tabs.
pub fn tab_rule(score: f64, threshold: f64, in_region: bool) -> Tab {
    if score < threshold {
        Tab::Negative
    } else if in_region {
        Tab::ReportInRegion
    } else {
        Tab::ReportNoGeo
    }
}

/// Region from the profile location text, falling back to the geo-tag
/// place name.
pub fn locate<'a>(post: &RawPost, aliases: &'a AliasTable) -> Option<&'a str> {
    aliases.match_region(post.author_location_text.as_deref()).or_else(|| {
        if post.has_geo_tag {
            aliases.match_region(post.geo_place.as_deref())
        } else {
            None
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quarantined {
    pub post: RawPost,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Bucketed {
    pub assigned: Vec<(RawPost, TabAssignment)>,
    pub quarantined: Vec<Quarantined>,
    pub model_id: String,
}

impl Bucketed {
    pub fn len(&self) -> usize {
        self.assigned.len() + self.quarantined.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn check_score(score: f64) -> Result<f64, String> {
    if score.is_finite() && (0.0..=1.0).contains(&score) {
        Ok(score)
    } else {
        Err(format!("score {score} outside [0, 1]"))
    }
}

/// Scores a batch in one call; if the classifier rejects the batch, each
/// message is retried on its own and only the ones that still fail are
/// quarantined.
fn score_all(model: &dyn Classifier, msgs: &[NormalizedMessage]) -> Vec<Result<f64, String>> {
    if msgs.is_empty() {
        return Vec::new();
    }
    match model.score_batch(msgs) {
        Ok(scores) if scores.len() == msgs.len() => scores.into_iter().map(check_score).collect(),
        first => {
            let why = match first {
                Ok(s) => format!("expected {} scores, got {}", msgs.len(), s.len()),
                Err(e) => e.to_string(),
            };
            tracing::warn!(model = model.model_id(), error = %why, "batch scoring failed; retrying one by one");
            msgs.iter()
                .map(|m| match model.score_batch(std::slice::from_ref(m)) {
                    Ok(s) if s.len() == 1 => check_score(s[0]),
                    Ok(s) => Err(format!("expected 1 score, got {}", s.len())),
                    Err(e) => Err(e.to_string()),
                })
                .collect()
        }
    }
}

pub fn classify_and_bucket(
    batch: Vec<RawPost>,
    model: &dyn Classifier,
    threshold: f64,
    region: &str,
    aliases: &AliasTable,
) -> Bucketed {
    let mut out = Bucketed {
        model_id: model.model_id().to_string(),
        ..Bucketed::default()
    };
    let mut valid = Vec::with_capacity(batch.len());
    for post in batch {
        match post.validate() {
            Ok(()) => valid.push(post),
            Err(e) => out.quarantined.push(Quarantined {
                post,
                reason: e.to_string(),
            }),
        }
    }
    let msgs: Vec<NormalizedMessage> = valid.iter().map(normalize).collect();
    for (post, score) in valid.into_iter().zip(score_all(model, &msgs)) {
        match score {
            Ok(score) => {
                let matched = locate(&post, aliases).filter(|r| r.eq_ignore_ascii_case(region));
                let tab = tab_rule(score, threshold, matched.is_some());
                let assignment = TabAssignment {
                    post_id: post.id.clone(),
                    tab,
                    score,
                    matched_region: matched.map(str::to_string),
                };
                out.assigned.push((post, assignment));
            }
            Err(reason) => out.quarantined.push(Quarantined { post, reason }),
        }
    }
    out
}
