//! Trace preprocessing: generic-hashtag filtering, corpus extraction for
//! embedding training, canonicalization through a hashtag clustering, and
//! per-user popular-interest extraction via TF-IDF.

use std::collections::{BTreeMap, BTreeSet};

use crate::clustering::HashtagClustering;
use crate::error::{AuditError, Result};
use crate::trace::{Dataset, UserTimeline};

/// Default global stoplist of engagement-bait hashtags.
pub const DEFAULT_STOPLIST: [&str; 3] = ["#foryoupage", "#fyp", "#viral"];

/// Removes (a) any hashtag in `global_stoplist` from every event and
/// (b) per user, any hashtag appearing in at least `per_user_fraction` of
/// that user's events. Events may end with empty hashtag sets.
pub fn filter_generic_hashtags(
    dataset: &Dataset,
    global_stoplist: &BTreeSet<String>,
    per_user_fraction: f64,
) -> Result<Dataset> {
    if !(per_user_fraction > 0.0 && per_user_fraction <= 1.0) {
        return Err(AuditError::Config(format!(
            "per_user_fraction must lie in (0, 1], got {per_user_fraction}"
        )));
    }
    let mut out = Dataset::default();
    for (user, timeline) in &dataset.timelines {
        let n = timeline.len();
        let mut event_counts: BTreeMap<&str, usize> = BTreeMap::new();
        for e in &timeline.events {
            for tag in &e.hashtags {
                *event_counts.entry(tag.as_str()).or_default() += 1;
            }
        }
        let too_common: BTreeSet<&str> = event_counts
            .iter()
            .filter(|(_, &c)| n > 0 && c as f64 / n as f64 >= per_user_fraction)
            .map(|(t, _)| *t)
            .collect();
        let mut events = timeline.events.clone();
        for e in &mut events {
            e.hashtags.retain(|t| !global_stoplist.contains(t) && !too_common.contains(t.as_str()));
        }
        let mut filtered = UserTimeline::new(user.clone(), events);
        filtered.declared_interests.clone_from(&timeline.declared_interests);
        out.timelines.insert(user.clone(), filtered);
    }
    Ok(out)
}

/// Per-event hashtag "sentences" for embedding training, in timeline order.
pub fn hashtag_corpus(dataset: &Dataset) -> Vec<Vec<String>> {
    dataset
        .timelines
        .values()
        .flat_map(|t| {
            t.events
                .iter()
                .filter(|e| !e.hashtags.is_empty())
                .map(|e| e.hashtags.iter().cloned().collect())
        })
        .collect()
}

/// All hashtags in the dataset, ordered by descending corpus frequency
/// (ties by tag, ascending).
pub fn hashtags_by_frequency(dataset: &Dataset) -> Vec<(String, usize)> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for t in dataset.timelines.values() {
        for e in &t.events {
            for tag in &e.hashtags {
                *counts.entry(tag.clone()).or_default() += 1;
            }
        }
    }
    let mut out: Vec<(String, usize)> = counts.into_iter().collect();
    out.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}

/// Replaces every hashtag with its cluster representative. Event counts and
/// all non-hashtag fields are preserved; unknown hashtags map to themselves.
pub fn canonicalize(dataset: &Dataset, clustering: &HashtagClustering) -> Dataset {
    let mut out = Dataset::default();
    for (user, timeline) in &dataset.timelines {
        let mut events = timeline.events.clone();
        for e in &mut events {
            e.hashtags = e.hashtags.iter().map(|t| clustering.canonical(t).to_string()).collect();
        }
        let mut mapped = UserTimeline::new(user.clone(), events);
        mapped.declared_interests.clone_from(&timeline.declared_interests);
        out.timelines.insert(user.clone(), mapped);
    }
    out
}

/// Number of users whose timelines contain each tag (document = user).
pub fn document_frequencies(dataset: &Dataset) -> BTreeMap<String, usize> {
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for t in dataset.timelines.values() {
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        for e in &t.events {
            for tag in &e.hashtags {
                seen.insert(tag);
            }
        }
        for tag in seen {
            *df.entry(tag.to_string()).or_default() += 1;
        }
    }
    df
}

/// The `k` hashtags with the highest TF-IDF for this user.
///
/// tf = tag occurrences in the user's events / total tag occurrences for
/// the user; idf = ln(m / (1 + df)) + 1. Ties break by raw count then tag.
pub fn top_interests_tfidf(
    timeline: &UserTimeline,
    k: usize,
    doc_freq: &BTreeMap<String, usize>,
    m: usize,
) -> Vec<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    let mut total = 0usize;
    for e in &timeline.events {
        for tag in &e.hashtags {
            *counts.entry(tag.as_str()).or_default() += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Vec::new();
    }
    let mut scored: Vec<(&str, f64, usize)> = counts
        .into_iter()
        .map(|(tag, count)| {
            let tf = count as f64 / total as f64;
            let df = doc_freq.get(tag).copied().unwrap_or(0);
            let idf = (m as f64 / (1.0 + df as f64)).ln() + 1.0;
            (tag, tf * idf, count)
        })
        .collect();
    scored.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| b.2.cmp(&a.2))
            .then_with(|| a.0.cmp(b.0))
    });
    scored.into_iter().take(k).map(|(tag, _, _)| tag.to_string()).collect()
}

/// Fills `popular_interests` (I_P) for every timeline with its top-`x`
/// TF-IDF hashtags, using user-level document frequencies.
pub fn assign_interests(dataset: &Dataset, x: usize) -> Dataset {
    let df = document_frequencies(dataset);
    let m = dataset.m();
    let mut out = dataset.clone();
    for timeline in out.timelines.values_mut() {
        timeline.popular_interests =
            top_interests_tfidf(timeline, x, &df, m).into_iter().collect();
    }
    out
}
