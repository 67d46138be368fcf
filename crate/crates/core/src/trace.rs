//! Canonical data model for recommendation timelines.
//!
//! A trace file is line-delimited: one JSON record per line with the
//! `RecommendationEvent` field names in snake_case and timestamps as integer
//! epoch-seconds. Lines starting with `#` are headers/comments and skipped.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{AuditError, Result};

/// One recommended item viewed by one user, with engagement signals.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RecommendationEvent {
    pub user_id: String,
    pub video_id: String,
    pub creator_id: String,
    #[serde(default)]
    pub hashtags: BTreeSet<String>,
    pub view_ts: i64,
    #[serde(default)]
    pub video_duration_s: f64,
    #[serde(default)]
    pub watch_duration_s: f64,
    #[serde(default)]
    pub liked: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub liked_ts: Option<i64>,
    #[serde(default)]
    pub followed_creator: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub followed_ts: Option<i64>,
    #[serde(default)]
    pub shared: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shared_ts: Option<i64>,
    #[serde(default)]
    pub favorited: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub favorited_ts: Option<i64>,
}

/// Lowercase + Unicode NFC. Applied to every hashtag on ingest so that
/// set-intersection tests downstream compare canonical strings.
pub fn canonical_tag(tag: &str) -> String {
    tag.trim().to_lowercase().nfc().collect()
}

impl RecommendationEvent {
    /// Re-canonicalizes the hashtag set (lowercase + NFC, duplicates collapse).
    fn canonicalize_tags(&mut self) {
        self.hashtags = self
            .hashtags
            .iter()
            .map(|t| canonical_tag(t))
            .filter(|t| !t.is_empty())
            .collect();
    }

    /// `watch_duration_s / video_duration_s`, uncapped: values above 1 mean
    /// the video looped. Watched-to-end is `ratio >= 1.0`.
    pub fn watch_percentage(&self) -> Result<f64> {
        if self.video_duration_s <= 0.0 {
            return Err(AuditError::UndefinedDuration { video: self.video_id.clone() });
        }
        Ok(self.watch_duration_s / self.video_duration_s)
    }

    pub fn watched_to_end(&self) -> bool {
        self.video_duration_s > 0.0 && self.watch_duration_s / self.video_duration_s >= 1.0
    }
}

/// Chronologically ordered events for one user plus derived interest sets.
///
/// Events are sorted ascending by `view_ts` (ties broken by `video_id`);
/// recommendation index `i` is 1-based after sorting.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct UserTimeline {
    pub user_id: String,
    pub events: Vec<RecommendationEvent>,
    /// Creators this user follows (derived from `followed_creator` events).
    pub follow_set: BTreeSet<String>,
    /// Inferred interests I_P (top-X hashtags by TF-IDF); empty until assigned.
    pub popular_interests: BTreeSet<String>,
    /// Declared interests I_D; empty unless supplied out of band.
    pub declared_interests: BTreeSet<String>,
}

impl UserTimeline {
    pub fn new(user_id: String, mut events: Vec<RecommendationEvent>) -> Self {
        events.sort_by(|a, b| a.view_ts.cmp(&b.view_ts).then_with(|| a.video_id.cmp(&b.video_id)));
        let follow_set = events
            .iter()
            .filter(|e| e.followed_creator)
            .map(|e| e.creator_id.clone())
            .collect();
        UserTimeline {
            user_id,
            events,
            follow_set,
            popular_interests: BTreeSet::new(),
            declared_interests: BTreeSet::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// First `n` events by view_ts; indices 1..n. Interest sets carry over
    /// and should be recomputed by the caller when the prefix changed.
    pub fn take_prefix(&self, n: usize) -> Result<UserTimeline> {
        if n == 0 {
            return Err(AuditError::NonPositivePrefix);
        }
        if self.events.len() < n {
            return Err(AuditError::InsufficientLength {
                user: self.user_id.clone(),
                have: self.events.len(),
                need: n,
            });
        }
        let mut out = self.clone();
        out.events.truncate(n);
        out.follow_set = out
            .events
            .iter()
            .filter(|e| e.followed_creator)
            .map(|e| e.creator_id.clone())
            .collect();
        Ok(out)
    }
}

/// A collection of user timelines keyed by user id. `m` is the user count.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub timelines: BTreeMap<String, UserTimeline>,
}

impl Dataset {
    pub fn m(&self) -> usize {
        self.timelines.len()
    }

    pub fn from_timelines(timelines: impl IntoIterator<Item = UserTimeline>) -> Self {
        Dataset {
            timelines: timelines.into_iter().map(|t| (t.user_id.clone(), t)).collect(),
        }
    }

    /// Common length of all timelines, or an error when they differ.
    pub fn uniform_len(&self) -> Result<usize> {
        let mut len = None;
        for t in self.timelines.values() {
            match len {
                None => len = Some(t.len()),
                Some(l) if l != t.len() => {
                    return Err(AuditError::MixedLengths { a: l, b: t.len() })
                }
                _ => {}
            }
        }
        Ok(len.unwrap_or(0))
    }

    /// Truncates every timeline to its first `n` events; users with fewer
    /// than `n` events are dropped. Returns the dataset and the dropped ids.
    pub fn take_prefix(&self, n: usize) -> Result<(Dataset, Vec<String>)> {
        if n == 0 {
            return Err(AuditError::NonPositivePrefix);
        }
        let mut out = Dataset::default();
        let mut dropped = Vec::new();
        for (id, t) in &self.timelines {
            if t.len() < n {
                dropped.push(id.clone());
            } else {
                out.timelines.insert(id.clone(), t.take_prefix(n)?);
            }
        }
        Ok((out, dropped))
    }
}

/// Outcome of a parse pass: the dataset plus skip/dedup accounting.
#[derive(Debug, Clone, Default)]
pub struct ParseReport {
    pub lines_total: usize,
    pub lines_skipped: usize,
    pub duplicates_dropped: usize,
}

/// Parses line-delimited trace records into per-user sorted timelines.
///
/// Unknown JSON fields are ignored; missing engagement fields default to
/// false/absent. In strict mode a malformed line is fatal; otherwise it is
/// skipped and counted. Duplicate `(user_id, video_id, view_ts)` triples are
/// dropped with a count.
pub fn parse_traces(reader: impl BufRead, strict: bool) -> Result<(Dataset, ParseReport)> {
    let mut report = ParseReport::default();
    let mut by_user: BTreeMap<String, Vec<RecommendationEvent>> = BTreeMap::new();
    let mut seen: BTreeSet<(String, String, i64)> = BTreeSet::new();

    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| AuditError::io("reading trace stream", e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        report.lines_total += 1;
        let mut event: RecommendationEvent = match serde_json::from_str(trimmed) {
            Ok(ev) => ev,
            Err(e) => {
                if strict {
                    return Err(AuditError::MalformedRecord {
                        line: lineno + 1,
                        reason: e.to_string(),
                    });
                }
                report.lines_skipped += 1;
                continue;
            }
        };
        if let Some(reason) = validate_event(&event) {
            if strict {
                return Err(AuditError::MalformedRecord { line: lineno + 1, reason });
            }
            report.lines_skipped += 1;
            continue;
        }
        event.canonicalize_tags();
        let key = (event.user_id.clone(), event.video_id.clone(), event.view_ts);
        if !seen.insert(key) {
            report.duplicates_dropped += 1;
            continue;
        }
        by_user.entry(event.user_id.clone()).or_default().push(event);
    }

    let dataset = Dataset::from_timelines(
        by_user.into_iter().map(|(user, events)| UserTimeline::new(user, events)),
    );
    Ok((dataset, report))
}

fn validate_event(e: &RecommendationEvent) -> Option<String> {
    if e.user_id.is_empty() || e.video_id.is_empty() {
        return Some("empty user_id or video_id".into());
    }
    if e.watch_duration_s < 0.0 || e.video_duration_s < 0.0 {
        return Some("negative duration".into());
    }
    for (name, flag, ts) in [
        ("liked_ts", e.liked, e.liked_ts),
        ("followed_ts", e.followed_creator, e.followed_ts),
        ("shared_ts", e.shared, e.shared_ts),
        ("favorited_ts", e.favorited, e.favorited_ts),
    ] {
        if flag {
            if let Some(t) = ts {
                if t < 0 {
                    return Some(format!("{name} is negative"));
                }
            }
        }
    }
    None
}

/// Emits a dataset in the same line-delimited format `parse_traces` reads.
/// Events are written per user (sorted ids) in timeline order, so a
/// parse -> emit -> parse round trip is the identity.
pub fn emit_traces(dataset: &Dataset, mut writer: impl Write) -> Result<()> {
    for timeline in dataset.timelines.values() {
        for event in &timeline.events {
            let line = serde_json::to_string(event)
                .map_err(|e| AuditError::Format(format!("serializing event: {e}")))?;
            writeln!(writer, "{line}").map_err(|e| AuditError::io("writing traces", e))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn line(user: &str, video: &str, ts: i64) -> String {
        format!(
            r##"{{"user_id":"{user}","video_id":"{video}","creator_id":"c1","hashtags":["#a"],"view_ts":{ts},"video_duration_s":10.0,"watch_duration_s":5.0}}"##
        )
    }

    #[test]
    fn single_record_identity() {
        let input = r##"{"user_id":"u1","video_id":"v1","creator_id":"c9","hashtags":["#Cats"],"view_ts":100,"video_duration_s":12.0,"watch_duration_s":12.0,"liked":true,"liked_ts":101}"##;
        let (ds, report) = parse_traces(Cursor::new(input), true).unwrap();
        assert_eq!(ds.m(), 1);
        let t = &ds.timelines["u1"];
        assert_eq!(t.len(), 1);
        assert!(t.events[0].liked);
        assert_eq!(t.events[0].liked_ts, Some(101));
        // tags canonicalized to lowercase
        assert!(t.events[0].hashtags.contains("#cats"));
        assert_eq!(report.lines_skipped, 0);
    }

    #[test]
    fn missing_hashtags_defaults_empty() {
        let input = r#"{"user_id":"u1","video_id":"v1","creator_id":"c1","view_ts":5,"video_duration_s":10.0,"watch_duration_s":1.0}"#;
        let (ds, _) = parse_traces(Cursor::new(input), true).unwrap();
        assert!(ds.timelines["u1"].events[0].hashtags.is_empty());
    }

    #[test]
    fn shuffled_timestamps_sorted_and_indexed() {
        // 3 users x 5 shuffled-timestamp records -> each timeline ascending.
        let mut input = String::new();
        for user in ["u1", "u2", "u3"] {
            for (k, ts) in [40, 10, 50, 30, 20].iter().enumerate() {
                input.push_str(&line(user, &format!("v{k}"), *ts));
                input.push('\n');
            }
        }
        let (ds, _) = parse_traces(Cursor::new(input), true).unwrap();
        for t in ds.timelines.values() {
            let ts: Vec<i64> = t.events.iter().map(|e| e.view_ts).collect();
            let mut sorted = ts.clone();
            sorted.sort();
            assert_eq!(ts, sorted);
            assert_eq!(t.len(), 5);
        }
    }

    #[test]
    fn malformed_line_skipped_or_fatal() {
        let input = format!("{}\nnot json\n", line("u1", "v1", 1));
        let (ds, report) = parse_traces(Cursor::new(input.as_str()), false).unwrap();
        assert_eq!(ds.m(), 1);
        assert_eq!(report.lines_skipped, 1);
        let err = parse_traces(Cursor::new(input.as_str()), true).unwrap_err();
        assert!(matches!(err, AuditError::MalformedRecord { line: 2, .. }));
    }

    #[test]
    fn duplicates_deduplicated() {
        let input = format!("{}\n{}\n", line("u1", "v1", 1), line("u1", "v1", 1));
        let (ds, report) = parse_traces(Cursor::new(input), false).unwrap();
        assert_eq!(ds.timelines["u1"].len(), 1);
        assert_eq!(report.duplicates_dropped, 1);
    }

    #[test]
    fn take_prefix_smallest_timestamps() {
        let events: Vec<_> = [40, 10, 50, 30, 20]
            .iter()
            .enumerate()
            .map(|(k, ts)| {
                serde_json::from_str::<RecommendationEvent>(&line("u1", &format!("v{k}"), *ts))
                    .unwrap()
            })
            .collect();
        let t = UserTimeline::new("u1".into(), events);
        let p = t.take_prefix(3).unwrap();
        let ts: Vec<i64> = p.events.iter().map(|e| e.view_ts).collect();
        assert_eq!(ts, vec![10, 20, 30]);
        assert!(t.take_prefix(0).is_err());
        assert!(matches!(
            t.take_prefix(9).unwrap_err(),
            AuditError::InsufficientLength { need: 9, have: 5, .. }
        ));
    }

    #[test]
    fn watch_percentage_cases() {
        let mut e: RecommendationEvent = serde_json::from_str(&line("u1", "v1", 1)).unwrap();
        e.video_duration_s = 10.0;
        e.watch_duration_s = 5.0;
        assert_eq!(e.watch_percentage().unwrap(), 0.5);
        assert!(!e.watched_to_end());
        e.watch_duration_s = 12.0;
        assert_eq!(e.watch_percentage().unwrap(), 1.2);
        assert!(e.watched_to_end());
        e.video_duration_s = 0.0;
        assert!(e.watch_percentage().is_err());
    }

    #[test]
    fn round_trip_is_identity() {
        let mut input = String::new();
        for user in ["u1", "u2"] {
            for k in 0..4 {
                input.push_str(&line(user, &format!("v{k}"), k as i64 * 7));
                input.push('\n');
            }
        }
        let (ds, _) = parse_traces(Cursor::new(input), true).unwrap();
        let mut buf = Vec::new();
        emit_traces(&ds, &mut buf).unwrap();
        let (ds2, _) = parse_traces(Cursor::new(buf), true).unwrap();
        assert_eq!(ds, ds2);
    }
}
