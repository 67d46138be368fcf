//! Feature catalogue and explore/exploit labeling.
//!
//! A feature is a declarative activation rule over an item and its history.
//! Local features scan the preceding `W` items; global features scan all
//! prior items (or a user-level interest set). An item is labeled `Exploit`
//! when any feature in the active set fires, `Explore` otherwise.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::trace::{Dataset, RecommendationEvent, UserTimeline};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Local,
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchBasis {
    Hashtag,
    Creator,
    InterestSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngagementGate {
    None,
    Liked,
    WatchedToEnd,
    Shared,
    Favorited,
    Followed,
}

/// A declarative activation rule: scope + match basis + engagement gate,
/// plus the window size for local rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub scope: Scope,
    pub basis: MatchBasis,
    pub gate: EngagementGate,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
}

impl FeatureSpec {
    pub fn validate(&self) -> Result<()> {
        match self.scope {
            Scope::Local => {
                if self.window.is_none() || self.window == Some(0) {
                    return Err(AuditError::MissingWindow(self.name.clone()));
                }
            }
            Scope::Global => {
                if self.window.is_some() {
                    return Err(AuditError::InvalidFeatureSpec {
                        name: self.name.clone(),
                        reason: "global features take no window".into(),
                    });
                }
            }
        }
        if self.basis == MatchBasis::InterestSet && self.gate != EngagementGate::None {
            return Err(AuditError::InvalidFeatureSpec {
                name: self.name.clone(),
                reason: "interest-set features take no engagement gate".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Explore,
    Exploit,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Explore => write!(f, "explore"),
            Label::Exploit => write!(f, "exploit"),
        }
    }
}

/// Per-index labels plus which features fired at each index.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTimeline {
    pub user_id: String,
    pub labels: Vec<Label>,
    pub fired: Vec<Vec<String>>,
}

impl LabeledTimeline {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn exploit_count(&self) -> usize {
        self.labels.iter().filter(|l| **l == Label::Exploit).count()
    }
}

/// The candidate features of the reference catalogue, in catalogue order.
pub const CATALOGUE_NAMES: [&str; 12] = [
    "generic_hashtag_local",
    "generic_creator_local",
    "likes_hashtag_local",
    "likes_creator_local",
    "watched_hashtag_local",
    "watched_creator_local",
    "shares_hashtag_local",
    "shares_creator_local",
    "favoriteVideos_hashtag_global",
    "favoriteVideos_creator_global",
    "following_global",
    "inferred_interests_global",
];

/// The default labeling set: the seven catalogue features with the best
/// signal-noise ratio on the reference instantiation.
pub const DEFAULT_FEATURE_NAMES: [&str; 7] = [
    "generic_creator_local",
    "likes_hashtag_local",
    "likes_creator_local",
    "watched_hashtag_local",
    "watched_creator_local",
    "favoriteVideos_hashtag_global",
    "following_global",
];

fn builtin_spec(name: &str, window: usize) -> Option<FeatureSpec> {
    use EngagementGate::*;
    use MatchBasis::*;
    use Scope::*;
    let (scope, basis, gate) = match name {
        "generic_hashtag_local" => (Local, Hashtag, None),
        "generic_creator_local" => (Local, Creator, None),
        "likes_hashtag_local" => (Local, Hashtag, Liked),
        "likes_creator_local" => (Local, Creator, Liked),
        "watched_hashtag_local" => (Local, Hashtag, WatchedToEnd),
        "watched_creator_local" => (Local, Creator, WatchedToEnd),
        "shares_hashtag_local" => (Local, Hashtag, Shared),
        "shares_creator_local" => (Local, Creator, Shared),
        "favoriteVideos_hashtag_global" => (Global, Hashtag, Favorited),
        "favoriteVideos_creator_global" => (Global, Creator, Favorited),
        "following_global" => (Global, Hashtag, Followed),
        // Creator-match variant of following_global; not in the catalogue 12.
        "following_creator_global" => (Global, Creator, Followed),
        "inferred_interests_global" => (Global, InterestSet, None),
        _ => return Option::None,
    };
    Some(FeatureSpec {
        name: name.to_string(),
        scope,
        basis,
        gate,
        window: if scope == Local { Some(window) } else { Option::None },
    })
}

/// An ordered, name-unique set of feature specs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureSet {
    specs: Vec<FeatureSpec>,
    index: BTreeMap<String, usize>,
}

impl FeatureSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a set from builtin names, instantiating local rules at window `w`.
    pub fn from_names<'a>(names: impl IntoIterator<Item = &'a str>, w: usize) -> Result<Self> {
        let mut set = FeatureSet::new();
        for name in names {
            let spec =
                builtin_spec(name, w).ok_or_else(|| AuditError::UnknownFeature(name.into()))?;
            set.register(spec)?;
        }
        Ok(set)
    }

    /// The full 12-feature candidate catalogue at window `w`.
    pub fn catalogue(w: usize) -> Self {
        Self::from_names(CATALOGUE_NAMES, w).expect("catalogue names are builtin")
    }

    /// The default 7-feature labeling set at window `w`.
    pub fn default_set(w: usize) -> Self {
        Self::from_names(DEFAULT_FEATURE_NAMES, w).expect("default names are builtin")
    }

    pub fn register(&mut self, spec: FeatureSpec) -> Result<()> {
        spec.validate()?;
        if self.index.contains_key(&spec.name) {
            return Err(AuditError::DuplicateFeature(spec.name));
        }
        self.index.insert(spec.name.clone(), self.specs.len());
        self.specs.push(spec);
        Ok(())
    }

    pub fn specs(&self) -> &[FeatureSpec] {
        &self.specs
    }

    pub fn names(&self) -> Vec<String> {
        self.specs.iter().map(|s| s.name.clone()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&FeatureSpec> {
        self.index.get(name).map(|&i| &self.specs[i])
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    /// The subset with `excluded` removed (for leave-one-out evaluation).
    pub fn without(&self, excluded: &str) -> FeatureSet {
        let mut out = FeatureSet::new();
        for spec in &self.specs {
            if spec.name != excluded {
                out.register(spec.clone()).expect("subset of a valid set");
            }
        }
        out
    }

    pub fn subset<'a>(&self, names: impl IntoIterator<Item = &'a str>) -> Result<FeatureSet> {
        let mut out = FeatureSet::new();
        for name in names {
            let spec = self
                .get(name)
                .cloned()
                .ok_or_else(|| AuditError::UnknownFeature(name.into()))?;
            out.register(spec)?;
        }
        Ok(out)
    }
}

fn ts_before(engagement_ts: Option<i64>, ref_ts: i64) -> bool {
    // An engagement with a recorded timestamp counts only if it happened
    // before the probe item was viewed; without a timestamp the recorded
    // boolean counts unconditionally.
    engagement_ts.is_none_or(|t| t < ref_ts)
}

fn gate_holds(gate: EngagementGate, prior: &RecommendationEvent, ref_ts: i64) -> bool {
    match gate {
        EngagementGate::None => true,
        EngagementGate::Liked => prior.liked && ts_before(prior.liked_ts, ref_ts),
        EngagementGate::WatchedToEnd => prior.watched_to_end(),
        EngagementGate::Shared => prior.shared && ts_before(prior.shared_ts, ref_ts),
        EngagementGate::Favorited => prior.favorited && ts_before(prior.favorited_ts, ref_ts),
        EngagementGate::Followed => {
            prior.followed_creator && ts_before(prior.followed_ts, ref_ts)
        }
    }
}

fn basis_holds(basis: MatchBasis, probe: &RecommendationEvent, prior: &RecommendationEvent) -> bool {
    match basis {
        MatchBasis::Hashtag => !probe.hashtags.is_disjoint(&prior.hashtags),
        MatchBasis::Creator => probe.creator_id == prior.creator_id,
        MatchBasis::InterestSet => unreachable!("interest features scan no prior item"),
    }
}

/// Evaluates one feature for a probe item placed after `history`.
///
/// `ref_ts` is the viewing timestamp at the probe's position; for ordinary
/// labeling it is the probe's own `view_ts`, for virtual insertion it is the
/// destination slot's timestamp.
pub fn evaluate_at(
    spec: &FeatureSpec,
    probe: &RecommendationEvent,
    ref_ts: i64,
    history: &[RecommendationEvent],
    interests: &std::collections::BTreeSet<String>,
) -> bool {
    if spec.basis == MatchBasis::InterestSet {
        return !probe.hashtags.is_disjoint(interests);
    }
    let scan: &[RecommendationEvent] = match spec.scope {
        Scope::Local => {
            let w = spec.window.unwrap_or(0);
            &history[history.len().saturating_sub(w)..]
        }
        Scope::Global => history,
    };
    scan.iter()
        .any(|prior| gate_holds(spec.gate, prior, ref_ts) && basis_holds(spec.basis, probe, prior))
}

/// Evaluates one feature at 1-based index `i` of a timeline.
pub fn evaluate_feature(
    spec: &FeatureSpec,
    i: usize,
    timeline: &UserTimeline,
) -> Result<bool> {
    if i == 0 || i > timeline.len() {
        return Err(AuditError::IndexOutOfRange {
            user: timeline.user_id.clone(),
            index: i,
            len: timeline.len(),
        });
    }
    let probe = &timeline.events[i - 1];
    Ok(evaluate_at(spec, probe, probe.view_ts, &timeline.events[..i - 1], &timeline.popular_interests))
}

/// Labels every index of a timeline under the ANY-activation rule.
/// `fired[i]` lists all activating features (not short-circuited).
pub fn label_timeline(timeline: &UserTimeline, features: &FeatureSet) -> LabeledTimeline {
    let mut labels = Vec::with_capacity(timeline.len());
    let mut fired = Vec::with_capacity(timeline.len());
    for i in 1..=timeline.len() {
        let probe = &timeline.events[i - 1];
        let history = &timeline.events[..i - 1];
        let hits: Vec<String> = features
            .specs()
            .iter()
            .filter(|s| evaluate_at(s, probe, probe.view_ts, history, &timeline.popular_interests))
            .map(|s| s.name.clone())
            .collect();
        labels.push(if hits.is_empty() { Label::Explore } else { Label::Exploit });
        fired.push(hits);
    }
    LabeledTimeline { user_id: timeline.user_id.clone(), labels, fired }
}

/// Labels all timelines of a dataset, in parallel across users.
pub fn label_dataset(dataset: &Dataset, features: &FeatureSet) -> BTreeMap<String, LabeledTimeline> {
    dataset
        .timelines
        .par_iter()
        .map(|(id, t)| (id.clone(), label_timeline(t, features)))
        .collect()
}
