//! Synthetic platform + scripted bots.
//!
//! A session alternates between the platform emitting an item and a bot
//! acting on it with fixed action probabilities. With probability `q` the
//! platform emits an *exploit* item constructed to share a hashtag or
//! creator with a previously engaged item; otherwise it emits a fresh
//! *explore* item. The planted label of every step is returned alongside
//! the trace, giving ground truth the audit pipeline never sees.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{AuditError, Result};
use crate::features::Label;
use crate::trace::{Dataset, RecommendationEvent, UserTimeline};
use crate::util::derive_seed;

/// Bot action probabilities. Watch/skip are the exhaustive dwell choices;
/// like and follow are independent coin flips.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BotPolicy {
    pub p_watch: f64,
    pub p_skip: f64,
    pub p_like: f64,
    pub p_follow: f64,
}

impl BotPolicy {
    pub fn new(p_watch: f64, p_skip: f64, p_like: f64, p_follow: f64) -> Result<Self> {
        let policy = BotPolicy { p_watch, p_skip, p_like, p_follow };
        for p in [p_watch, p_skip, p_like, p_follow] {
            if !(0.0..=1.0).contains(&p) {
                return Err(AuditError::InvalidPolicy(format!(
                    "probability {p} outside [0, 1]"
                )));
            }
        }
        if (p_watch + p_skip - 1.0).abs() > 1e-9 {
            return Err(AuditError::InvalidPolicy(format!(
                "p_watch + p_skip must equal 1, got {}",
                p_watch + p_skip
            )));
        }
        Ok(policy)
    }

    /// The five reference bot configurations.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "bot1" => Self::new(0.0, 1.0, 0.0, 0.0),
            "bot2" => Self::new(1.0, 0.0, 0.0, 0.0),
            "bot3" => Self::new(0.5, 0.5, 0.0, 0.0),
            "bot4" => Self::new(1.0, 0.0, 0.5, 0.5),
            "bot5" => Self::new(0.5, 0.5, 0.5, 0.5),
            other => Err(AuditError::InvalidPolicy(format!("unknown policy {other}"))),
        }
    }
}

/// Which engaged-item relation an exploit item was built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExploitBasis {
    LikedHashtag,
    FollowedCreator,
    WatchedHashtag,
}

impl ExploitBasis {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExploitBasis::LikedHashtag => "liked-hashtag",
            ExploitBasis::FollowedCreator => "followed-creator",
            ExploitBasis::WatchedHashtag => "watched-hashtag",
        }
    }
}

/// Synthetic recommender parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PlatformConfig {
    /// Probability of emitting an exploit (personalized) item.
    pub exploit_rate: f64,
    pub n_creators: usize,
    pub n_hashtag_clusters: usize,
    pub tags_per_video: usize,
    /// Mixing weights over (liked-hashtag, followed-creator, watched-hashtag).
    pub basis_weights: [f64; 3],
    /// Exploit bases are drawn from qualifying events among this many most
    /// recent items.
    pub basis_recency: usize,
    /// Probability of an explore item repeating a recent creator regardless
    /// of engagement; models platform continuity (trending runs) that gives
    /// even passive sessions more structure than an index-randomized trace.
    pub continuity_rate: f64,
    pub seed: u64,
}

impl Default for PlatformConfig {
    fn default() -> Self {
        PlatformConfig {
            exploit_rate: 0.5,
            n_creators: 2000,
            n_hashtag_clusters: 4000,
            tags_per_video: 3,
            basis_weights: [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
            basis_recency: 100,
            continuity_rate: 0.0,
            seed: 0,
        }
    }
}

impl PlatformConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.exploit_rate) {
            return Err(AuditError::InvalidPlatform("exploit_rate outside [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.continuity_rate) {
            return Err(AuditError::InvalidPlatform("continuity_rate outside [0, 1]".into()));
        }
        let sum: f64 = self.basis_weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(AuditError::InvalidPlatform(format!(
                "basis weights must sum to 1, got {sum}"
            )));
        }
        if self.n_creators == 0 || self.n_hashtag_clusters == 0 || self.tags_per_video == 0 {
            return Err(AuditError::InvalidPlatform("content pool sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Ground truth for one simulated step.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedRecord {
    /// 1-based recommendation index.
    pub index: usize,
    pub planted: Label,
    pub basis: Option<ExploitBasis>,
    /// 1-based index of the engaged item the exploit was built from.
    pub basis_index: Option<usize>,
    /// True when an exploit was scheduled but no qualifying engaged item
    /// existed, so the platform fell back to an explore item.
    pub fallback: bool,
}

pub type GroundTruth = BTreeMap<String, Vec<PlantedRecord>>;

struct SessionState {
    events: Vec<RecommendationEvent>,
    followed: BTreeSet<String>,
}

impl SessionState {
    fn qualifying(&self, basis: ExploitBasis, recency: usize) -> Vec<usize> {
        let lo = self.events.len().saturating_sub(recency);
        (lo..self.events.len())
            .filter(|&j| {
                let e = &self.events[j];
                match basis {
                    ExploitBasis::LikedHashtag => e.liked && !e.hashtags.is_empty(),
                    ExploitBasis::FollowedCreator => self.followed.contains(&e.creator_id),
                    ExploitBasis::WatchedHashtag => e.watched_to_end() && !e.hashtags.is_empty(),
                }
            })
            .collect()
    }
}

fn pick_weighted(weights: &[f64; 3], rng: &mut impl Rng) -> ExploitBasis {
    let x: f64 = rng.gen();
    if x < weights[0] {
        ExploitBasis::LikedHashtag
    } else if x < weights[0] + weights[1] {
        ExploitBasis::FollowedCreator
    } else {
        ExploitBasis::WatchedHashtag
    }
}

fn fresh_tags(cfg: &PlatformConfig, rng: &mut impl Rng) -> BTreeSet<String> {
    let mut tags = BTreeSet::new();
    while tags.len() < cfg.tags_per_video.min(cfg.n_hashtag_clusters) {
        tags.insert(format!("#t{}", rng.gen_range(0..cfg.n_hashtag_clusters)));
    }
    tags
}

/// Simulates one bot session of `steps` items. Returns the timeline plus
/// per-index planted ground truth. Bit-reproducible given (policy,
/// platform, steps, seed).
pub fn run_bot(
    user_id: &str,
    policy: &BotPolicy,
    platform: &PlatformConfig,
    steps: usize,
    seed: u64,
) -> Result<(UserTimeline, Vec<PlantedRecord>)> {
    if steps == 0 {
        return Err(AuditError::InvalidPlatform("steps must be >= 1".into()));
    }
    platform.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(platform.seed, seed));
    let mut state = SessionState { events: Vec::with_capacity(steps), followed: BTreeSet::new() };
    let mut truth = Vec::with_capacity(steps);
    let base_ts: i64 = 1_700_000_000;

    for step in 0..steps {
        let view_ts = base_ts + step as i64 * 30;
        let index = step + 1;

        // --- platform side: construct the item -------------------------
        let mut creator = format!("c{}", rng.gen_range(0..platform.n_creators));
        let mut tags = fresh_tags(platform, &mut rng);
        let mut planted = Label::Explore;
        let mut basis = None;
        let mut basis_index = None;
        let mut fallback = false;

        if rng.gen::<f64>() < platform.exploit_rate {
            let kind = pick_weighted(&platform.basis_weights, &mut rng);
            let candidates = state.qualifying(kind, platform.basis_recency);
            if candidates.is_empty() {
                fallback = true;
            } else {
                let j = candidates[rng.gen_range(0..candidates.len())];
                let source = &state.events[j];
                match kind {
                    ExploitBasis::LikedHashtag | ExploitBasis::WatchedHashtag => {
                        // share one hashtag with the basis item
                        let pool: Vec<&String> = source.hashtags.iter().collect();
                        let shared = pool[rng.gen_range(0..pool.len())].clone();
                        tags.insert(shared);
                        while tags.len() > platform.tags_per_video {
                            let drop = tags
                                .iter()
                                .find(|t| !source.hashtags.contains(*t))
                                .cloned();
                            match drop {
                                Some(d) => tags.remove(&d),
                                None => break,
                            };
                        }
                    }
                    ExploitBasis::FollowedCreator => {
                        creator = source.creator_id.clone();
                    }
                }
                planted = Label::Exploit;
                basis = Some(kind);
                basis_index = Some(j + 1);
            }
        } else if rng.gen::<f64>() < platform.continuity_rate && !state.events.is_empty() {
            // trending continuity: repeat a recent creator without any
            // engagement signal; counts as planted-explore.
            let lo = state.events.len().saturating_sub(10);
            let j = rng.gen_range(lo..state.events.len());
            creator = state.events[j].creator_id.clone();
        }

        // --- bot side: act on the item ---------------------------------
        let video_duration = 5.0 + rng.gen::<f64>() * 55.0;
        let watched = rng.gen::<f64>() < policy.p_watch;
        let watch_duration = if watched {
            video_duration
        } else {
            // early skip: dwell under 1 s
            0.2 + rng.gen::<f64>() * 0.7
        };
        let liked = rng.gen::<f64>() < policy.p_like;
        let follow_now = rng.gen::<f64>() < policy.p_follow;
        let already_followed = state.followed.contains(&creator);
        if follow_now {
            state.followed.insert(creator.clone());
        }

        let event = RecommendationEvent {
            user_id: user_id.to_string(),
            video_id: format!("{user_id}-v{step:05}"),
            creator_id: creator,
            hashtags: tags,
            view_ts,
            video_duration_s: (video_duration * 100.0).round() / 100.0,
            watch_duration_s: (watch_duration * 100.0).round() / 100.0,
            liked,
            liked_ts: liked.then_some(view_ts + 5),
            followed_creator: already_followed || follow_now,
            followed_ts: if already_followed {
                // followed when the creator was first seen; keep it earlier
                // than this view so "followed before viewing" holds.
                Some(view_ts - 1)
            } else {
                follow_now.then_some(view_ts + 5)
            },
            shared: false,
            shared_ts: None,
            favorited: false,
            favorited_ts: None,
        };
        state.events.push(event);
        truth.push(PlantedRecord { index, planted, basis, basis_index, fallback });
    }

    Ok((UserTimeline::new(user_id.to_string(), state.events), truth))
}

/// Batch driver: `n_per_policy` sessions for each named policy, with
/// derived seeds. Returns the dataset plus ground truth per user.
pub fn generate_cohort(
    policies: &[(String, BotPolicy)],
    platform: &PlatformConfig,
    n_per_policy: usize,
    steps: usize,
    seed: u64,
) -> Result<(Dataset, GroundTruth)> {
    if n_per_policy == 0 || policies.is_empty() {
        return Err(AuditError::EmptyCohort);
    }
    let mut dataset = Dataset::default();
    let mut truth = GroundTruth::new();
    for (pi, (name, policy)) in policies.iter().enumerate() {
        for k in 0..n_per_policy {
            let user_id = format!("{name}_{k:02}");
            let session_seed = derive_seed(seed, (pi as u64) << 32 | k as u64);
            let (timeline, records) = run_bot(&user_id, policy, platform, steps, session_seed)?;
            truth.insert(user_id.clone(), records);
            dataset.timelines.insert(user_id, timeline);
        }
    }
    Ok((dataset, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_policies() {
        let b1 = BotPolicy::by_name("bot1").unwrap();
        assert_eq!((b1.p_watch, b1.p_skip, b1.p_like, b1.p_follow), (0.0, 1.0, 0.0, 0.0));
        let b4 = BotPolicy::by_name("bot4").unwrap();
        assert_eq!((b4.p_watch, b4.p_skip, b4.p_like, b4.p_follow), (1.0, 0.0, 0.5, 0.5));
        assert!(BotPolicy::by_name("bot9").is_err());
        assert!(BotPolicy::new(0.5, 0.6, 0.0, 0.0).is_err());
    }

    #[test]
    fn q_zero_plants_no_exploits() {
        let platform = PlatformConfig { exploit_rate: 0.0, ..Default::default() };
        let policy = BotPolicy::by_name("bot4").unwrap();
        let (timeline, truth) = run_bot("b", &policy, &platform, 200, 1).unwrap();
        assert_eq!(timeline.len(), 200);
        assert!(truth.iter().all(|r| r.planted == Label::Explore && r.basis.is_none()));
    }

    #[test]
    fn passive_bot_forces_fallback() {
        // bot1 never engages; every scheduled exploit must fall back
        let platform = PlatformConfig { exploit_rate: 1.0, ..Default::default() };
        let policy = BotPolicy::by_name("bot1").unwrap();
        let (_, truth) = run_bot("b", &policy, &platform, 100, 2).unwrap();
        assert!(truth.iter().all(|r| r.planted == Label::Explore));
        assert!(truth.iter().filter(|r| r.fallback).count() > 90);
    }

    #[test]
    fn planted_exploits_share_basis_attribute() {
        let platform = PlatformConfig {
            exploit_rate: 0.6,
            basis_weights: [1.0, 0.0, 0.0],
            ..Default::default()
        };
        let policy = BotPolicy::by_name("bot4").unwrap();
        let (timeline, truth) = run_bot("b", &policy, &platform, 300, 3).unwrap();
        let mut planted = 0;
        for r in &truth {
            if let (Some(ExploitBasis::LikedHashtag), Some(j)) = (r.basis, r.basis_index) {
                planted += 1;
                let item = &timeline.events[r.index - 1];
                let source = &timeline.events[j - 1];
                assert!(source.liked);
                assert!(!item.hashtags.is_disjoint(&source.hashtags), "index {}", r.index);
            }
        }
        assert!(planted > 50, "got only {planted} planted exploits");
    }

    #[test]
    fn bit_reproducible() {
        let platform = PlatformConfig::default();
        let policy = BotPolicy::by_name("bot5").unwrap();
        let a = run_bot("b", &policy, &platform, 150, 42).unwrap();
        let b = run_bot("b", &policy, &platform, 150, 42).unwrap();
        assert_eq!(a, b);
        let c = run_bot("b", &policy, &platform, 150, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn cohort_shape_and_errors() {
        let policies = vec![
            ("bot1".to_string(), BotPolicy::by_name("bot1").unwrap()),
            ("bot4".to_string(), BotPolicy::by_name("bot4").unwrap()),
        ];
        let platform = PlatformConfig::default();
        let (ds, truth) = generate_cohort(&policies, &platform, 2, 50, 9).unwrap();
        assert_eq!(ds.m(), 4);
        assert_eq!(ds.uniform_len().unwrap(), 50);
        assert_eq!(truth.len(), 4);
        assert!(generate_cohort(&policies, &platform, 0, 50, 9).is_err());
    }
}
