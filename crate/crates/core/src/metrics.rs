//! Personalization metrics over labeled timelines: per-user exploit
//! fraction, the cross-user mean curve, and the per-item personalization
//! score computed by virtual insertion into other users' timelines.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{AuditError, Result};
use crate::features::{evaluate_at, FeatureSet, Label, LabeledTimeline};
use crate::trace::Dataset;
use crate::util::{derive_seed, stable_hash};

/// Trailing-window exploit fraction per index for one user.
#[derive(Debug, Clone, PartialEq)]
pub struct ExploitSeries {
    pub user_id: String,
    pub alpha: Vec<f64>,
    pub window: usize,
}

/// Arithmetic mean (and stddev) of per-user exploit fractions at each index.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanExploitCurve {
    pub alpha_bar: Vec<f64>,
    pub stddev: Vec<f64>,
    pub m: usize,
}

impl MeanExploitCurve {
    /// Mean of `alpha_bar` over 1-based indices `i > warmup`.
    pub fn post_warmup_mean(&self, warmup: usize) -> f64 {
        let tail = &self.alpha_bar[warmup.min(self.alpha_bar.len())..];
        if tail.is_empty() {
            return 0.0;
        }
        tail.iter().sum::<f64>() / tail.len() as f64
    }
}

/// Exploit count among indices `[max(1, i-W), i-1]` divided by `W`.
///
/// The denominator stays `W` even when fewer than `W` predecessors exist,
/// which deflates early indices and produces the warm-up ramp.
pub fn user_exploit_fraction(labeled: &LabeledTimeline, i: usize, w: usize) -> Result<f64> {
    if i == 0 || i > labeled.len() {
        return Err(AuditError::IndexOutOfRange {
            user: labeled.user_id.clone(),
            index: i,
            len: labeled.len(),
        });
    }
    let lo = i.saturating_sub(w + 1); // 0-based start of the window
    let count = labeled.labels[lo..i - 1].iter().filter(|l| **l == Label::Exploit).count();
    Ok(count as f64 / w as f64)
}

/// The full α series for one labeled timeline, via a sliding count.
pub fn exploit_series(labeled: &LabeledTimeline, w: usize) -> ExploitSeries {
    let n = labeled.len();
    let mut alpha = Vec::with_capacity(n);
    let mut count = 0usize;
    for i in 1..=n {
        alpha.push(count as f64 / w as f64);
        // maintain count of exploit labels among the last w indices ending at i
        if labeled.labels[i - 1] == Label::Exploit {
            count += 1;
        }
        if i > w && labeled.labels[i - w - 1] == Label::Exploit {
            count -= 1;
        }
    }
    ExploitSeries { user_id: labeled.user_id.clone(), alpha, window: w }
}

/// Per-index mean and (population) standard deviation across users.
pub fn mean_exploit_curve(series: &[ExploitSeries]) -> Result<MeanExploitCurve> {
    let m = series.len();
    let mut len = None;
    for s in series {
        match len {
            None => len = Some(s.alpha.len()),
            Some(l) if l != s.alpha.len() => {
                return Err(AuditError::MixedLengths { a: l, b: s.alpha.len() })
            }
            _ => {}
        }
    }
    let n = len.unwrap_or(0);
    let mut alpha_bar = vec![0.0; n];
    let mut stddev = vec![0.0; n];
    for s in series {
        for (i, a) in s.alpha.iter().enumerate() {
            alpha_bar[i] += a;
        }
    }
    for v in &mut alpha_bar {
        *v /= m as f64;
    }
    for s in series {
        for (i, a) in s.alpha.iter().enumerate() {
            stddev[i] += (a - alpha_bar[i]).powi(2);
        }
    }
    for v in &mut stddev {
        *v = (*v / m as f64).sqrt();
    }
    Ok(MeanExploitCurve { alpha_bar, stddev, m })
}

/// Convenience: label series + curve for a labeled dataset.
pub fn curve_for(labels: &BTreeMap<String, LabeledTimeline>, w: usize) -> Result<MeanExploitCurve> {
    let series: Vec<ExploitSeries> =
        labels.values().map(|l| exploit_series(l, w)).collect();
    mean_exploit_curve(&series)
}

/// Personalization score ρ(r_i, u) = 1 - k/m.
///
/// The item at 1-based `index` of `user`'s timeline is virtually inserted at
/// the same index of every other user's timeline: that user's items before
/// the index form the history, that user's interest set is used for
/// interest features, and the destination slot's view timestamp gates
/// engagement recency. `k` counts the other users whose context gives the
/// item the same label it has for `user`.
///
/// `sample` optionally evaluates only a seeded uniform subset of the other
/// users and extrapolates `k`; exact scoring is O(m) per item.
pub fn personalization_score(
    dataset: &Dataset,
    labels: &BTreeMap<String, LabeledTimeline>,
    user: &str,
    index: usize,
    features: &FeatureSet,
    sample: Option<(usize, u64)>,
) -> Result<f64> {
    let m = dataset.m();
    let own = dataset
        .timelines
        .get(user)
        .ok_or_else(|| AuditError::UnknownFeature(format!("user {user}")))?;
    if index == 0 || index > own.len() {
        return Err(AuditError::IndexOutOfRange {
            user: user.into(),
            index,
            len: own.len(),
        });
    }
    for t in dataset.timelines.values() {
        if t.len() < index {
            return Err(AuditError::IndexOutOfRange {
                user: t.user_id.clone(),
                index,
                len: t.len(),
            });
        }
    }
    let own_label = labels
        .get(user)
        .ok_or_else(|| AuditError::Format(format!("no labels for user {user}")))?
        .labels[index - 1];
    let probe = &own.events[index - 1];

    let mut others: Vec<&str> = dataset
        .timelines
        .keys()
        .filter(|id| id.as_str() != user)
        .map(|id| id.as_str())
        .collect();
    let total_others = others.len();
    if let Some((size, seed)) = sample {
        if size < total_others {
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(seed, stable_hash(user, index as u64)));
            others.shuffle(&mut rng);
            others.truncate(size);
            others.sort_unstable();
        }
    }

    let agree = others
        .iter()
        .filter(|id| {
            let ctx = &dataset.timelines[**id];
            let slot_ts = ctx.events[index - 1].view_ts;
            let history = &ctx.events[..index - 1];
            let fired = features
                .specs()
                .iter()
                .any(|s| evaluate_at(s, probe, slot_ts, history, &ctx.popular_interests));
            let label = if fired { Label::Exploit } else { Label::Explore };
            label == own_label
        })
        .count();

    let k = if others.is_empty() {
        0.0
    } else {
        agree as f64 * total_others as f64 / others.len() as f64
    };
    Ok(1.0 - k / m as f64)
}

/// One scored item.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredItem {
    pub user_id: String,
    pub index: usize,
    pub video_id: String,
    pub label: Label,
    pub rho: f64,
}

/// Scores every item of every timeline, in parallel over items.
pub fn score_dataset(
    dataset: &Dataset,
    labels: &BTreeMap<String, LabeledTimeline>,
    features: &FeatureSet,
    sample_size: Option<usize>,
    seed: u64,
) -> Result<Vec<ScoredItem>> {
    let n = dataset.uniform_len()?;
    let work: Vec<(String, usize)> = dataset
        .timelines
        .keys()
        .flat_map(|id| (1..=n).map(move |i| (id.clone(), i)))
        .collect();
    work.par_iter()
        .map(|(user, i)| {
            let rho = personalization_score(
                dataset,
                labels,
                user,
                *i,
                features,
                sample_size.map(|s| (s, seed)),
            )?;
            Ok(ScoredItem {
                user_id: user.clone(),
                index: *i,
                video_id: dataset.timelines[user].events[*i - 1].video_id.clone(),
                label: labels[user].labels[*i - 1],
                rho,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{label_dataset, FeatureSet, Label};
    use crate::trace::{RecommendationEvent, UserTimeline};

    fn labeled(user: &str, pattern: &str) -> LabeledTimeline {
        LabeledTimeline {
            user_id: user.into(),
            labels: pattern
                .chars()
                .map(|c| if c == 'E' { Label::Exploit } else { Label::Explore })
                .collect(),
            fired: pattern.chars().map(|_| Vec::new()).collect(),
        }
    }

    #[test]
    fn first_index_fraction_is_zero() {
        let l = labeled("u", "EEEE");
        assert_eq!(user_exploit_fraction(&l, 1, 4).unwrap(), 0.0);
    }

    #[test]
    fn saturated_window_is_one() {
        let l = labeled("u", &"E".repeat(51));
        assert_eq!(user_exploit_fraction(&l, 51, 50).unwrap(), 1.0);
    }

    #[test]
    fn direct_count_example() {
        // labels E,X,X,E,X with W=4, i=5 -> window covers indices 1..4 -> 2/4
        let l = labeled("u", "EXXEX");
        assert_eq!(user_exploit_fraction(&l, 5, 4).unwrap(), 0.5);
    }

    #[test]
    fn series_matches_pointwise_definition() {
        let l = labeled("u", "EXEXXEEEXE");
        let s = exploit_series(&l, 3);
        for i in 1..=l.len() {
            assert_eq!(s.alpha[i - 1], user_exploit_fraction(&l, i, 3).unwrap(), "i={i}");
        }
    }

    #[test]
    fn single_user_curve_equals_series() {
        let l = labeled("u", "EXEX");
        let s = exploit_series(&l, 2);
        let curve = mean_exploit_curve(std::slice::from_ref(&s)).unwrap();
        assert_eq!(curve.alpha_bar, s.alpha);
        assert!(curve.stddev.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn hand_mean_of_two_series() {
        let a = ExploitSeries { user_id: "a".into(), alpha: vec![0.0, 1.0], window: 1 };
        let b = ExploitSeries { user_id: "b".into(), alpha: vec![1.0, 0.0], window: 1 };
        let curve = mean_exploit_curve(&[a, b]).unwrap();
        assert_eq!(curve.alpha_bar, vec![0.5, 0.5]);
    }

    #[test]
    fn mixed_lengths_rejected() {
        let a = ExploitSeries { user_id: "a".into(), alpha: vec![0.0], window: 1 };
        let b = ExploitSeries { user_id: "b".into(), alpha: vec![0.0, 0.0], window: 1 };
        assert!(mean_exploit_curve(&[a, b]).is_err());
    }

    fn event(user: &str, video: &str, creator: &str, tags: &[&str], ts: i64, liked: bool) -> RecommendationEvent {
        RecommendationEvent {
            user_id: user.into(),
            video_id: video.into(),
            creator_id: creator.into(),
            hashtags: tags.iter().map(|t| t.to_string()).collect(),
            view_ts: ts,
            video_duration_s: 10.0,
            watch_duration_s: 2.0,
            liked,
            liked_ts: liked.then_some(ts),
            followed_creator: false,
            followed_ts: None,
            shared: false,
            shared_ts: None,
            favorited: false,
            favorited_ts: None,
        }
    }

    #[test]
    fn single_user_score_is_one() {
        let t = UserTimeline::new("u1".into(), vec![event("u1", "v1", "c1", &["#a"], 1, false)]);
        let ds = Dataset::from_timelines([t]);
        let features = FeatureSet::default_set(5);
        let labels = label_dataset(&ds, &features);
        let rho = personalization_score(&ds, &labels, "u1", 1, &features, None).unwrap();
        assert_eq!(rho, 1.0);
    }

    #[test]
    fn three_user_hand_enumeration() {
        // every user liked an item with #pop before index 2; the probe item
        // carries #pop -> Exploit in all three contexts, k=2, rho=1/3.
        let mk = |user: &str| {
            UserTimeline::new(
                user.into(),
                vec![
                    event(user, &format!("{user}-v1"), "c1", &["#pop"], 1, true),
                    event(user, &format!("{user}-v2"), "c2", &["#pop"], 2, false),
                ],
            )
        };
        let ds = Dataset::from_timelines([mk("u1"), mk("u2"), mk("u3")]);
        let features = FeatureSet::from_names(["likes_hashtag_local"], 5).unwrap();
        let labels = label_dataset(&ds, &features);
        assert_eq!(labels["u1"].labels[1], Label::Exploit);
        let rho = personalization_score(&ds, &labels, "u1", 2, &features, None).unwrap();
        assert!((rho - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn identical_timelines_symmetry() {
        let mk = |user: &str| {
            UserTimeline::new(
                user.into(),
                (0..6)
                    .map(|k| event(user, &format!("v{k}"), "c1", &["#t"], k as i64, k % 2 == 0))
                    .collect(),
            )
        };
        let ds = Dataset::from_timelines(["u1", "u2", "u3", "u4"].map(mk));
        let m = ds.m() as f64;
        let features = FeatureSet::default_set(3);
        let labels = label_dataset(&ds, &features);
        for i in 1..=6 {
            let rho = personalization_score(&ds, &labels, "u1", i, &features, None).unwrap();
            assert!((rho - (1.0 - (m - 1.0) / m)).abs() < 1e-12, "i={i}");
        }
    }

    #[test]
    fn user_renaming_preserves_metrics() {
        let mk = |user: &str, salt: i64| {
            UserTimeline::new(
                user.into(),
                (0..5)
                    .map(|k| {
                        event(
                            user,
                            &format!("{user}-v{k}"),
                            &format!("c{}", (k + salt) % 3),
                            &[&format!("#t{}", (k * salt) % 4)],
                            k,
                            k == 1,
                        )
                    })
                    .collect(),
            )
        };
        let ds1 = Dataset::from_timelines([mk("alpha", 1), mk("beta", 2), mk("gamma", 3)]);
        let features = FeatureSet::default_set(3);
        let l1 = label_dataset(&ds1, &features);
        let c1 = curve_for(&l1, 3).unwrap();

        let rename = |t: &UserTimeline, name: &str| {
            let mut events = t.events.clone();
            for e in &mut events {
                e.user_id = name.into();
            }
            UserTimeline::new(name.into(), events)
        };
        let ds2 = Dataset::from_timelines([
            rename(&ds1.timelines["alpha"], "zz1"),
            rename(&ds1.timelines["beta"], "zz2"),
            rename(&ds1.timelines["gamma"], "zz3"),
        ]);
        let l2 = label_dataset(&ds2, &features);
        let c2 = curve_for(&l2, 3).unwrap();
        assert_eq!(c1.alpha_bar, c2.alpha_bar);
    }
}
