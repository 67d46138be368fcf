//! Index-randomized baseline: per recommendation index, uniformly permute
//! the items occupying that index across all user timelines. Engagement
//! attributes travel with their item; viewing timestamps are re-assigned
//! from the destination slot so each timeline stays chronologically valid
//! (engagement timestamps keep their offset from the view timestamp).

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::Result;
use crate::features::{label_dataset, FeatureSet};
use crate::metrics::{curve_for, exploit_series, ExploitSeries, MeanExploitCurve};
use crate::trace::{Dataset, RecommendationEvent, UserTimeline};
use crate::util::derive_seed;

/// Noise-floor estimate: per-index mean over randomization trials, with the
/// cross-trial standard deviation at each index.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseFloor {
    pub mean: Vec<f64>,
    pub cross_trial_std: Vec<f64>,
    pub trials: usize,
    /// Full mean-exploit curve of each individual trial; kept so callers
    /// can run significance comparisons against cohorts.
    pub trial_curves: Vec<Vec<f64>>,
}

impl NoiseFloor {
    pub fn post_warmup_mean(&self, warmup: usize) -> f64 {
        let tail = &self.mean[warmup.min(self.mean.len())..];
        if tail.is_empty() {
            return 0.0;
        }
        tail.iter().sum::<f64>() / tail.len() as f64
    }

    /// Post-warm-up mean of each trial, as a sample for pooled-stddev tests.
    pub fn trial_means(&self, warmup: usize) -> Vec<f64> {
        self.trial_curves
            .iter()
            .map(|c| {
                let tail = &c[warmup.min(c.len())..];
                if tail.is_empty() {
                    0.0
                } else {
                    tail.iter().sum::<f64>() / tail.len() as f64
                }
            })
            .collect()
    }
}

/// Permutes, for each index independently, the m items at that index across
/// user timelines. Per-user interest sets are a user attribute and stay put.
pub fn index_randomize(dataset: &Dataset, seed: u64) -> Result<Dataset> {
    let n = dataset.uniform_len()?;
    let users: Vec<&String> = dataset.timelines.keys().collect();
    let m = users.len();
    if m <= 1 {
        return Ok(dataset.clone());
    }

    let mut new_events: Vec<Vec<RecommendationEvent>> = vec![Vec::with_capacity(n); m];
    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
        let mut order: Vec<usize> = (0..m).collect();
        order.shuffle(&mut rng);
        for (slot, src) in order.into_iter().enumerate() {
            let source = &dataset.timelines[users[src]].events[i];
            let dest_slot = &dataset.timelines[users[slot]].events[i];
            let mut moved = source.clone();
            let shift = dest_slot.view_ts - source.view_ts;
            moved.view_ts = dest_slot.view_ts;
            moved.user_id = users[slot].clone();
            for t in [
                &mut moved.liked_ts,
                &mut moved.followed_ts,
                &mut moved.shared_ts,
                &mut moved.favorited_ts,
            ].into_iter().flatten() {
                *t += shift;
            }
            new_events[slot].push(moved);
        }
    }

    let mut out = Dataset::default();
    for (slot, user) in users.iter().enumerate() {
        let mut timeline = UserTimeline::new((*user).clone(), std::mem::take(&mut new_events[slot]));
        timeline
            .popular_interests
            .clone_from(&dataset.timelines[*user].popular_interests);
        timeline
            .declared_interests
            .clone_from(&dataset.timelines[*user].declared_interests);
        out.timelines.insert((*user).clone(), timeline);
    }
    Ok(out)
}

/// Labels one randomized copy of the dataset and returns its mean curve.
pub fn randomized_curve(
    dataset: &Dataset,
    features: &FeatureSet,
    w: usize,
    seed: u64,
) -> Result<MeanExploitCurve> {
    let randomized = index_randomize(dataset, seed)?;
    let labels = label_dataset(&randomized, features);
    curve_for(&labels, w)
}

/// Runs `trials` independent index randomizations (derived seeds), labels
/// each, and averages the mean exploit curves.
pub fn noise_floor(
    dataset: &Dataset,
    features: &FeatureSet,
    w: usize,
    trials: usize,
    seed: u64,
) -> Result<NoiseFloor> {
    assert!(trials >= 1, "trials must be >= 1");
    let curves: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            randomized_curve(dataset, features, w, derive_seed(seed, 0x6f00 + t as u64))
                .map(|c| c.alpha_bar)
        })
        .collect::<Result<_>>()?;
    let n = curves.first().map_or(0, |c| c.len());
    let mut mean = vec![0.0; n];
    for c in &curves {
        for (i, v) in c.iter().enumerate() {
            mean[i] += v;
        }
    }
    for v in &mut mean {
        *v /= trials as f64;
    }
    let mut std = vec![0.0; n];
    for c in &curves {
        for (i, v) in c.iter().enumerate() {
            std[i] += (v - mean[i]).powi(2);
        }
    }
    for v in &mut std {
        *v = (*v / trials as f64).sqrt();
    }
    Ok(NoiseFloor { mean, cross_trial_std: std, trials, trial_curves: curves })
}

/// Per-user post-warm-up mean exploit fractions for a labeled dataset; the
/// per-cohort sample used in significance comparisons.
pub fn per_user_means(
    labels: &std::collections::BTreeMap<String, crate::features::LabeledTimeline>,
    w: usize,
    warmup: usize,
) -> Vec<f64> {
    labels
        .values()
        .map(|l| {
            let s: ExploitSeries = exploit_series(l, w);
            let tail = &s.alpha[warmup.min(s.alpha.len())..];
            if tail.is_empty() {
                0.0
            } else {
                tail.iter().sum::<f64>() / tail.len() as f64
            }
        })
        .collect()
}
