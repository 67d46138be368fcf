//! Signal-noise-ratio feature selection: rank candidates by singleton SNR
//! against shared index-randomized floors, retain those below the noise
//! threshold tau, then recursively drop features by leave-one-out subset
//! SNR until removal stops paying.

use serde::{Deserialize, Serialize};

use crate::baseline::index_randomize;
use crate::error::{AuditError, Result};
use crate::features::{label_dataset, FeatureSet};
use crate::metrics::curve_for;
use crate::trace::Dataset;
use crate::util::derive_seed;

/// Sentinel-aware SNR for one feature or feature set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateStats {
    pub name: String,
    pub real_mean: f64,
    pub randomized_mean: f64,
    /// real_mean / randomized_mean; infinite when the feature never fires
    /// on randomized data but does on real data.
    pub snr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EliminationStep {
    pub removed: String,
    /// SNR of the surviving subset after the removal.
    pub subset_snr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    /// All candidates with their singleton statistics, SNR-descending.
    pub candidates: Vec<CandidateStats>,
    /// Noise threshold actually applied.
    pub tau: f64,
    /// Candidates retained after the tau cut, SNR-descending (d').
    pub retained: Vec<String>,
    pub elimination_trace: Vec<EliminationStep>,
    /// Final feature set F.
    pub final_set: Vec<String>,
    pub warmup: usize,
    pub trials: usize,
    pub seed: u64,
}

fn snr_of(real_mean: f64, randomized_mean: f64) -> f64 {
    if randomized_mean == 0.0 {
        if real_mean == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        real_mean / randomized_mean
    }
}

/// Pre-generated randomized copies of the dataset; shared across every
/// candidate and subset so SNR comparisons see the same noise draws.
pub struct RandomizedTrials {
    datasets: Vec<Dataset>,
}

impl RandomizedTrials {
    pub fn generate(dataset: &Dataset, trials: usize, seed: u64) -> Result<Self> {
        assert!(trials >= 1, "trials must be >= 1");
        let datasets = (0..trials)
            .map(|t| index_randomize(dataset, derive_seed(seed, 0x5e1 + t as u64)))
            .collect::<Result<_>>()?;
        Ok(RandomizedTrials { datasets })
    }

    pub fn len(&self) -> usize {
        self.datasets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.datasets.is_empty()
    }

    /// Mean exploit fraction of a feature set over the trials, past warmup.
    fn mean_for(&self, features: &FeatureSet, w: usize, warmup: usize) -> Result<f64> {
        let mut acc = 0.0;
        for ds in &self.datasets {
            let labels = label_dataset(ds, features);
            acc += curve_for(&labels, w)?.post_warmup_mean(warmup);
        }
        Ok(acc / self.datasets.len() as f64)
    }
}

fn real_mean_for(dataset: &Dataset, features: &FeatureSet, w: usize, warmup: usize) -> Result<f64> {
    let labels = label_dataset(dataset, features);
    Ok(curve_for(&labels, w)?.post_warmup_mean(warmup))
}

/// Singleton SNR of one feature: mean exploit fraction past `warmup` on the
/// real data divided by the same mean on the randomized trials.
pub fn feature_snr(
    name: &str,
    catalogue: &FeatureSet,
    dataset: &Dataset,
    trials: &RandomizedTrials,
    w: usize,
    warmup: usize,
) -> Result<CandidateStats> {
    let singleton = catalogue.subset([name])?;
    let real_mean = real_mean_for(dataset, &singleton, w, warmup)?;
    let randomized_mean = trials.mean_for(&singleton, w, warmup)?;
    Ok(CandidateStats { name: name.to_string(), real_mean, randomized_mean, snr: snr_of(real_mean, randomized_mean) })
}

fn sort_by_snr(stats: &mut [CandidateStats]) {
    stats.sort_by(|a, b| {
        b.snr
            .total_cmp(&a.snr)
            .then_with(|| b.real_mean.total_cmp(&a.real_mean))
            .then_with(|| a.name.cmp(&b.name))
    });
}

/// Ranks every candidate by singleton SNR and applies the tau retention
/// cut. `tau = None` mechanizes the threshold as mean + 1 stddev of the
/// candidates' randomized means.
pub fn rank_candidates(
    candidates: &FeatureSet,
    dataset: &Dataset,
    trials: &RandomizedTrials,
    w: usize,
    warmup: usize,
    tau: Option<f64>,
) -> Result<(Vec<CandidateStats>, f64, Vec<String>)> {
    assert!(!candidates.is_empty(), "candidate set must be non-empty");
    let mut stats = Vec::with_capacity(candidates.len());
    for name in candidates.names() {
        stats.push(feature_snr(&name, candidates, dataset, trials, w, warmup)?);
    }
    sort_by_snr(&mut stats);

    let tau = match tau {
        Some(t) => t,
        None => {
            let means: Vec<f64> = stats.iter().map(|s| s.randomized_mean).collect();
            let mean = means.iter().sum::<f64>() / means.len() as f64;
            let var = means.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / means.len() as f64;
            mean + var.sqrt()
        }
    };
    if tau <= 0.0 {
        return Err(AuditError::Config(format!("tau must be positive, got {tau}")));
    }
    let retained: Vec<String> = stats
        .iter()
        .filter(|s| s.randomized_mean < tau)
        .map(|s| s.name.clone())
        .collect();
    if retained.is_empty() {
        return Err(AuditError::EmptyRetention { tau });
    }
    Ok((stats, tau, retained))
}

/// Recursive backward elimination over leave-one-out subsets.
///
/// Each round evaluates every subset missing one feature under the
/// ANY-activation rule, removes the feature whose absence yields the
/// highest subset SNR, and stops when the best removal no longer improves
/// SNR by `epsilon` (relative) or a single feature remains. The final size
/// is emergent, not prescribed.
pub fn backward_eliminate(
    retained: &[String],
    catalogue: &FeatureSet,
    dataset: &Dataset,
    trials: &RandomizedTrials,
    w: usize,
    warmup: usize,
    epsilon: f64,
) -> Result<(Vec<EliminationStep>, Vec<String>)> {
    if retained.len() < 2 {
        return Err(AuditError::TooFewRetained(retained.len()));
    }
    let mut current: Vec<String> = retained.to_vec();
    let mut trace = Vec::new();

    let set = catalogue.subset(current.iter().map(|s| s.as_str()))?;
    let mut current_snr = snr_of(
        real_mean_for(dataset, &set, w, warmup)?,
        trials.mean_for(&set, w, warmup)?,
    );

    while current.len() > 1 {
        let mut best: Option<(String, f64)> = None;
        for drop in &current {
            let names: Vec<&str> =
                current.iter().filter(|n| *n != drop).map(|s| s.as_str()).collect();
            let subset = catalogue.subset(names)?;
            let snr = snr_of(
                real_mean_for(dataset, &subset, w, warmup)?,
                trials.mean_for(&subset, w, warmup)?,
            );
            let better = match &best {
                None => true,
                Some((bd, bs)) => snr > *bs || (snr == *bs && drop < bd),
            };
            if better {
                best = Some((drop.clone(), snr));
            }
        }
        let (drop, snr) = best.expect("current is non-empty");
        // relative improvement over the current set's SNR; an already
        // infinite SNR cannot be improved on
        let improved =
            current_snr.is_finite() && snr > current_snr && snr >= current_snr * (1.0 + epsilon);
        if !improved {
            break;
        }
        current.retain(|n| n != &drop);
        trace.push(EliminationStep { removed: drop, subset_snr: snr });
        current_snr = snr;
    }
    Ok((trace, current))
}

/// Full selection pass: rank, cut at tau, then backward-eliminate.
#[allow(clippy::too_many_arguments)]
pub fn select_features(
    candidates: &FeatureSet,
    dataset: &Dataset,
    w: usize,
    warmup: usize,
    trials: usize,
    tau: Option<f64>,
    epsilon: f64,
    seed: u64,
) -> Result<SelectionReport> {
    let shared = RandomizedTrials::generate(dataset, trials, seed)?;
    let (stats, tau, retained) = rank_candidates(candidates, dataset, &shared, w, warmup, tau)?;
    let (trace, final_set) = if retained.len() >= 2 {
        backward_eliminate(&retained, candidates, dataset, &shared, w, warmup, epsilon)?
    } else {
        (Vec::new(), retained.clone())
    };
    Ok(SelectionReport {
        candidates: stats,
        tau,
        retained,
        elimination_trace: trace,
        final_set,
        warmup,
        trials,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::CATALOGUE_NAMES;
    use crate::simulate::{generate_cohort, BotPolicy, PlatformConfig};

    fn planted_likes_cohort() -> Dataset {
        let platform = PlatformConfig {
            exploit_rate: 0.5,
            basis_weights: [1.0, 0.0, 0.0],
            seed: 17,
            ..Default::default()
        };
        let policies = vec![("bot4".to_string(), BotPolicy::by_name("bot4").unwrap())];
        let (ds, _) = generate_cohort(&policies, &platform, 6, 150, 21).unwrap();
        ds
    }

    #[test]
    fn snr_sentinels() {
        assert_eq!(snr_of(0.0, 0.0), 0.0);
        assert_eq!(snr_of(0.4, 0.0), f64::INFINITY);
        assert_eq!(snr_of(0.4, 0.2), 2.0);
    }

    #[test]
    fn constant_feature_has_unit_snr() {
        // inferred_interests_global with fixed interests fires identically on
        // real and randomized data (interests stay with the user).
        let mut ds = planted_likes_cohort();
        for t in ds.timelines.values_mut() {
            // make it fire on roughly half the items
            t.popular_interests =
                (0..2000).step_by(2).map(|k| format!("#t{k}")).collect();
        }
        let catalogue = FeatureSet::catalogue(20);
        let trials = RandomizedTrials::generate(&ds, 3, 5).unwrap();
        let stats =
            feature_snr("inferred_interests_global", &catalogue, &ds, &trials, 20, 40).unwrap();
        assert!(stats.randomized_mean > 0.0);
        assert!((stats.snr - 1.0).abs() < 0.25, "snr = {}", stats.snr);
    }

    #[test]
    fn planted_likes_rank_above_generic_and_shares() {
        let ds = planted_likes_cohort();
        let catalogue = FeatureSet::catalogue(20);
        let trials = RandomizedTrials::generate(&ds, 4, 5).unwrap();
        let likes =
            feature_snr("likes_hashtag_local", &catalogue, &ds, &trials, 20, 40).unwrap();
        let generic =
            feature_snr("generic_hashtag_local", &catalogue, &ds, &trials, 20, 40).unwrap();
        assert!(
            likes.snr > generic.snr,
            "likes {} <= generic {}",
            likes.snr,
            generic.snr
        );
        // shares features never fire: zero on both sides
        let shares =
            feature_snr("shares_hashtag_local", &catalogue, &ds, &trials, 20, 40).unwrap();
        assert_eq!(shares.real_mean, 0.0);
        assert_eq!(shares.snr, 0.0);
    }

    #[test]
    fn vacuous_tau_retains_everything_that_fires() {
        let ds = planted_likes_cohort();
        let catalogue = FeatureSet::catalogue(20);
        let trials = RandomizedTrials::generate(&ds, 3, 5).unwrap();
        let (stats, _, retained) =
            rank_candidates(&catalogue, &ds, &trials, 20, 40, Some(1.0)).unwrap();
        assert_eq!(stats.len(), CATALOGUE_NAMES.len());
        assert_eq!(retained.len(), CATALOGUE_NAMES.len());
        // ranked descending
        for pair in stats.windows(2) {
            assert!(pair[0].snr >= pair[1].snr);
        }
    }

    #[test]
    fn noise_only_feature_removed_first() {
        let ds = planted_likes_cohort();
        let catalogue = FeatureSet::catalogue(20);
        let trials = RandomizedTrials::generate(&ds, 3, 5).unwrap();
        // generic_hashtag_local is pure noise here; likes_hashtag_local is
        // the planted signal. Dropping the noise feature must win round 1.
        let retained = vec![
            "likes_hashtag_local".to_string(),
            "generic_hashtag_local".to_string(),
        ];
        let (trace, final_set) =
            backward_eliminate(&retained, &catalogue, &ds, &trials, 20, 40, 0.01).unwrap();
        assert_eq!(trace.first().map(|s| s.removed.as_str()), Some("generic_hashtag_local"));
        assert_eq!(final_set, vec!["likes_hashtag_local".to_string()]);
    }

    #[test]
    fn flat_trace_stops_after_first_non_improving_round() {
        let ds = planted_likes_cohort();
        let catalogue = FeatureSet::catalogue(20);
        let trials = RandomizedTrials::generate(&ds, 2, 5).unwrap();
        let retained =
            vec!["likes_hashtag_local".to_string(), "likes_creator_local".to_string()];
        let (trace, final_set) =
            backward_eliminate(&retained, &catalogue, &ds, &trials, 20, 40, 10.0).unwrap();
        // with a huge epsilon nothing improves enough; both survive
        assert!(trace.is_empty());
        assert_eq!(final_set.len(), 2);
    }

    #[test]
    fn deterministic_given_seed() {
        let ds = planted_likes_cohort();
        let catalogue = FeatureSet::catalogue(20);
        let a = select_features(&catalogue, &ds, 20, 40, 3, None, 0.01, 11).unwrap();
        let b = select_features(&catalogue, &ds, 20, 40, 3, None, 0.01, 11).unwrap();
        assert_eq!(a, b);
    }
}
