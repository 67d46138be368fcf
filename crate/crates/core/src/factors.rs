//! Engagement-factor attribution: per-user factor vectors, top/bottom
//! quartile grouping by mean exploit fraction, significance tests, and
//! impact categorization.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::features::{Label, LabeledTimeline};
use crate::stats::{t_test, TTestResult, TTestVariant};
use crate::trace::UserTimeline;

/// The four engagement factors, each in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorVector {
    /// Mean over events of min(watch percentage, 1.0).
    pub watch_pct: f64,
    /// Fraction of events with dwell under 1 second.
    pub early_skip_rate: f64,
    pub fraction_liked: f64,
    /// Fraction of events whose creator the user followed before viewing.
    pub fraction_from_following: f64,
}

pub const FACTOR_NAMES: [&str; 4] =
    ["watch_pct", "early_skip_rate", "fraction_liked", "fraction_from_following"];

impl FactorVector {
    pub fn by_name(&self, name: &str) -> Option<f64> {
        match name {
            "watch_pct" => Some(self.watch_pct),
            "early_skip_rate" => Some(self.early_skip_rate),
            "fraction_liked" => Some(self.fraction_liked),
            "fraction_from_following" => Some(self.fraction_from_following),
            _ => None,
        }
    }
}

/// Computes the four factors for one timeline. Errors only when no event
/// carries a positive video duration (watch_pct undefined).
pub fn compute_factors(timeline: &UserTimeline) -> Result<FactorVector> {
    let n = timeline.len();
    if n == 0 {
        return Err(AuditError::NoDurations);
    }
    let mut pct_sum = 0.0;
    let mut pct_n = 0usize;
    let mut early = 0usize;
    let mut liked = 0usize;
    let mut from_following = 0usize;
    for e in &timeline.events {
        if e.video_duration_s > 0.0 {
            pct_sum += (e.watch_duration_s / e.video_duration_s).min(1.0);
            pct_n += 1;
        }
        if e.watch_duration_s < 1.0 {
            early += 1;
        }
        if e.liked {
            liked += 1;
        }
        if e.followed_creator && e.followed_ts.is_none_or(|t| t < e.view_ts) {
            from_following += 1;
        }
    }
    if pct_n == 0 {
        return Err(AuditError::NoDurations);
    }
    Ok(FactorVector {
        watch_pct: pct_sum / pct_n as f64,
        early_skip_rate: early as f64 / n as f64,
        fraction_liked: liked as f64 / n as f64,
        fraction_from_following: from_following as f64 / n as f64,
    })
}

/// Mean user exploit fraction: exploit labels / total labels.
pub fn mean_user_exploit_fraction(labeled: &LabeledTimeline) -> f64 {
    if labeled.is_empty() {
        return 0.0;
    }
    labeled.labels.iter().filter(|l| **l == Label::Exploit).count() as f64
        / labeled.len() as f64
}

/// Top and bottom quartile user groups (size ceil(m/4), ties by user id).
pub fn quartile_groups(
    per_user_exploit: &BTreeMap<String, f64>,
) -> Result<(Vec<String>, Vec<String>)> {
    let m = per_user_exploit.len();
    if m < 4 {
        return Err(AuditError::TooFewUsers(m));
    }
    let mut users: Vec<(&String, f64)> =
        per_user_exploit.iter().map(|(u, f)| (u, *f)).collect();
    users.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let q = m.div_ceil(4);
    let tq: Vec<String> = users[..q].iter().map(|(u, _)| (*u).clone()).collect();
    let bq: Vec<String> = users[m - q..].iter().map(|(u, _)| (*u).clone()).collect();
    Ok((tq, bq))
}

/// Impact level of a factor from its p-value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ImpactLevel {
    High,
    Medium,
    Low,
}

impl std::fmt::Display for ImpactLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ImpactLevel::High => write!(f, "High"),
            ImpactLevel::Medium => write!(f, "Medium"),
            ImpactLevel::Low => write!(f, "Low"),
        }
    }
}

pub fn impact_level(p: f64) -> ImpactLevel {
    assert!((0.0..=1.0).contains(&p), "p outside [0, 1]");
    if p < 1e-3 {
        ImpactLevel::High
    } else if p < 0.05 {
        ImpactLevel::Medium
    } else {
        ImpactLevel::Low
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorRow {
    pub factor: String,
    pub bq_mean: f64,
    pub tq_mean: f64,
    pub t: f64,
    pub p: f64,
    pub impact: ImpactLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorReport {
    pub rows: Vec<FactorRow>,
    pub tq: Vec<String>,
    pub bq: Vec<String>,
    pub variant: TTestVariant,
    /// Per-user factor vectors, for external distribution plots.
    pub per_user: BTreeMap<String, FactorVector>,
}

/// Builds the full factor report: groups by mean exploit fraction, then a
/// TQ-vs-BQ t-test per factor.
pub fn factor_report(
    timelines: &BTreeMap<String, UserTimeline>,
    labels: &BTreeMap<String, LabeledTimeline>,
    variant: TTestVariant,
    group_size_override: Option<usize>,
) -> Result<FactorReport> {
    let per_user_exploit: BTreeMap<String, f64> = labels
        .iter()
        .map(|(u, l)| (u.clone(), mean_user_exploit_fraction(l)))
        .collect();
    let (mut tq, mut bq) = quartile_groups(&per_user_exploit)?;
    if let Some(size) = group_size_override {
        if size == 0 || size * 2 > per_user_exploit.len() {
            return Err(AuditError::Config(format!(
                "group size override {size} does not fit {} users",
                per_user_exploit.len()
            )));
        }
        // groups are sorted extreme-first, so truncation keeps the most
        // extreme users
        let mut users: Vec<(&String, f64)> =
            per_user_exploit.iter().map(|(u, f)| (u, *f)).collect();
        users.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        tq = users[..size].iter().map(|(u, _)| (*u).clone()).collect();
        bq = users[users.len() - size..].iter().map(|(u, _)| (*u).clone()).collect();
    }

    let mut per_user = BTreeMap::new();
    for (user, timeline) in timelines {
        per_user.insert(user.clone(), compute_factors(timeline)?);
    }

    let mut rows = Vec::new();
    for factor in FACTOR_NAMES {
        let collect = |group: &[String]| -> Vec<f64> {
            group.iter().map(|u| per_user[u].by_name(factor).unwrap()).collect()
        };
        let tq_vals = collect(&tq);
        let bq_vals = collect(&bq);
        let TTestResult { t, p, .. } = t_test(&bq_vals, &tq_vals, variant)?;
        rows.push(FactorRow {
            factor: factor.to_string(),
            bq_mean: bq_vals.iter().sum::<f64>() / bq_vals.len() as f64,
            tq_mean: tq_vals.iter().sum::<f64>() / tq_vals.len() as f64,
            t,
            p,
            impact: impact_level(p),
        });
    }
    Ok(FactorReport { rows, tq, bq, variant, per_user })
}
