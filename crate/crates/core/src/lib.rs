//! Recommender-feed personalization audit engine.
//!
//! Given line-delimited view traces, the library labels each recommendation
//! as explore or exploit against a catalogue of interest-matching features,
//! tracks mean exploit fractions over time, compares them with an
//! index-randomized noise floor, scores per-item personalization by virtual
//! insertion into other users' timelines, and attributes personalization to
//! engagement factors. A seeded synthetic platform with ground-truth planted
//! exploits backs validation end to end.

pub mod baseline;
pub mod clustering;
pub mod config;
pub mod embedding;
pub mod error;
pub mod factors;
pub mod features;
pub mod formats;
pub mod metrics;
pub mod pipeline;
pub mod preprocess;
pub mod selection;
pub mod simulate;
pub mod stats;
pub mod trace;
pub mod util;

pub use baseline::{index_randomize, noise_floor, NoiseFloor};
pub use config::AuditConfig;
pub use error::{AuditError, Result};
pub use features::{label_dataset, label_timeline, FeatureSet, Label, LabeledTimeline};
pub use metrics::{curve_for, personalization_score, score_dataset, MeanExploitCurve, ScoredItem};
pub use pipeline::{run_pipeline, PipelineSummary};
pub use selection::{select_features, SelectionReport};
pub use simulate::{generate_cohort, run_bot, BotPolicy, GroundTruth, PlatformConfig};
pub use trace::{parse_traces, Dataset, RecommendationEvent, UserTimeline};
