//! `feed-audit`: batch auditor for recommendation feed traces.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use feed_audit_core::baseline::noise_floor;
use feed_audit_core::clustering::cluster_hashtags;
use feed_audit_core::config::AuditConfig;
use feed_audit_core::embedding::train_cbow;
use feed_audit_core::error::AuditError;
use feed_audit_core::factors::factor_report;
use feed_audit_core::features::{label_dataset, FeatureSet};
use feed_audit_core::formats::{
    read_labels, write_curve, write_floor, write_ground_truth, write_interests, write_labels,
    write_scores, Provenance,
};
use feed_audit_core::metrics::{curve_for, score_dataset};
use feed_audit_core::pipeline::run_pipeline;
use feed_audit_core::preprocess::{
    assign_interests, canonicalize, filter_generic_hashtags, hashtag_corpus,
    hashtags_by_frequency,
};
use feed_audit_core::selection::select_features;
use feed_audit_core::simulate::{generate_cohort, BotPolicy, PlatformConfig};
use feed_audit_core::stats::TTestVariant;
use feed_audit_core::trace::{emit_traces, parse_traces, Dataset};
use feed_audit_core::util::derive_seed;

#[derive(Parser)]
#[command(name = "feed-audit", version, about = "Personalization auditor for feed traces")]
struct Cli {
    /// Run configuration file (flat key = value).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed override; takes precedence over the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker-thread cap; 0 = library default. Results never depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a trace file and report parse statistics.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        /// Abort on the first malformed line instead of skipping it.
        #[arg(long)]
        strict: bool,
    },
    /// Prefix, filter generic hashtags, cluster, canonicalize, and infer interests.
    Preprocess {
        #[arg(long)]
        input: PathBuf,
        /// Canonicalized trace output.
        #[arg(long)]
        output: PathBuf,
        /// Inferred-interest table (user_id TAB hashtags).
        #[arg(long)]
        interests: Option<PathBuf>,
        /// Embedding text output.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Clustering map output.
        #[arg(long)]
        clusters: Option<PathBuf>,
    },
    /// Label every recommendation explore/exploit.
    Label {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Mean exploit-fraction curve from a label table.
    Metrics {
        /// Label table produced by `label`.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Per-item personalization scores.
    Score {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Index-randomized noise floor.
    Baseline {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Generate a synthetic bot cohort with ground truth.
    Simulate {
        /// Policy name: bot1..bot5.
        #[arg(long)]
        policy: String,
        #[arg(long, default_value_t = 1)]
        bots: usize,
        #[arg(long, default_value_t = 1000)]
        steps: usize,
        /// Probability of an exploit (personalized) recommendation.
        #[arg(long, default_value_t = 0.5)]
        exploit_rate: f64,
        #[arg(long)]
        output: PathBuf,
        /// Ground-truth sidecar output.
        #[arg(long)]
        ground_truth: Option<PathBuf>,
    },
    /// Rank candidate features against randomized floors and eliminate.
    SelectFeatures {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Quartile factor analysis of engagement behavior.
    Factors {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Use Welch's t-test instead of Student's.
        #[arg(long)]
        welch: bool,
    },
    /// Run the full pipeline and assemble the report bundle.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn load_config(cli: &Cli) -> Result<AuditConfig> {
    let mut config = match &cli.config {
        Some(path) => AuditConfig::load(path)
            .with_context(|| format!("loading config {}", path.display()))?,
        None => AuditConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if cli.threads != 0 {
        config.threads = cli.threads;
    }
    Ok(config)
}

fn read_dataset(path: &Path) -> Result<Dataset> {
    let file =
        File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let (dataset, _) = parse_traces(BufReader::new(file), false)?;
    if dataset.m() == 0 {
        bail!("no parseable trace records in {}", path.display());
    }
    Ok(dataset)
}

fn writer(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

/// Preprocessed dataset ready for labeling: prefixed, filtered,
/// canonicalized (when the corpus supports embeddings), with interests.
fn prepare(dataset: &Dataset, config: &AuditConfig) -> Result<Dataset> {
    let (prefixed, _) = dataset.take_prefix(config.n)?;
    if prefixed.m() == 0 {
        bail!("no user has {} events; lower `n`", config.n);
    }
    let stoplist: BTreeSet<String> = config.stoplist_tags()?.into_iter().collect();
    let filtered = filter_generic_hashtags(&prefixed, &stoplist, config.per_user_fraction)?;
    let corpus = hashtag_corpus(&filtered);
    let canonical = if corpus.iter().any(|s| !s.is_empty()) {
        match train_cbow(
            &corpus,
            config.embed_min_count,
            config.embed_window,
            config.embed_dim,
            config.embed_epochs,
            derive_seed(config.seed, 0xe3bed),
        ) {
            Ok(emb) => {
                let clustering =
                    cluster_hashtags(&emb, &hashtags_by_frequency(&filtered), config.sigma)?;
                canonicalize(&filtered, &clustering)
            }
            Err(AuditError::EmptyVocabulary { .. }) => filtered,
            Err(e) => return Err(e.into()),
        }
    } else {
        filtered
    };
    Ok(assign_interests(&canonical, config.x))
}

fn run(cli: Cli) -> Result<()> {
    let config = load_config(&cli)?;
    if config.threads != 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build_global()
            .context("configuring thread pool")?;
    }
    let prov = Provenance { seed: config.seed, config: config.render() };

    match cli.command {
        Command::Ingest { input, strict } => {
            let file = File::open(&input)
                .with_context(|| format!("opening {}", input.display()))?;
            let (dataset, report) = parse_traces(BufReader::new(file), strict)?;
            println!(
                "users = {}, records = {}, skipped = {}, duplicates = {}",
                dataset.m(),
                report.lines_total - report.lines_skipped - report.duplicates_dropped,
                report.lines_skipped,
                report.duplicates_dropped
            );
        }
        Command::Preprocess { input, output, interests, embeddings, clusters } => {
            let raw = read_dataset(&input)?;
            let (prefixed, _) = raw.take_prefix(config.n)?;
            if prefixed.m() == 0 {
                bail!("no user has {} events; lower `n`", config.n);
            }
            let stoplist: BTreeSet<String> = config.stoplist_tags()?.into_iter().collect();
            let filtered =
                filter_generic_hashtags(&prefixed, &stoplist, config.per_user_fraction)?;
            let corpus = hashtag_corpus(&filtered);
            let canonical = if corpus.iter().any(|s| !s.is_empty()) {
                match train_cbow(
                    &corpus,
                    config.embed_min_count,
                    config.embed_window,
                    config.embed_dim,
                    config.embed_epochs,
                    derive_seed(config.seed, 0xe3bed),
                ) {
                    Ok(emb) => {
                        if let Some(path) = &embeddings {
                            emb.save(writer(path)?)?;
                        }
                        let clustering = cluster_hashtags(
                            &emb,
                            &hashtags_by_frequency(&filtered),
                            config.sigma,
                        )?;
                        if let Some(path) = &clusters {
                            clustering.save(writer(path)?)?;
                        }
                        canonicalize(&filtered, &clustering)
                    }
                    Err(AuditError::EmptyVocabulary { .. }) => {
                        eprintln!("corpus too sparse for embeddings; hashtags left as-is");
                        filtered
                    }
                    Err(e) => return Err(e.into()),
                }
            } else {
                filtered
            };
            let prepared = assign_interests(&canonical, config.x);
            emit_traces(&prepared, writer(&output)?)?;
            if let Some(path) = interests {
                let table: BTreeMap<String, Vec<String>> = prepared
                    .timelines
                    .iter()
                    .map(|(u, t)| (u.clone(), t.popular_interests.iter().cloned().collect()))
                    .collect();
                write_interests(writer(&path)?, &table, &prov)?;
            }
            println!("preprocessed {} users into {}", prepared.m(), output.display());
        }
        Command::Label { input, output } => {
            let dataset = prepare(&read_dataset(&input)?, &config)?;
            let features = FeatureSet::from_names(
                config.features.iter().map(String::as_str),
                config.w,
            )?;
            let labels = label_dataset(&dataset, &features);
            let video_ids: BTreeMap<String, Vec<String>> = dataset
                .timelines
                .iter()
                .map(|(u, t)| {
                    (u.clone(), t.events.iter().map(|e| e.video_id.clone()).collect())
                })
                .collect();
            write_labels(writer(&output)?, &labels, &video_ids, &prov)?;
            println!("labeled {} users into {}", labels.len(), output.display());
        }
        Command::Metrics { labels, output } => {
            let Some(labels_path) = labels else {
                bail!("metrics needs a label table; run `feed-audit label` first and pass --labels");
            };
            let file = File::open(&labels_path).with_context(|| {
                format!(
                    "opening {}; run `feed-audit label` first",
                    labels_path.display()
                )
            })?;
            let (labels, _) = read_labels(BufReader::new(file))?;
            let curve = curve_for(&labels, config.w)?;
            write_curve(writer(&output)?, &curve, &prov)?;
            println!(
                "curve over {} users, post-warmup mean = {:.4}",
                curve.m,
                curve.post_warmup_mean(2 * config.w)
            );
        }
        Command::Score { input, output } => {
            let dataset = prepare(&read_dataset(&input)?, &config)?;
            let features = FeatureSet::from_names(
                config.features.iter().map(String::as_str),
                config.w,
            )?;
            let labels = label_dataset(&dataset, &features);
            let scores = score_dataset(
                &dataset,
                &labels,
                &features,
                config.score_sample_size,
                derive_seed(config.seed, 0x5c0e),
            )?;
            write_scores(writer(&output)?, &scores, &prov)?;
            println!("scored {} items into {}", scores.len(), output.display());
        }
        Command::Baseline { input, trials, output } => {
            let dataset = prepare(&read_dataset(&input)?, &config)?;
            let features = FeatureSet::from_names(
                config.features.iter().map(String::as_str),
                config.w,
            )?;
            let trials = trials.unwrap_or(config.trials);
            let floor = noise_floor(
                &dataset,
                &features,
                config.w,
                trials,
                derive_seed(config.seed, 0xf100),
            )?;
            write_floor(writer(&output)?, &floor, &prov)?;
            println!(
                "noise floor over {trials} trials, post-warmup mean = {:.4}",
                floor.post_warmup_mean(2 * config.w)
            );
        }
        Command::Simulate { policy, bots, steps, exploit_rate, output, ground_truth } => {
            let platform = PlatformConfig {
                exploit_rate,
                seed: config.seed,
                ..PlatformConfig::default()
            };
            let policies = vec![(policy.clone(), BotPolicy::by_name(&policy)?)];
            let (dataset, truth) =
                generate_cohort(&policies, &platform, bots, steps, config.seed)?;
            emit_traces(&dataset, writer(&output)?)?;
            if let Some(path) = ground_truth {
                write_ground_truth(writer(&path)?, &truth, &prov)?;
            }
            println!(
                "simulated {bots} x {policy} for {steps} steps into {}",
                output.display()
            );
        }
        Command::SelectFeatures { input, output } => {
            let dataset = prepare(&read_dataset(&input)?, &config)?;
            let candidates = FeatureSet::catalogue(config.w);
            let warmup = (2 * config.w).min(config.n.saturating_sub(1));
            let report = select_features(
                &candidates,
                &dataset,
                config.w,
                warmup,
                config.trials,
                config.tau,
                0.01,
                derive_seed(config.seed, 0x5e1ec7),
            )?;
            let mut w = writer(&output)?;
            serde_json::to_writer_pretty(&mut w, &report)?;
            writeln!(w)?;
            println!("final set: {}", report.final_set.join(", "));
        }
        Command::Factors { input, output, welch } => {
            let dataset = prepare(&read_dataset(&input)?, &config)?;
            let features = FeatureSet::from_names(
                config.features.iter().map(String::as_str),
                config.w,
            )?;
            let labels = label_dataset(&dataset, &features);
            let variant = if welch { TTestVariant::Welch } else { TTestVariant::Student };
            let report = factor_report(&dataset.timelines, &labels, variant, None)?;
            let mut w = writer(&output)?;
            serde_json::to_writer_pretty(&mut w, &report)?;
            writeln!(w)?;
            for row in &report.rows {
                println!("{}: p = {:.3e} ({})", row.factor, row.p, row.impact);
            }
        }
        Command::Report { input, out_dir } => {
            let summary = run_pipeline(&config, &input, &out_dir)?;
            println!(
                "audited {} users; mean exploit {:.4} vs floor {:.4}; bundle in {}",
                summary.users,
                summary.mean_exploit_post_warmup,
                summary.noise_floor_post_warmup,
                out_dir.display()
            );
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
