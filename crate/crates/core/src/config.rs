//! Flat key-value run configuration.
//!
//! The config file is line-oriented `key = value`; `#` starts a comment.
//! Unknown keys are hard errors so typos surface before a long audit run.

use std::io::BufRead;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::features::DEFAULT_FEATURE_NAMES;
use crate::preprocess::DEFAULT_STOPLIST;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    /// Prefix length: events per user after truncation.
    pub n: usize,
    /// Trailing exploit-fraction window.
    pub w: usize,
    /// Popular-interest radius (top-X TF-IDF hashtags).
    pub x: usize,
    /// Reserved second interest radius; kept equal to `x` by default.
    pub y: usize,
    /// Feature names from the catalogue.
    pub features: Vec<String>,
    /// Retention threshold for feature selection; None = data-driven default.
    pub tau: Option<f64>,
    /// Randomized-baseline trial count.
    pub trials: usize,
    /// Cluster-join cosine threshold.
    pub sigma: f64,
    /// Generic-hashtag removal threshold (fraction of a user's events).
    pub per_user_fraction: f64,
    /// Extra stoplist file, one hashtag per line; merged with the built-ins.
    pub stoplist: Option<PathBuf>,
    pub seed: u64,
    /// Score at most this many destination users per item (None = all).
    pub score_sample_size: Option<usize>,
    pub embed_dim: usize,
    pub embed_epochs: usize,
    pub embed_min_count: usize,
    pub embed_window: usize,
    /// Run backward feature elimination inside the pipeline.
    pub select: bool,
    /// Worker threads; 0 = library default.
    pub threads: usize,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            n: 1000,
            w: 50,
            x: 25,
            y: 25,
            features: DEFAULT_FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            tau: None,
            trials: 10,
            sigma: 0.70,
            per_user_fraction: 0.5,
            stoplist: None,
            seed: 0,
            score_sample_size: None,
            embed_dim: 100,
            embed_epochs: 5,
            embed_min_count: 10,
            embed_window: 7,
            select: false,
            threads: 0,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| AuditError::Config(format!("bad value for {key}: {value:?}")))
}

impl AuditConfig {
    pub fn validate(&self) -> Result<()> {
        if self.w < 1 {
            return Err(AuditError::Config("w must be >= 1".into()));
        }
        if self.n <= self.w {
            return Err(AuditError::Config(format!(
                "n ({}) must exceed w ({})",
                self.n, self.w
            )));
        }
        if self.x < 1 || self.y < 1 {
            return Err(AuditError::Config("x and y must be >= 1".into()));
        }
        if !(0.0 < self.sigma && self.sigma < 1.0) {
            return Err(AuditError::Config(format!("sigma {} outside (0, 1)", self.sigma)));
        }
        if !(0.0 < self.per_user_fraction && self.per_user_fraction <= 1.0) {
            return Err(AuditError::Config(format!(
                "per_user_fraction {} outside (0, 1]",
                self.per_user_fraction
            )));
        }
        if self.trials == 0 {
            return Err(AuditError::Config("trials must be >= 1".into()));
        }
        if self.features.is_empty() {
            return Err(AuditError::Config("feature list is empty".into()));
        }
        if self.embed_dim == 0 || self.embed_epochs == 0 || self.embed_window == 0 {
            return Err(AuditError::Config("embedding parameters must be positive".into()));
        }
        if let Some(path) = &self.stoplist {
            if !path.exists() {
                return Err(AuditError::Config(format!(
                    "stoplist file not found: {}",
                    path.display()
                )));
            }
        }
        if let Some(s) = self.score_sample_size {
            if s == 0 {
                return Err(AuditError::Config("score_sample_size must be >= 1".into()));
            }
        }
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "n" => self.n = parse_num(key, value)?,
            "w" => self.w = parse_num(key, value)?,
            "x" => self.x = parse_num(key, value)?,
            "y" => self.y = parse_num(key, value)?,
            "features" => {
                self.features = value
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect();
            }
            "tau" => {
                self.tau = if value == "auto" { None } else { Some(parse_num(key, value)?) };
            }
            "trials" => self.trials = parse_num(key, value)?,
            "sigma" => self.sigma = parse_num(key, value)?,
            "per_user_fraction" => self.per_user_fraction = parse_num(key, value)?,
            "stoplist" => self.stoplist = Some(PathBuf::from(value)),
            "seed" => self.seed = parse_num(key, value)?,
            "score_sample_size" => {
                self.score_sample_size =
                    if value == "all" { None } else { Some(parse_num(key, value)?) };
            }
            "embed_dim" => self.embed_dim = parse_num(key, value)?,
            "embed_epochs" => self.embed_epochs = parse_num(key, value)?,
            "embed_min_count" => self.embed_min_count = parse_num(key, value)?,
            "embed_window" => self.embed_window = parse_num(key, value)?,
            "select" => self.select = parse_num(key, value)?,
            "threads" => self.threads = parse_num(key, value)?,
            _ => return Err(AuditError::Config(format!("unknown config key: {key}"))),
        }
        Ok(())
    }

    pub fn parse(reader: impl BufRead) -> Result<Self> {
        let mut config = AuditConfig::default();
        for (line_no, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| AuditError::io("reading config", e))?;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                AuditError::Config(format!("line {}: expected key = value", line_no + 1))
            })?;
            config.set(key.trim(), value.trim())?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| AuditError::io(format!("opening config {}", path.display()), e))?;
        let mut config = Self::parse(std::io::BufReader::new(file))?;
        // stoplist path is relative to the config file
        if let Some(sl) = &config.stoplist {
            if sl.is_relative() {
                if let Some(dir) = path.parent() {
                    config.stoplist = Some(dir.join(sl));
                }
            }
        }
        config.validate()?;
        Ok(config)
    }

    /// Stoplist = built-ins plus the optional extra file.
    pub fn stoplist_tags(&self) -> Result<Vec<String>> {
        let mut tags: Vec<String> = DEFAULT_STOPLIST.iter().map(|s| s.to_string()).collect();
        if let Some(path) = &self.stoplist {
            let text = std::fs::read_to_string(path)
                .map_err(|e| AuditError::io(format!("reading stoplist {}", path.display()), e))?;
            for line in text.lines() {
                let t = line.trim();
                if !t.is_empty() && !t.starts_with("//") {
                    tags.push(t.to_string());
                }
            }
        }
        tags.sort();
        tags.dedup();
        Ok(tags)
    }

    /// Canonical `key = value` rendering, used in provenance headers.
    /// `threads` is execution plumbing that never changes results, so it is
    /// omitted to keep outputs byte-identical across worker counts.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut push = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        push("n", self.n.to_string());
        push("w", self.w.to_string());
        push("x", self.x.to_string());
        push("y", self.y.to_string());
        push("features", self.features.join(","));
        push("tau", self.tau.map_or("auto".into(), |t| format!("{t}")));
        push("trials", self.trials.to_string());
        push("sigma", format!("{}", self.sigma));
        push("per_user_fraction", format!("{}", self.per_user_fraction));
        if let Some(p) = &self.stoplist {
            push("stoplist", p.display().to_string());
        }
        push("seed", self.seed.to_string());
        push(
            "score_sample_size",
            self.score_sample_size.map_or("all".into(), |s| s.to_string()),
        );
        push("embed_dim", self.embed_dim.to_string());
        push("embed_epochs", self.embed_epochs.to_string());
        push("embed_min_count", self.embed_min_count.to_string());
        push("embed_window", self.embed_window.to_string());
        push("select", self.select.to_string());
        out
    }
}
