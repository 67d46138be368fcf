//! On-disk table formats for every pipeline stage.
//!
//! Every file starts with a version line (`# feed-audit <kind> v1`) followed
//! by provenance comments (seed, config) and a column-name line. Readers skip
//! all `#` lines, so provenance never interferes with parsing. Floats are
//! written with Rust's shortest round-trip formatting, which keeps re-reads
//! lossless and outputs byte-stable.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use crate::baseline::NoiseFloor;
use crate::error::{AuditError, Result};
use crate::features::{Label, LabeledTimeline};
use crate::metrics::{MeanExploitCurve, ScoredItem};
use crate::simulate::{ExploitBasis, GroundTruth, PlantedRecord};

/// Provenance written under every version line.
#[derive(Debug, Clone, Default)]
pub struct Provenance {
    pub seed: u64,
    /// Rendered config, one `key = value` per line; empty = omit.
    pub config: String,
}

fn write_header(mut w: impl Write, kind: &str, prov: &Provenance, columns: &str) -> Result<()> {
    let io = |e| AuditError::io(format!("writing {kind} header"), e);
    writeln!(w, "# feed-audit {kind} v1").map_err(io)?;
    writeln!(w, "# seed = {}", prov.seed).map_err(io)?;
    for line in prov.config.lines() {
        writeln!(w, "# config: {line}").map_err(io)?;
    }
    writeln!(w, "{columns}").map_err(io)?;
    Ok(())
}

/// Returns data lines (header comments stripped), verifying the version line.
fn read_lines(reader: impl BufRead, kind: &str) -> Result<Vec<String>> {
    let mut lines = Vec::new();
    let mut saw_version = false;
    for line in reader.lines() {
        let line = line.map_err(|e| AuditError::io(format!("reading {kind}"), e))?;
        if let Some(rest) = line.strip_prefix('#') {
            if rest.trim().starts_with("feed-audit") {
                if !rest.trim().starts_with(&format!("feed-audit {kind} ")) {
                    return Err(AuditError::Format(format!(
                        "expected a {kind} file, found:{rest}"
                    )));
                }
                saw_version = true;
            }
            continue;
        }
        if !line.trim().is_empty() {
            lines.push(line);
        }
    }
    if !saw_version {
        return Err(AuditError::Format(format!("missing {kind} version line")));
    }
    // first remaining line is the column header
    if lines.is_empty() {
        return Err(AuditError::Format(format!("{kind} file has no column line")));
    }
    lines.remove(0);
    Ok(lines)
}

fn parse_label(text: &str) -> Result<Label> {
    match text {
        "explore" => Ok(Label::Explore),
        "exploit" => Ok(Label::Exploit),
        other => Err(AuditError::Format(format!("unknown label: {other}"))),
    }
}

fn field<'a>(parts: &[&'a str], k: usize, kind: &str) -> Result<&'a str> {
    parts
        .get(k)
        .copied()
        .ok_or_else(|| AuditError::Format(format!("short {kind} row")))
}

// ---------------------------------------------------------------- labels --

pub fn write_labels(
    mut w: impl Write,
    labels: &BTreeMap<String, LabeledTimeline>,
    video_ids: &BTreeMap<String, Vec<String>>,
    prov: &Provenance,
) -> Result<()> {
    write_header(&mut w, "labels", prov, "user_id\tindex\tvideo_id\tlabel\tfired")?;
    for (user, lt) in labels {
        let vids = video_ids
            .get(user)
            .ok_or_else(|| AuditError::Format(format!("no video ids for {user}")))?;
        for (k, label) in lt.labels.iter().enumerate() {
            let fired = if lt.fired[k].is_empty() { "-".to_string() } else { lt.fired[k].join(",") };
            writeln!(w, "{user}\t{}\t{}\t{label}\t{fired}", k + 1, vids[k])
                .map_err(|e| AuditError::io("writing labels", e))?;
        }
    }
    Ok(())
}

/// Per-user video-id columns, keyed like the label table.
pub type VideoIdTable = BTreeMap<String, Vec<String>>;

/// Returns labels plus the video-id column (needed to re-emit).
pub fn read_labels(
    reader: impl BufRead,
) -> Result<(BTreeMap<String, LabeledTimeline>, VideoIdTable)> {
    let mut labels: BTreeMap<String, LabeledTimeline> = BTreeMap::new();
    let mut vids: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for line in read_lines(reader, "labels")? {
        let parts: Vec<&str> = line.split('\t').collect();
        let user = field(&parts, 0, "labels")?;
        let index: usize = field(&parts, 1, "labels")?
            .parse()
            .map_err(|_| AuditError::Format(format!("bad index in labels row: {line}")))?;
        let video = field(&parts, 2, "labels")?;
        let label = parse_label(field(&parts, 3, "labels")?)?;
        let fired_text = field(&parts, 4, "labels")?;
        let fired: Vec<String> = if fired_text == "-" {
            Vec::new()
        } else {
            fired_text.split(',').map(str::to_string).collect()
        };
        let lt = labels.entry(user.to_string()).or_insert_with(|| LabeledTimeline {
            user_id: user.to_string(),
            labels: Vec::new(),
            fired: Vec::new(),
        });
        if index != lt.labels.len() + 1 {
            return Err(AuditError::Format(format!(
                "non-contiguous index {index} for {user}"
            )));
        }
        lt.labels.push(label);
        lt.fired.push(fired);
        vids.entry(user.to_string()).or_default().push(video.to_string());
    }
    Ok((labels, vids))
}

// ---------------------------------------------------------------- curves --

pub fn write_curve(mut w: impl Write, curve: &MeanExploitCurve, prov: &Provenance) -> Result<()> {
    write_header(&mut w, "curve", prov, "index,alpha_bar,stddev")?;
    writeln!(w, "# m = {}", curve.m).map_err(|e| AuditError::io("writing curve", e))?;
    for (k, (a, s)) in curve.alpha_bar.iter().zip(&curve.stddev).enumerate() {
        writeln!(w, "{},{a},{s}", k + 1).map_err(|e| AuditError::io("writing curve", e))?;
    }
    Ok(())
}

pub fn read_curve(reader: impl BufRead) -> Result<MeanExploitCurve> {
    let mut curve = MeanExploitCurve { alpha_bar: Vec::new(), stddev: Vec::new(), m: 0 };
    // m travels in a comment; re-scan is cheap for these files
    let mut lines = Vec::new();
    for line in reader.lines() {
        lines.push(line.map_err(|e| AuditError::io("reading curve", e))?);
    }
    for line in &lines {
        if let Some(rest) = line.strip_prefix("# m = ") {
            curve.m = rest
                .trim()
                .parse()
                .map_err(|_| AuditError::Format(format!("bad m line: {line}")))?;
        }
    }
    let joined = lines.join("\n");
    for line in read_lines(std::io::Cursor::new(joined), "curve")? {
        let parts: Vec<&str> = line.split(',').collect();
        let a: f64 = field(&parts, 1, "curve")?
            .parse()
            .map_err(|_| AuditError::Format(format!("bad curve row: {line}")))?;
        let s: f64 = field(&parts, 2, "curve")?
            .parse()
            .map_err(|_| AuditError::Format(format!("bad curve row: {line}")))?;
        curve.alpha_bar.push(a);
        curve.stddev.push(s);
    }
    Ok(curve)
}

pub fn write_floor(mut w: impl Write, floor: &NoiseFloor, prov: &Provenance) -> Result<()> {
    write_header(&mut w, "floor", prov, "index,mean,cross_trial_std")?;
    writeln!(w, "# trials = {}", floor.trials).map_err(|e| AuditError::io("writing floor", e))?;
    for (k, (m, s)) in floor.mean.iter().zip(&floor.cross_trial_std).enumerate() {
        writeln!(w, "{},{m},{s}", k + 1).map_err(|e| AuditError::io("writing floor", e))?;
    }
    Ok(())
}

pub fn read_floor(reader: impl BufRead) -> Result<NoiseFloor> {
    let mut floor =
        NoiseFloor { mean: Vec::new(), cross_trial_std: Vec::new(), trials: 0, trial_curves: Vec::new() };
    let mut lines = Vec::new();
    for line in reader.lines() {
        lines.push(line.map_err(|e| AuditError::io("reading floor", e))?);
    }
    for line in &lines {
        if let Some(rest) = line.strip_prefix("# trials = ") {
            floor.trials = rest
                .trim()
                .parse()
                .map_err(|_| AuditError::Format(format!("bad trials line: {line}")))?;
        }
    }
    for line in read_lines(std::io::Cursor::new(lines.join("\n")), "floor")? {
        let parts: Vec<&str> = line.split(',').collect();
        let m: f64 = field(&parts, 1, "floor")?
            .parse()
            .map_err(|_| AuditError::Format(format!("bad floor row: {line}")))?;
        let s: f64 = field(&parts, 2, "floor")?
            .parse()
            .map_err(|_| AuditError::Format(format!("bad floor row: {line}")))?;
        floor.mean.push(m);
        floor.cross_trial_std.push(s);
    }
    Ok(floor)
}

// ---------------------------------------------------------------- scores --

pub fn write_scores(mut w: impl Write, scores: &[ScoredItem], prov: &Provenance) -> Result<()> {
    write_header(&mut w, "scores", prov, "user_id,index,video_id,label,rho")?;
    for s in scores {
        writeln!(w, "{},{},{},{},{}", s.user_id, s.index, s.video_id, s.label, s.rho)
            .map_err(|e| AuditError::io("writing scores", e))?;
    }
    Ok(())
}

pub fn read_scores(reader: impl BufRead) -> Result<Vec<ScoredItem>> {
    let mut out = Vec::new();
    for line in read_lines(reader, "scores")? {
        let parts: Vec<&str> = line.split(',').collect();
        out.push(ScoredItem {
            user_id: field(&parts, 0, "scores")?.to_string(),
            index: field(&parts, 1, "scores")?
                .parse()
                .map_err(|_| AuditError::Format(format!("bad scores row: {line}")))?,
            video_id: field(&parts, 2, "scores")?.to_string(),
            label: parse_label(field(&parts, 3, "scores")?)?,
            rho: field(&parts, 4, "scores")?
                .parse()
                .map_err(|_| AuditError::Format(format!("bad scores row: {line}")))?,
        });
    }
    Ok(out)
}

// ------------------------------------------------------------- interests --

pub fn write_interests(
    mut w: impl Write,
    interests: &BTreeMap<String, Vec<String>>,
    prov: &Provenance,
) -> Result<()> {
    write_header(&mut w, "interests", prov, "user_id\thashtags")?;
    for (user, tags) in interests {
        writeln!(w, "{user}\t{}", tags.join(","))
            .map_err(|e| AuditError::io("writing interests", e))?;
    }
    Ok(())
}

pub fn read_interests(reader: impl BufRead) -> Result<BTreeMap<String, Vec<String>>> {
    let mut out = BTreeMap::new();
    for line in read_lines(reader, "interests")? {
        let (user, tags) = line
            .split_once('\t')
            .ok_or_else(|| AuditError::Format(format!("bad interests row: {line}")))?;
        let tags: Vec<String> = if tags.is_empty() {
            Vec::new()
        } else {
            tags.split(',').map(str::to_string).collect()
        };
        out.insert(user.to_string(), tags);
    }
    Ok(out)
}

// ---------------------------------------------------------- ground truth --

pub fn write_ground_truth(mut w: impl Write, truth: &GroundTruth, prov: &Provenance) -> Result<()> {
    write_header(
        &mut w,
        "ground-truth",
        prov,
        "user_id\tindex\tplanted\tbasis\tbasis_index\tfallback",
    )?;
    for (user, records) in truth {
        for r in records {
            writeln!(
                w,
                "{user}\t{}\t{}\t{}\t{}\t{}",
                r.index,
                r.planted,
                r.basis.map_or("-", |b| b.as_str()),
                r.basis_index.map_or("-".to_string(), |i| i.to_string()),
                r.fallback,
            )
            .map_err(|e| AuditError::io("writing ground truth", e))?;
        }
    }
    Ok(())
}

pub fn read_ground_truth(reader: impl BufRead) -> Result<GroundTruth> {
    let mut out: GroundTruth = BTreeMap::new();
    for line in read_lines(reader, "ground-truth")? {
        let parts: Vec<&str> = line.split('\t').collect();
        let bad = || AuditError::Format(format!("bad ground-truth row: {line}"));
        let basis = match field(&parts, 3, "ground-truth")? {
            "-" => None,
            "liked-hashtag" => Some(ExploitBasis::LikedHashtag),
            "followed-creator" => Some(ExploitBasis::FollowedCreator),
            "watched-hashtag" => Some(ExploitBasis::WatchedHashtag),
            _ => return Err(bad()),
        };
        let basis_index = match field(&parts, 4, "ground-truth")? {
            "-" => None,
            text => Some(text.parse().map_err(|_| bad())?),
        };
        out.entry(field(&parts, 0, "ground-truth")?.to_string())
            .or_default()
            .push(PlantedRecord {
                index: field(&parts, 1, "ground-truth")?.parse().map_err(|_| bad())?,
                planted: parse_label(field(&parts, 2, "ground-truth")?)?,
                basis,
                basis_index,
                fallback: field(&parts, 5, "ground-truth")?.parse().map_err(|_| bad())?,
            });
    }
    Ok(out)
}
