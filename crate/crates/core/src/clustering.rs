//! Greedy fuzzy clustering of hashtags by embedding cosine similarity.
//!
//! Hashtags are processed in descending corpus frequency. Each joins the
//! existing cluster whose center is most similar if that similarity reaches
//! `sigma`, otherwise it starts a new cluster. Centers are the renormalized
//! mean of member vectors; the representative is the highest-frequency
//! member. Hashtags without a vector pass through as singleton clusters.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use crate::embedding::{cosine, EmbeddingTable};
use crate::error::{AuditError, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct HashtagClustering {
    /// hashtag -> cluster id
    pub assignment: BTreeMap<String, usize>,
    /// cluster id -> unit-norm center (None for vectorless singletons)
    pub centers: Vec<Option<Vec<f32>>>,
    /// cluster id -> canonical hashtag label
    pub representative: Vec<String>,
    pub sigma: f64,
}

impl HashtagClustering {
    /// The canonical label for a hashtag; unknown hashtags map to themselves.
    pub fn canonical<'a>(&'a self, hashtag: &'a str) -> &'a str {
        match self.assignment.get(hashtag) {
            Some(&cluster) => &self.representative[cluster],
            None => hashtag,
        }
    }

    pub fn n_clusters(&self) -> usize {
        self.representative.len()
    }

    /// Two-column map: hashtag TAB representative.
    pub fn save(&self, mut writer: impl Write) -> Result<()> {
        for (tag, &cluster) in &self.assignment {
            writeln!(writer, "{tag}\t{}", self.representative[cluster])
                .map_err(|e| AuditError::io("writing clustering", e))?;
        }
        Ok(())
    }

    /// Loads the two-column form. Centers are not persisted; the loaded
    /// clustering supports canonicalization only.
    pub fn load(reader: impl BufRead) -> Result<Self> {
        let mut clustering = HashtagClustering::default();
        let mut cluster_of_rep: BTreeMap<String, usize> = BTreeMap::new();
        for line in reader.lines() {
            let line = line.map_err(|e| AuditError::io("reading clustering", e))?;
            let trimmed = line.trim();
            // hashtags themselves start with '#', so only tab-less lines
            // count as comments
            if trimmed.is_empty() || (trimmed.starts_with('#') && !trimmed.contains('\t')) {
                continue;
            }
            let (tag, rep) = trimmed
                .split_once('\t')
                .ok_or_else(|| AuditError::Format(format!("bad clustering line: {trimmed}")))?;
            let cluster = *cluster_of_rep.entry(rep.to_string()).or_insert_with(|| {
                clustering.representative.push(rep.to_string());
                clustering.centers.push(None);
                clustering.representative.len() - 1
            });
            clustering.assignment.insert(tag.to_string(), cluster);
        }
        Ok(clustering)
    }
}

fn normalize(v: &mut [f32]) {
    let norm: f32 = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Greedy assignment over `hashtags_by_frequency` (descending frequency).
pub fn cluster_hashtags(
    embeddings: &EmbeddingTable,
    hashtags_by_frequency: &[(String, usize)],
    sigma: f64,
) -> Result<HashtagClustering> {
    if !(0.0 < sigma && sigma < 1.0) {
        return Err(AuditError::InvalidSigma(sigma));
    }
    let mut clustering = HashtagClustering { sigma, ..Default::default() };
    // member vectors per cluster, for center updates
    let mut members: Vec<Vec<&[f32]>> = Vec::new();

    for (tag, _freq) in hashtags_by_frequency {
        if clustering.assignment.contains_key(tag) {
            continue;
        }
        let Some(vector) = embeddings.get(tag) else {
            // vectorless: singleton cluster of itself, never joinable
            let id = clustering.representative.len();
            clustering.representative.push(tag.clone());
            clustering.centers.push(None);
            members.push(Vec::new());
            clustering.assignment.insert(tag.clone(), id);
            continue;
        };
        let mut unit = vector.to_vec();
        normalize(&mut unit);

        let best = clustering
            .centers
            .iter()
            .enumerate()
            .filter_map(|(id, c)| c.as_ref().map(|c| (id, f64::from(cosine(&unit, c)))))
            .max_by(|a, b| a.1.total_cmp(&b.1).then_with(|| b.0.cmp(&a.0)));

        match best {
            Some((id, sim)) if sim >= sigma => {
                clustering.assignment.insert(tag.clone(), id);
                members[id].push(vector);
                // center := renormalized mean of member vectors
                let dim = vector.len();
                let mut center = vec![0.0f32; dim];
                for v in &members[id] {
                    for (c, x) in center.iter_mut().zip(v.iter()) {
                        *c += x;
                    }
                }
                let inv = 1.0 / members[id].len() as f32;
                center.iter_mut().for_each(|x| *x *= inv);
                normalize(&mut center);
                clustering.centers[id] = Some(center);
            }
            _ => {
                let id = clustering.representative.len();
                clustering.representative.push(tag.clone());
                clustering.centers.push(Some(unit));
                members.push(vec![vector]);
                clustering.assignment.insert(tag.clone(), id);
            }
        }
    }
    Ok(clustering)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn table(entries: &[(&str, &[f32])]) -> EmbeddingTable {
        EmbeddingTable {
            vectors: entries
                .iter()
                .map(|(t, v)| (t.to_string(), v.to_vec()))
                .collect::<BTreeMap<_, _>>(),
            dim: entries.first().map_or(0, |(_, v)| v.len()),
            vocab_min_count: 0,
            context_window: 0,
        }
    }

    fn freq(tags: &[&str]) -> Vec<(String, usize)> {
        tags.iter()
            .enumerate()
            .map(|(i, t)| (t.to_string(), 100 - i))
            .collect()
    }

    #[test]
    fn similar_fan_tags_form_one_cluster() {
        let base = [1.0f32, 0.2, 0.1, 0.05];
        let jitter = |eps: f32| {
            let mut v = base;
            v[1] += eps;
            v
        };
        let vs = [jitter(0.0), jitter(0.02), jitter(-0.02), jitter(0.04)];
        let emb = table(&[
            ("#bieber", &vs[0]),
            ("#biebertiktok", &vs[1]),
            ("#belieber", &vs[2]),
            ("#bieberforever", &vs[3]),
        ]);
        let c = cluster_hashtags(
            &emb,
            &freq(&["#bieber", "#biebertiktok", "#belieber", "#bieberforever"]),
            0.9,
        )
        .unwrap();
        assert_eq!(c.n_clusters(), 1);
        assert_eq!(c.canonical("#belieber"), "#bieber"); // highest-frequency member
    }

    #[test]
    fn unreachable_threshold_gives_singletons() {
        let emb = table(&[
            ("#a", &[1.0, 0.0][..]),
            ("#b", &[0.0, 1.0][..]),
            ("#c", &[-1.0, 0.0][..]),
        ]);
        let c = cluster_hashtags(&emb, &freq(&["#a", "#b", "#c"]), 0.999_999).unwrap();
        assert_eq!(c.n_clusters(), 3);
    }

    #[test]
    fn hand_traced_greedy_partition() {
        // five 2-D unit vectors, sigma = 0.9, processed in frequency order
        // a, b, c, d, e. Hand trace:
        //   a=(1,0)           -> new cluster 0, center (1,0)
        //   b=(0.995,0.0998)  -> cos(a)=0.995 >= 0.9 -> cluster 0,
        //                        center ~ (0.9988,0.0500)
        //   c=(0,1)           -> cos=0.0500 -> new cluster 1
        //   d=(0.0998,0.995)  -> cos(c0)=0.0997, cos(c1)=0.995 -> cluster 1
        //   e=(0.707,0.707)   -> cos(c0)=0.7416, cos(c1)=0.7416 -> new cluster 2
        let emb = table(&[
            ("a", &[1.0f32, 0.0][..]),
            ("b", &[0.995, 0.0998][..]),
            ("c", &[0.0, 1.0][..]),
            ("d", &[0.0998, 0.995][..]),
            ("e", &[0.707, 0.707][..]),
        ]);
        let c = cluster_hashtags(&emb, &freq(&["a", "b", "c", "d", "e"]), 0.9).unwrap();
        assert_eq!(c.assignment["a"], c.assignment["b"]);
        assert_eq!(c.assignment["c"], c.assignment["d"]);
        assert_ne!(c.assignment["a"], c.assignment["c"]);
        assert_ne!(c.assignment["e"], c.assignment["a"]);
        assert_ne!(c.assignment["e"], c.assignment["c"]);
        assert_eq!(c.canonical("b"), "a");
        assert_eq!(c.canonical("d"), "c");
    }

    #[test]
    fn vectorless_tags_pass_through_as_singletons() {
        let emb = table(&[("#known", &[1.0, 0.0][..])]);
        let c = cluster_hashtags(&emb, &freq(&["#known", "#mystery"]), 0.5).unwrap();
        assert_eq!(c.canonical("#mystery"), "#mystery");
        assert_eq!(c.n_clusters(), 2);
    }

    #[test]
    fn sigma_out_of_range_rejected() {
        let emb = table(&[("#a", &[1.0, 0.0][..])]);
        assert!(cluster_hashtags(&emb, &freq(&["#a"]), 0.0).is_err());
        assert!(cluster_hashtags(&emb, &freq(&["#a"]), 1.0).is_err());
    }

    #[test]
    fn partition_is_total_and_unique() {
        let emb = table(&[
            ("#a", &[1.0, 0.0][..]),
            ("#b", &[0.9, 0.1][..]),
            ("#c", &[0.0, 1.0][..]),
        ]);
        let tags = freq(&["#a", "#b", "#c", "#novector"]);
        let c = cluster_hashtags(&emb, &tags, 0.7).unwrap();
        for (tag, _) in &tags {
            let id = c.assignment[tag];
            assert!(id < c.n_clusters());
        }
        assert_eq!(c.assignment.len(), tags.len());
    }

    #[test]
    fn save_load_round_trip() {
        let emb = table(&[("#a", &[1.0, 0.0][..]), ("#b", &[0.99, 0.05][..])]);
        let c = cluster_hashtags(&emb, &freq(&["#a", "#b"]), 0.9).unwrap();
        let mut buf = Vec::new();
        c.save(&mut buf).unwrap();
        let loaded = HashtagClustering::load(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(loaded.canonical("#b"), "#a");
        assert_eq!(loaded.canonical("#a"), "#a");
    }
}
