//! Continuous-bag-of-words embeddings with negative sampling, trained on
//! hashtag "sentences". Single-threaded by construction so a fixed seed
//! reproduces the table bit-for-bit.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{AuditError, Result};
use crate::util::derive_seed;

const NEGATIVE_SAMPLES: usize = 5;
const UNIGRAM_POWER: f64 = 0.75;
const INITIAL_LR: f32 = 0.025;
const MIN_LR: f32 = 1e-4;

/// Token embeddings plus the vocabulary parameters they were trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub vectors: BTreeMap<String, Vec<f32>>,
    pub dim: usize,
    pub vocab_min_count: usize,
    pub context_window: usize,
}

impl EmbeddingTable {
    pub fn get(&self, token: &str) -> Option<&[f32]> {
        self.vectors.get(token).map(|v| v.as_slice())
    }

    pub fn cosine(&self, a: &str, b: &str) -> Option<f32> {
        Some(cosine(self.get(a)?, self.get(b)?))
    }

    /// Text format: first line `V D`, then one token and D reals per line.
    pub fn save(&self, mut writer: impl Write) -> Result<()> {
        let mut w = |s: String| {
            writer
                .write_all(s.as_bytes())
                .map_err(|e| AuditError::io("writing embeddings", e))
        };
        w(format!("{} {}\n", self.vectors.len(), self.dim))?;
        for (token, vec) in &self.vectors {
            let mut line = token.clone();
            for x in vec {
                line.push(' ');
                line.push_str(&format!("{x:.6}"));
            }
            line.push('\n');
            w(line)?;
        }
        Ok(())
    }

    pub fn load(reader: impl BufRead) -> Result<Self> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| AuditError::Format("empty embedding file".into()))?
            .map_err(|e| AuditError::io("reading embeddings", e))?;
        let mut parts = header.split_whitespace();
        let v: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| AuditError::Format("bad embedding header".into()))?;
        let dim: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| AuditError::Format("bad embedding header".into()))?;
        let mut vectors = BTreeMap::new();
        for line in lines {
            let line = line.map_err(|e| AuditError::io("reading embeddings", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let token = parts
                .next()
                .ok_or_else(|| AuditError::Format("embedding line without token".into()))?
                .to_string();
            let vec: Vec<f32> = parts
                .map(|s| s.parse::<f32>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| AuditError::Format(format!("bad embedding value: {e}")))?;
            if vec.len() != dim {
                return Err(AuditError::Format(format!(
                    "token {token}: expected {dim} values, got {}",
                    vec.len()
                )));
            }
            vectors.insert(token, vec);
        }
        if vectors.len() != v {
            return Err(AuditError::Format(format!(
                "embedding header says {v} tokens, file has {}",
                vectors.len()
            )));
        }
        Ok(EmbeddingTable { vectors, dim, vocab_min_count: 0, context_window: 0 })
    }
}

pub fn cosine(a: &[f32], b: &[f32]) -> f32 {
    let dot: f32 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f32 = a.iter().map(|x| x * x).sum::<f32>().sqrt();
    let nb: f32 = b.iter().map(|x| x * x).sum::<f32>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

struct NegativeTable {
    cumulative: Vec<f64>,
}

impl NegativeTable {
    fn new(counts: &[usize]) -> Self {
        let mut cumulative = Vec::with_capacity(counts.len());
        let mut acc = 0.0;
        for c in counts {
            acc += (*c as f64).powf(UNIGRAM_POWER);
            cumulative.push(acc);
        }
        NegativeTable { cumulative }
    }

    fn sample(&self, rng: &mut impl Rng) -> usize {
        let total = *self.cumulative.last().unwrap();
        let x = rng.gen::<f64>() * total;
        self.cumulative.partition_point(|&c| c <= x).min(self.cumulative.len() - 1)
    }
}

/// Trains CBOW-with-negative-sampling embeddings.
///
/// Tokens appearing fewer than `min_count` times are excluded from the
/// vocabulary; the context covers up to `window` tokens on each side.
pub fn train_cbow(
    corpus: &[Vec<String>],
    min_count: usize,
    window: usize,
    dim: usize,
    epochs: usize,
    seed: u64,
) -> Result<EmbeddingTable> {
    assert!(dim >= 2, "embedding dimension must be >= 2");
    assert!(!corpus.is_empty(), "corpus must be non-empty");

    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for sentence in corpus {
        for token in sentence {
            *counts.entry(token.as_str()).or_default() += 1;
        }
    }
    // vocabulary ordered by count desc then token, like the usual tooling
    let mut vocab: Vec<(&str, usize)> =
        counts.into_iter().filter(|(_, c)| *c >= min_count).collect();
    vocab.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    if vocab.is_empty() {
        return Err(AuditError::EmptyVocabulary { min_count });
    }
    let index: BTreeMap<&str, usize> = vocab.iter().enumerate().map(|(i, (t, _))| (*t, i)).collect();
    let vocab_counts: Vec<usize> = vocab.iter().map(|(_, c)| *c).collect();
    let table = NegativeTable::new(&vocab_counts);
    let v = vocab.len();

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xcb0));
    let mut input: Vec<f32> = (0..v * dim)
        .map(|_| (rng.gen::<f32>() - 0.5) / dim as f32)
        .collect();
    let mut output: Vec<f32> = vec![0.0; v * dim];

    // sentences mapped to vocabulary ids once
    let encoded: Vec<Vec<usize>> = corpus
        .iter()
        .map(|s| s.iter().filter_map(|t| index.get(t.as_str()).copied()).collect())
        .collect();
    let examples_total: usize = encoded.iter().map(|s| s.len()).sum::<usize>() * epochs.max(1);
    let mut examples_seen = 0usize;

    let mut h = vec![0.0f32; dim];
    let mut grad_h = vec![0.0f32; dim];

    for _epoch in 0..epochs {
        for sentence in &encoded {
            for (pos, &target) in sentence.iter().enumerate() {
                examples_seen += 1;
                // shrink the window randomly, as in the reference tooling
                let reduced = rng.gen_range(1..=window.max(1));
                let lo = pos.saturating_sub(reduced);
                let hi = (pos + reduced + 1).min(sentence.len());
                let context: Vec<usize> = (lo..hi)
                    .filter(|&j| j != pos)
                    .map(|j| sentence[j])
                    .collect();
                if context.is_empty() {
                    continue;
                }
                let lr = (INITIAL_LR
                    * (1.0 - examples_seen as f32 / examples_total as f32))
                    .max(MIN_LR);

                // hidden layer: mean of context input vectors
                h.iter_mut().for_each(|x| *x = 0.0);
                for &c in &context {
                    for (hk, ik) in h.iter_mut().zip(&input[c * dim..(c + 1) * dim]) {
                        *hk += ik;
                    }
                }
                let inv = 1.0 / context.len() as f32;
                h.iter_mut().for_each(|x| *x *= inv);

                grad_h.iter_mut().for_each(|x| *x = 0.0);
                for neg in 0..=NEGATIVE_SAMPLES {
                    let (word, label) = if neg == 0 {
                        (target, 1.0f32)
                    } else {
                        let mut s = table.sample(&mut rng);
                        if s == target {
                            s = (s + 1) % v;
                        }
                        (s, 0.0f32)
                    };
                    let row = &mut output[word * dim..(word + 1) * dim];
                    let dot: f32 = h.iter().zip(row.iter()).map(|(a, b)| a * b).sum();
                    let g = (label - sigmoid(dot)) * lr;
                    for ((gh, r), hk) in grad_h.iter_mut().zip(row.iter_mut()).zip(&h) {
                        *gh += g * *r;
                        *r += g * *hk;
                    }
                }
                let g_scale = inv;
                for &c in &context {
                    for (ik, gh) in input[c * dim..(c + 1) * dim].iter_mut().zip(&grad_h) {
                        *ik += gh * g_scale;
                    }
                }
            }
        }
    }

    let vectors = vocab
        .iter()
        .map(|(token, _)| {
            let i = index[token];
            (token.to_string(), input[i * dim..(i + 1) * dim].to_vec())
        })
        .collect();
    Ok(EmbeddingTable { vectors, dim, vocab_min_count: min_count, context_window: window })
}
