//! Pairwise relatedness matrix S over all observations.
//!
//! S feeds the alignment objective: S[i][j] = 1 pulls observations i and j to
//! the same spot, 0 decouples them. Scores come from exact label identity, an
//! offline character-trigram embedding, or an external embedding service; a
//! Gaussian kernel maps embedding distance into [0,1].

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::identify::DEFAULT_SERVICE_TIMEOUT;
use crate::model::Observation;
use crate::{Error, Result};

/// Dimension of the hashed trigram embedding space.
pub const LEXICAL_DIM: usize = 512;

/// Two sightings of one label inside one recording further apart than this are
/// treated as distinct physical landmarks sharing a name (a duplicated label).
pub const DUPLICATE_SEPARATION: f64 = 3.0;

/// Symmetric n×n matrix of relatedness scores in [0,1] with a zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelatednessMatrix {
    n: usize,
    values: Vec<f64>,
}

impl RelatednessMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, values: vec![0.0; n * n] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    /// Sets S[i][j] and S[j][i]; writes to the diagonal are ignored.
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        if i == j {
            return;
        }
        self.values[i * self.n + j] = value;
        self.values[j * self.n + i] = value;
    }

    /// Upper-triangle nonzero entries as (i, j, s) with i < j — the pair list
    /// the optimizer iterates.
    pub fn nonzero_pairs(&self) -> Vec<(usize, usize, f64)> {
        let mut pairs = Vec::new();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let s = self.get(i, j);
                if s != 0.0 {
                    pairs.push((i, j, s));
                }
            }
        }
        pairs
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.n * self.n {
            return Err(Error::InvalidInput("relatedness storage size mismatch".into()));
        }
        for i in 0..self.n {
            if self.get(i, i) != 0.0 {
                return Err(Error::InvalidInput(format!("nonzero diagonal at {i}")));
            }
            for j in 0..self.n {
                let s = self.get(i, j);
                if !(0.0..=1.0).contains(&s) {
                    return Err(Error::InvalidInput(format!(
                        "relatedness S[{i}][{j}] = {s} outside [0,1]"
                    )));
                }
                if s != self.get(j, i) {
                    return Err(Error::InvalidInput(format!("asymmetry at ({i},{j})")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelatednessOptions {
    /// Zero out pairs from the same recording (their objective terms are
    /// constants under rigid transforms, see the alignment invariants).
    pub exclude_same_recording: bool,
    /// Entries below this threshold are set to exactly 0.
    pub sparsify_below: f64,
    /// Zero every entry involving a label flagged as duplicated.
    pub drop_duplicate_labels: bool,
    /// Gaussian kernel bandwidth for embedding-based providers.
    pub tau: f64,
    /// Labels the caller already knows are duplicated (e.g. from a simulated
    /// environment). Merged with in-recording auto-detection when
    /// `drop_duplicate_labels` is set.
    pub flagged_duplicates: BTreeSet<String>,
}

impl Default for RelatednessOptions {
    fn default() -> Self {
        Self {
            exclude_same_recording: true,
            sparsify_below: 0.1,
            drop_duplicate_labels: false,
            tau: 0.5,
            flagged_duplicates: BTreeSet::new(),
        }
    }
}

impl RelatednessOptions {
    fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.sparsify_below) {
            return Err(Error::InvalidInput(format!(
                "sparsify_below must lie in [0,1), got {}",
                self.sparsify_below
            )));
        }
        if !(self.tau > 0.0) {
            return Err(Error::InvalidInput(format!("tau must be positive, got {}", self.tau)));
        }
        Ok(())
    }
}

/// Where relatedness scores come from.
#[derive(Debug, Clone)]
pub enum Provider {
    /// 1.0 on byte-equal labels, else 0.0.
    ExactId,
    /// Offline hashed character-trigram embedding + Gaussian kernel.
    Lexical,
    /// External embedding service + Gaussian kernel.
    Service { endpoint: String, timeout: Duration },
}

/// 1.0 when the labels are byte-equal, else 0.0. Case-sensitive by contract.
pub fn exact_id_score(a: &str, b: &str) -> f64 {
    if a.as_bytes() == b.as_bytes() {
        1.0
    } else {
        0.0
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// L2-normalized hash-bucketed character-trigram count vector of the
/// lowercased label, padded with boundary markers. Deterministic.
pub fn lexical_embed(label: &str) -> Result<Vec<f64>> {
    if label.is_empty() {
        return Err(Error::InvalidInput("cannot embed an empty label".into()));
    }
    let mut padded: Vec<char> = Vec::with_capacity(label.len() + 2);
    padded.push('\u{1}');
    padded.extend(label.to_lowercase().chars());
    padded.push('\u{2}');
    let mut vector = vec![0.0f64; LEXICAL_DIM];
    let mut buf = [0u8; 12];
    for window in padded.windows(3) {
        let mut len = 0;
        for c in window {
            len += c.encode_utf8(&mut buf[len..]).len();
        }
        vector[(fnv1a(&buf[..len]) % LEXICAL_DIM as u64) as usize] += 1.0;
    }
    let norm = vector.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in &mut vector {
        *v /= norm;
    }
    Ok(vector)
}

/// Gaussian kernel on Euclidean distance: exp(−d² / (2 τ²)).
pub fn score_from_vectors(u: &[f64], v: &[f64], tau: f64) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::InvalidInput(format!(
            "embedding dimension mismatch: {} vs {}",
            u.len(),
            v.len()
        )));
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidInput(format!("tau must be positive, got {tau}")));
    }
    let d2: f64 = u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((-d2 / (2.0 * tau * tau)).exp())
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

/// Blocking HTTP client for the external embedding service with a per-label cache.
///
/// Protocol: POST `{"texts": [...]}`, reply `{"vectors": [[...]]}`. Vectors are
/// L2-normalized client-side after receipt.
#[derive(Debug)]
pub struct EmbeddingClient {
    endpoint: String,
    http: reqwest::blocking::Client,
    cache: Mutex<BTreeMap<String, Vec<f64>>>,
}

impl EmbeddingClient {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Result<Self> {
        let http = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Transport(format!("building HTTP client: {e}")))?;
        Ok(Self {
            endpoint: endpoint.into(),
            http,
            cache: Mutex::new(BTreeMap::new()),
        })
    }

    pub fn embed(&self, labels: &[String]) -> Result<Vec<Vec<f64>>> {
        if labels.is_empty() {
            return Err(Error::InvalidInput("embedding requires at least one label".into()));
        }
        let mut cache = self.cache.lock().unwrap();
        let mut misses: Vec<String> = Vec::new();
        for label in labels {
            if !cache.contains_key(label) && !misses.contains(label) {
                misses.push(label.clone());
            }
        }
        if !misses.is_empty() {
            let response = self
                .http
                .post(&self.endpoint)
                .json(&EmbedRequest { texts: &misses })
                .send()
                .map_err(|e| Error::Transport(format!("embedding service: {e}")))?;
            let status = response.status();
            if !status.is_success() {
                return Err(Error::Transport(format!(
                    "embedding service returned HTTP {status}"
                )));
            }
            let parsed: EmbedResponse = response
                .json()
                .map_err(|e| Error::Protocol(format!("embedding service reply: {e}")))?;
            if parsed.vectors.len() != misses.len() {
                return Err(Error::Protocol(format!(
                    "embedding service returned {} vectors for {} labels",
                    parsed.vectors.len(),
                    misses.len()
                )));
            }
            for (label, mut vector) in misses.into_iter().zip(parsed.vectors) {
                let norm = vector.iter().map(|v| v * v).sum::<f64>().sqrt();
                if !norm.is_finite() || norm == 0.0 {
                    return Err(Error::Protocol(format!(
                        "embedding for '{label}' cannot be normalized (norm {norm})"
                    )));
                }
                for v in &mut vector {
                    *v /= norm;
                }
                cache.insert(label, vector);
            }
        }
        let dim = cache[&labels[0]].len();
        let mut out = Vec::with_capacity(labels.len());
        for label in labels {
            let vector = cache[label].clone();
            if vector.len() != dim {
                return Err(Error::Protocol(format!(
                    "embedding dimension mismatch across batch: {} vs {dim}",
                    vector.len()
                )));
            }
            out.push(vector);
        }
        Ok(out)
    }
}

/// One-shot convenience wrapper around [`EmbeddingClient`] with the default timeout.
pub fn embed_via_service(labels: &[String], endpoint: &str) -> Result<Vec<Vec<f64>>> {
    EmbeddingClient::new(endpoint, DEFAULT_SERVICE_TIMEOUT)?.embed(labels)
}

/// Labels that appear at two well-separated positions within a single
/// recording — the in-data signature of distinct landmarks sharing a name.
pub fn detect_duplicate_labels(observations: &[Observation]) -> BTreeSet<String> {
    let mut by_recording_label: BTreeMap<(&str, &str), Vec<&Observation>> = BTreeMap::new();
    for obs in observations {
        by_recording_label
            .entry((obs.recording_id.as_str(), obs.label.as_str()))
            .or_default()
            .push(obs);
    }
    let mut duplicated = BTreeSet::new();
    for ((_, label), group) in &by_recording_label {
        'outer: for (k, a) in group.iter().enumerate() {
            for b in &group[k + 1..] {
                if a.position.distance(&b.position) > DUPLICATE_SEPARATION {
                    duplicated.insert((*label).to_string());
                    break 'outer;
                }
            }
        }
    }
    duplicated
}

/// Builds the full relatedness matrix: provider scores, then same-recording
/// exclusion, then duplicate-label drops, then sparsification.
pub fn build_matrix(
    observations: &[Observation],
    provider: &Provider,
    options: &RelatednessOptions,
) -> Result<RelatednessMatrix> {
    if observations.is_empty() {
        return Err(Error::InvalidInput(
            "cannot build a relatedness matrix over zero observations".into(),
        ));
    }
    options.validate()?;
    let n = observations.len();
    let mut matrix = RelatednessMatrix::zeros(n);

    match provider {
        Provider::ExactId => {
            for i in 0..n {
                for j in (i + 1)..n {
                    matrix.set(i, j, exact_id_score(&observations[i].label, &observations[j].label));
                }
            }
        }
        Provider::Lexical | Provider::Service { .. } => {
            // Embed each distinct label once.
            let mut distinct: Vec<String> = Vec::new();
            for obs in observations {
                if !distinct.contains(&obs.label) {
                    distinct.push(obs.label.clone());
                }
            }
            let vectors: Vec<Vec<f64>> = match provider {
                Provider::Lexical => distinct
                    .iter()
                    .map(|label| lexical_embed(label))
                    .collect::<Result<_>>()?,
                Provider::Service { endpoint, timeout } => {
                    EmbeddingClient::new(endpoint.clone(), *timeout)?.embed(&distinct)?
                }
                Provider::ExactId => unreachable!(),
            };
            let index: BTreeMap<&str, usize> = distinct
                .iter()
                .enumerate()
                .map(|(k, l)| (l.as_str(), k))
                .collect();
            for i in 0..n {
                for j in (i + 1)..n {
                    let u = &vectors[index[observations[i].label.as_str()]];
                    let v = &vectors[index[observations[j].label.as_str()]];
                    matrix.set(i, j, score_from_vectors(u, v, options.tau)?);
                }
            }
        }
    }

    if options.exclude_same_recording {
        for i in 0..n {
            for j in (i + 1)..n {
                if observations[i].recording_id == observations[j].recording_id {
                    matrix.set(i, j, 0.0);
                }
            }
        }
    }

    if options.drop_duplicate_labels {
        let mut duplicated = detect_duplicate_labels(observations);
        duplicated.extend(options.flagged_duplicates.iter().cloned());
        for i in 0..n {
            if !duplicated.contains(&observations[i].label) {
                continue;
            }
            for j in 0..n {
                matrix.set(i, j, 0.0);
            }
        }
    }

    if options.sparsify_below > 0.0 {
        for i in 0..n {
            for j in (i + 1)..n {
                if matrix.get(i, j) < options.sparsify_below {
                    matrix.set(i, j, 0.0);
                }
            }
        }
    }

    Ok(matrix)
}
