//! Clustering of aligned observations and assembly of the unified map.
//!
//! Observations whose relatedness clears a link threshold form connected
//! components; each component becomes one landmark with a majority-vote label,
//! a coordinatewise-median position in the shared frame, and every member note
//! kept with its timestamp.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::model::{Observation, Point2, RigidTransform2};
use crate::relatedness::{RelatednessMatrix, DUPLICATE_SEPARATION};
use crate::{Error, Result};

pub const DEFAULT_LINK_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteEntry {
    pub note: String,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkCluster {
    /// Indices into the flattened observation list.
    pub member_indices: Vec<usize>,
    /// Most frequent member label; ties go to the lexicographically smallest.
    pub label: String,
    /// Coordinatewise median of member positions in the shared frame
    /// (lower-median for even counts).
    pub position: Point2,
    /// Every member's (note, timestamp), ascending by timestamp.
    pub notes: Vec<NoteEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticLandmarkMap {
    pub clusters: Vec<LandmarkCluster>,
    /// Human-readable description of the gauge convention for the shared frame.
    pub frame_note: String,
}

/// Lower median: the ⌈n/2⌉-th smallest value (the exact middle for odd n, the
/// lower of the two middles for even n). Deterministic, no interpolation.
fn lower_median(values: &mut Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    values[(values.len() - 1) / 2]
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), size: vec![1; n] }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
    }
}

fn shared_positions(
    observations: &[Observation],
    transforms: &BTreeMap<String, RigidTransform2>,
) -> Result<Vec<Point2>> {
    observations
        .iter()
        .map(|obs| {
            transforms
                .get(&obs.recording_id)
                .map(|t| t.apply(obs.position))
                .ok_or_else(|| {
                    Error::InvalidInput(format!(
                        "no transform supplied for recording '{}'",
                        obs.recording_id
                    ))
                })
        })
        .collect()
}

/// Builds one cluster from member indices (kept in ascending order).
fn summarize(
    members: &[usize],
    observations: &[Observation],
    shared: &[Point2],
) -> LandmarkCluster {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for &i in members {
        *counts.entry(observations[i].label.as_str()).or_insert(0) += 1;
    }
    let label = counts
        .iter()
        .max_by_key(|&(label, &count)| (count, std::cmp::Reverse(*label)))
        .map(|(label, _)| label.to_string())
        .unwrap();
    let mut xs: Vec<f64> = members.iter().map(|&i| shared[i].x).collect();
    let mut ys: Vec<f64> = members.iter().map(|&i| shared[i].y).collect();
    let position = Point2::new(lower_median(&mut xs), lower_median(&mut ys));
    let mut notes: Vec<NoteEntry> = members
        .iter()
        .map(|&i| NoteEntry {
            note: observations[i].note.clone(),
            timestamp: observations[i].timestamp,
        })
        .collect();
    notes.sort_by_key(|entry| entry.timestamp);
    LandmarkCluster { member_indices: members.to_vec(), label, position, notes }
}

/// Connected components of the graph with an edge wherever
/// S[i][j] ≥ `link_threshold`, with member positions mapped into the shared
/// frame. Components are ordered by their smallest member index.
pub fn cluster(
    observations: &[Observation],
    transforms: &BTreeMap<String, RigidTransform2>,
    relatedness: &RelatednessMatrix,
    link_threshold: f64,
) -> Result<Vec<LandmarkCluster>> {
    if !(link_threshold > 0.0 && link_threshold <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "link_threshold must lie in (0,1], got {link_threshold}"
        )));
    }
    let n = observations.len();
    if relatedness.n() != n {
        return Err(Error::InvalidInput(format!(
            "relatedness is {}×{0} but there are {n} observations",
            relatedness.n()
        )));
    }
    let shared = shared_positions(observations, transforms)?;

    let mut components = UnionFind::new(n);
    for (i, j, s) in relatedness.nonzero_pairs() {
        if s >= link_threshold {
            components.union(i, j);
        }
    }
    let mut members_of: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let root = components.find(i);
        members_of.entry(root).or_default().push(i);
    }
    let mut groups: Vec<Vec<usize>> = members_of.into_values().collect();
    groups.sort_by_key(|members| members[0]);
    Ok(groups
        .iter()
        .map(|members| summarize(members, observations, &shared))
        .collect())
}

/// [`cluster`], plus re-attachment of observations whose labels were excluded
/// from alignment as duplicated.
///
/// Excluded observations surface as singletons (their relatedness rows were
/// zeroed). In observation order, each one joins the nearest existing cluster
/// with the same label within 3 m in the shared frame — alignment-produced
/// clusters never carry an excluded label, so in practice these targets are
/// the duplicate clusters formed earlier in this same pass — or stays a
/// singleton when none is near. Cluster positions are recomputed after every
/// join so the stored medians stay truthful.
pub fn cluster_and_attach(
    observations: &[Observation],
    transforms: &BTreeMap<String, RigidTransform2>,
    relatedness: &RelatednessMatrix,
    link_threshold: f64,
    excluded_labels: &BTreeSet<String>,
) -> Result<Vec<LandmarkCluster>> {
    let base = cluster(observations, transforms, relatedness, link_threshold)?;
    if excluded_labels.is_empty() {
        return Ok(base);
    }
    let shared = shared_positions(observations, transforms)?;

    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut pending: Vec<usize> = Vec::new();
    for built in base {
        let is_excluded_singleton = built.member_indices.len() == 1
            && excluded_labels.contains(&observations[built.member_indices[0]].label);
        if is_excluded_singleton {
            pending.push(built.member_indices[0]);
        } else {
            groups.push(built.member_indices);
        }
    }
    pending.sort_unstable();

    let mut clusters: Vec<LandmarkCluster> = groups
        .iter()
        .map(|members| summarize(members, observations, &shared))
        .collect();
    for index in pending {
        let label = &observations[index].label;
        let position = shared[index];
        let target = clusters
            .iter()
            .enumerate()
            .filter(|(_, c)| &c.label == label)
            .map(|(k, c)| (k, c.position.distance(&position)))
            .filter(|(_, d)| *d <= DUPLICATE_SEPARATION)
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        match target {
            Some((k, _)) => {
                let mut members = clusters[k].member_indices.clone();
                members.push(index);
                members.sort_unstable();
                clusters[k] = summarize(&members, observations, &shared);
            }
            None => clusters.push(summarize(&[index], observations, &shared)),
        }
    }
    clusters.sort_by_key(|c| c.member_indices[0]);
    Ok(clusters)
}

/// Wraps clusters into the final map: validates the partition, orders
/// landmarks by label (ties by smallest member index), records the gauge note.
pub fn assemble_map(clusters: Vec<LandmarkCluster>) -> Result<SemanticLandmarkMap> {
    let mut seen = BTreeSet::new();
    for cluster in &clusters {
        if cluster.member_indices.is_empty() {
            return Err(Error::InvalidInput("cluster with no members".into()));
        }
        for &i in &cluster.member_indices {
            if !seen.insert(i) {
                return Err(Error::InvalidInput(format!(
                    "observation {i} appears in more than one cluster"
                )));
            }
        }
    }
    let mut clusters = clusters;
    clusters.sort_by(|a, b| {
        a.label
            .cmp(&b.label)
            .then(a.member_indices[0].cmp(&b.member_indices[0]))
    });
    Ok(SemanticLandmarkMap {
        clusters,
        frame_note: "shared frame; gauge: first recording pinned to the identity transform".into(),
    })
}
