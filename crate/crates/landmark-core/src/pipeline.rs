//! End-to-end stages connecting file-shaped inputs to the core algorithms:
//! raw recordings → observations (ingest) and observations → aligned map
//! (build), shared by the CLI and the HTTP service.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};

use crate::aggregate::{assemble_map, cluster_and_attach, SemanticLandmarkMap};
use crate::align::{optimize, AlignmentConfig, AlignmentProblem, AlignmentResult};
use crate::formats::{InputRecording, ObservationRecord};
use crate::identify::{identify_label, CategoryTable, LabelingClient};
use crate::model::{Observation, Point2};
use crate::relatedness::{
    build_matrix, detect_duplicate_labels, Provider, RelatednessMatrix, RelatednessOptions,
};
use crate::trajectory::{stationary_position, StationaryParams};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LabelSource {
    /// Keyword table only.
    Table,
    /// Labeling service, falling back to the table on failure.
    ServiceWithFallback,
    /// No labeler configured: every label is raw annotation text.
    Raw,
}

/// How ingestion turns annotation text into labels and times into positions.
pub struct IngestOptions<'a> {
    pub category_table: Option<&'a CategoryTable>,
    pub labeling: Option<&'a LabelingClient>,
    pub stationary: StationaryParams,
}

impl Default for IngestOptions<'_> {
    fn default() -> Self {
        Self { category_table: None, labeling: None, stationary: StationaryParams::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestOutcome {
    pub observations: Vec<ObservationRecord>,
    /// Human-readable notices: unmatched annotations, service fallbacks.
    pub warnings: Vec<String>,
}

/// Turns raw recordings into observations: positions come from explicit
/// coordinates or from the stationary-stop locator over the trajectory,
/// labels from the configured labeler. Unmatched annotations keep their raw
/// text as the label and are flagged `identified: false`.
pub fn ingest(recordings: &[InputRecording], options: &IngestOptions) -> Result<IngestOutcome> {
    if recordings.is_empty() {
        return Err(Error::InvalidInput("no recordings to ingest".into()));
    }
    let source = match (options.labeling, options.category_table) {
        (Some(_), Some(_)) => LabelSource::ServiceWithFallback,
        (Some(_), None) => {
            return Err(Error::InvalidInput(
                "a labeling service needs a category table to supply the candidate labels".into(),
            ))
        }
        (None, Some(_)) => LabelSource::Table,
        (None, None) => LabelSource::Raw,
    };

    let mut seen_ids = BTreeSet::new();
    let mut observations = Vec::new();
    let mut warnings = Vec::new();
    for recording in recordings {
        if recording.recording_id.is_empty() {
            return Err(Error::InvalidInput("recording_id must be non-empty".into()));
        }
        if !seen_ids.insert(recording.recording_id.as_str()) {
            return Err(Error::InvalidInput(format!(
                "duplicate recording_id '{}'",
                recording.recording_id
            )));
        }
        for (index, annotation) in recording.annotations.iter().enumerate() {
            let at = format!("recording '{}' annotation {index}", recording.recording_id);
            if annotation.text.is_empty() {
                return Err(Error::InvalidInput(format!("{at}: text must be non-empty")));
            }

            let position = match (annotation.x, annotation.y) {
                (Some(x), Some(y)) => {
                    let p = Point2::new(x, y);
                    if !p.is_finite() {
                        return Err(Error::InvalidInput(format!("{at}: position must be finite")));
                    }
                    p
                }
                (None, None) => match (&recording.trajectory, annotation.t) {
                    (Some(trajectory), Some(t)) => {
                        stationary_position(trajectory, t, &options.stationary)?
                    }
                    (None, _) => {
                        return Err(Error::InvalidInput(format!(
                            "{at}: no explicit position and no trajectory to derive one from"
                        )))
                    }
                    (_, None) => {
                        return Err(Error::InvalidInput(format!(
                            "{at}: trajectory positioning needs a relative time `t`"
                        )))
                    }
                },
                _ => {
                    return Err(Error::InvalidInput(format!(
                        "{at}: position needs both x and y"
                    )))
                }
            };

            let (label, identified) = match source {
                LabelSource::Raw => (None, false),
                LabelSource::Table => {
                    let table = options.category_table.unwrap();
                    (identify_label(&annotation.text, table)?, true)
                }
                LabelSource::ServiceWithFallback => {
                    let table = options.category_table.unwrap();
                    let client = options.labeling.unwrap();
                    match client.label(&annotation.text, &table.labels()) {
                        Ok(label) => (Some(label), true),
                        Err(e @ (Error::Transport(_) | Error::Protocol(_))) => {
                            warnings.push(format!("{at}: labeling service failed ({e}); using the category table"));
                            (identify_label(&annotation.text, table)?, true)
                        }
                        Err(other) => return Err(other),
                    }
                }
            };
            let (label, identified) = match label {
                Some(label) => (label, identified),
                None => {
                    if identified {
                        warnings.push(format!("{at}: no category matched; keeping raw text"));
                    }
                    (annotation.text.clone(), false)
                }
            };

            let timestamp: DateTime<Utc> = match (annotation.timestamp, annotation.t) {
                (Some(ts), _) => ts,
                // Relative-only annotations get a synthetic epoch-based stamp.
                (None, Some(t)) => {
                    DateTime::from_timestamp_millis((t * 1000.0).round() as i64).ok_or_else(
                        || Error::InvalidInput(format!("{at}: time {t} out of range")),
                    )?
                }
                (None, None) => {
                    return Err(Error::InvalidInput(format!(
                        "{at}: needs either `t` or `timestamp`"
                    )))
                }
            };

            observations.push(ObservationRecord {
                recording_id: recording.recording_id.clone(),
                obs_index: index,
                label,
                x: position.x,
                y: position.y,
                note: annotation.text.clone(),
                timestamp,
                identified,
            });
        }
    }
    if observations.is_empty() {
        return Err(Error::InvalidInput("recordings contain no annotations".into()));
    }
    Ok(IngestOutcome { observations, warnings })
}

/// Relatedness + optimizer settings for the observations → map stage.
#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub provider: Provider,
    pub relatedness: RelatednessOptions,
    pub align: AlignmentConfig,
    pub link_threshold: f64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            provider: Provider::ExactId,
            relatedness: RelatednessOptions::default(),
            align: AlignmentConfig::default(),
            link_threshold: crate::aggregate::DEFAULT_LINK_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildOutcome {
    pub alignment: AlignmentResult,
    pub map: SemanticLandmarkMap,
    /// Recordings left out of the map because their cross-recording links
    /// cannot pin down a pose in the shared frame.
    pub dropped_recordings: Vec<String>,
}

/// Recordings whose pose the cross-recording links cannot pin down.
///
/// A pose has three degrees of freedom; links that touch only one distinct
/// observation point on either side of a recording boundary constrain two of
/// them and leave a rotation about that point free. The optimizer would park
/// such a recording at whatever angle the restart happened to draw, and its
/// observations would enter the map at meaningless positions.
///
/// Recordings are merged into rigid groups: a pair whose links touch at least
/// two distinct points on each side is mutually pinned, and merging repeats so
/// pins aggregate across groups (a recording held by one point each of two
/// already-merged recordings is held by two points of their group). The group
/// with the most observations is kept — ties go to the one whose first
/// recording id sorts lowest — and everything outside it is reported. Groups
/// that are pairwise single-pinned in a cycle are rigid in rare generic cases
/// this misses; losing them costs coverage, never correctness. A problem with
/// no cross links at all is left intact for the degenerate-alignment path.
fn unlocatable_recordings(
    observations: &[Observation],
    matrix: &RelatednessMatrix,
) -> Vec<String> {
    let ids: Vec<&str> = {
        let set: BTreeSet<&str> = observations.iter().map(|o| o.recording_id.as_str()).collect();
        set.into_iter().collect()
    };
    if ids.len() <= 1 {
        return Vec::new();
    }
    let index_of: BTreeMap<&str, usize> =
        ids.iter().enumerate().map(|(k, &id)| (id, k)).collect();
    let rec_of: Vec<usize> =
        observations.iter().map(|o| index_of[o.recording_id.as_str()]).collect();

    let links: Vec<(usize, usize, usize, usize)> = matrix
        .nonzero_pairs()
        .into_iter()
        .filter(|&(i, j, _)| rec_of[i] != rec_of[j])
        .map(|(i, j, _)| (rec_of[i], rec_of[j], i, j))
        .collect();
    if links.is_empty() {
        return Vec::new();
    }

    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }

    let mut parent: Vec<usize> = (0..ids.len()).collect();
    loop {
        let mut pins: BTreeMap<(usize, usize), (BTreeSet<usize>, BTreeSet<usize>)> =
            BTreeMap::new();
        for &(ra, rb, i, j) in &links {
            let (sa, sb) = (find(&mut parent, ra), find(&mut parent, rb));
            if sa == sb {
                continue;
            }
            let (key, pin) = if sa < sb { ((sa, sb), (i, j)) } else { ((sb, sa), (j, i)) };
            let entry = pins.entry(key).or_default();
            entry.0.insert(pin.0);
            entry.1.insert(pin.1);
        }
        let mut merged = false;
        for ((sa, sb), (left, right)) in &pins {
            if left.len() >= 2 && right.len() >= 2 {
                let (ra, rb) = (find(&mut parent, *sa), find(&mut parent, *sb));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                    merged = true;
                }
            }
        }
        if !merged {
            break;
        }
    }

    let mut group_sizes: BTreeMap<usize, usize> = BTreeMap::new();
    for &rec in &rec_of {
        let root = find(&mut parent, rec);
        *group_sizes.entry(root).or_default() += 1;
    }
    let keeper = *group_sizes
        .iter()
        .max_by_key(|&(&root, &size)| (size, std::cmp::Reverse(ids[root])))
        .map(|(root, _)| root)
        .expect("at least one recording group");
    (0..ids.len())
        .filter(|&k| find(&mut parent, k) != keeper)
        .map(|k| ids[k].to_string())
        .collect()
}

/// Observations → relatedness → alignment → clustering → map.
///
/// Recordings the links cannot locate (see [`unlocatable_recordings`]) are
/// removed up front, repeatedly, since each removal also removes links.
pub fn build_map(observations: &[Observation], options: &BuildOptions) -> Result<BuildOutcome> {
    let mut observations = observations.to_vec();
    let mut dropped_recordings: Vec<String> = Vec::new();
    let matrix = loop {
        let matrix = build_matrix(&observations, &options.provider, &options.relatedness)?;
        let unlocatable = unlocatable_recordings(&observations, &matrix);
        if unlocatable.is_empty() {
            break matrix;
        }
        observations.retain(|o| !unlocatable.contains(&o.recording_id));
        dropped_recordings.extend(unlocatable);
    };
    dropped_recordings.sort_unstable();

    let problem = AlignmentProblem::new(observations.clone(), matrix.clone())?;
    let alignment = optimize(&problem, &options.align)?;

    let excluded: BTreeSet<String> = if options.relatedness.drop_duplicate_labels {
        let mut set = options.relatedness.flagged_duplicates.clone();
        set.extend(detect_duplicate_labels(&observations));
        set
    } else {
        BTreeSet::new()
    };
    let clusters = cluster_and_attach(
        &observations,
        &alignment.transforms,
        &matrix,
        options.link_threshold,
        &excluded,
    )?;
    let map = assemble_map(clusters)?;
    Ok(BuildOutcome { alignment, map, dropped_recordings })
}
