//! Stable on-disk formats.
//!
//! Recordings and observations travel as JSONL (one object per line, so parse
//! errors can name the offending line), maps and ground truth as JSON, sweep
//! results as CSV. Timestamps are RFC 3339 throughout.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::aggregate::{LandmarkCluster, NoteEntry, SemanticLandmarkMap};
use crate::align::AlignmentResult;
use crate::evaluate::{GroundTruth, TruthLandmark};
use crate::identify::{CategoryEntry, CategoryTable};
use crate::model::{Observation, Point2, TrajectorySample};
use crate::simulate::{SweepMeanRow, SweepRow};
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Recordings (JSONL)
// ---------------------------------------------------------------------------

/// One line of a recordings file: raw annotations plus an optional trajectory
/// for deriving positions of annotations that lack explicit coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRecording {
    pub recording_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<Vec<TrajectorySample>>,
    pub annotations: Vec<InputAnnotation>,
}

/// An annotation is timed either by `t` (seconds into the recording, usable
/// against the trajectory) or by an absolute `timestamp`; it may carry its own
/// coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputAnnotation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<DateTime<Utc>>,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<f64>,
}

pub fn read_recordings_jsonl(reader: impl BufRead) -> Result<Vec<InputRecording>> {
    read_jsonl(reader, "recording")
}

pub fn write_recordings_jsonl(writer: impl Write, recordings: &[InputRecording]) -> Result<()> {
    write_jsonl(writer, recordings)
}

// ---------------------------------------------------------------------------
// Observations (JSONL)
// ---------------------------------------------------------------------------

/// One observation per line. `identified` is false when no category matched
/// and the label is the raw annotation text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub recording_id: String,
    pub obs_index: usize,
    pub label: String,
    pub x: f64,
    pub y: f64,
    pub note: String,
    pub timestamp: DateTime<Utc>,
    #[serde(default = "default_true")]
    pub identified: bool,
}

fn default_true() -> bool {
    true
}

impl ObservationRecord {
    pub fn from_observation(obs: &Observation, identified: bool) -> Self {
        Self {
            recording_id: obs.recording_id.clone(),
            obs_index: obs.obs_index,
            label: obs.label.clone(),
            x: obs.position.x,
            y: obs.position.y,
            note: obs.note.clone(),
            timestamp: obs.timestamp,
            identified,
        }
    }

    pub fn to_observation(&self) -> Observation {
        Observation {
            recording_id: self.recording_id.clone(),
            obs_index: self.obs_index,
            label: self.label.clone(),
            position: Point2::new(self.x, self.y),
            note: self.note.clone(),
            timestamp: self.timestamp,
        }
    }
}

pub fn read_observations_jsonl(reader: impl BufRead) -> Result<Vec<ObservationRecord>> {
    read_jsonl(reader, "observation")
}

pub fn write_observations_jsonl(writer: impl Write, rows: &[ObservationRecord]) -> Result<()> {
    write_jsonl(writer, rows)
}

fn read_jsonl<T: serde::de::DeserializeOwned>(reader: impl BufRead, what: &str) -> Result<Vec<T>> {
    let mut items = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| {
            Error::Parse(format!("line {}: invalid {what}: {e}", index + 1))
        })?;
        items.push(item);
    }
    Ok(items)
}

fn write_jsonl<T: Serialize>(mut writer: impl Write, items: &[T]) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut writer, item)
            .map_err(|e| Error::Parse(format!("cannot serialize: {e}")))?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Map (JSON)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapFile {
    pub frame_note: String,
    /// Sorted by label (ties broken by coordinates) for stable diffs.
    pub landmarks: Vec<MapLandmark>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapLandmark {
    pub label: String,
    pub x: f64,
    pub y: f64,
    pub notes: Vec<MapNote>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapNote {
    pub text: String,
    pub timestamp: DateTime<Utc>,
}

impl MapFile {
    pub fn from_map(map: &SemanticLandmarkMap) -> Self {
        let mut landmarks: Vec<MapLandmark> = map
            .clusters
            .iter()
            .map(|c| MapLandmark {
                label: c.label.clone(),
                x: c.position.x,
                y: c.position.y,
                notes: c
                    .notes
                    .iter()
                    .map(|n| MapNote { text: n.note.clone(), timestamp: n.timestamp })
                    .collect(),
            })
            .collect();
        landmarks.sort_by(|a, b| {
            (a.label.as_str(), a.x.to_bits(), a.y.to_bits())
                .cmp(&(b.label.as_str(), b.x.to_bits(), b.y.to_bits()))
        });
        Self { frame_note: map.frame_note.clone(), landmarks }
    }

    /// Rebuilds the in-memory map. Member observation indices are not part of
    /// the file schema, so they come back empty.
    pub fn to_map(&self) -> SemanticLandmarkMap {
        SemanticLandmarkMap {
            clusters: self
                .landmarks
                .iter()
                .map(|l| LandmarkCluster {
                    member_indices: Vec::new(),
                    label: l.label.clone(),
                    position: Point2::new(l.x, l.y),
                    notes: l
                        .notes
                        .iter()
                        .map(|n| NoteEntry { note: n.text.clone(), timestamp: n.timestamp })
                        .collect(),
                })
                .collect(),
            frame_note: self.frame_note.clone(),
        }
    }
}

pub fn read_map_json(reader: impl std::io::Read) -> Result<MapFile> {
    serde_json::from_reader(reader).map_err(|e| Error::Parse(format!("invalid map file: {e}")))
}

pub fn write_map_json(mut writer: impl Write, map: &MapFile) -> Result<()> {
    serde_json::to_writer_pretty(&mut writer, map)
        .map_err(|e| Error::Parse(format!("cannot serialize map: {e}")))?;
    writer.write_all(b"\n")?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Ground truth (JSON)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthFile {
    pub landmarks: Vec<GroundTruthEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthEntry {
    pub id: String,
    pub x: f64,
    pub y: f64,
}

impl GroundTruthFile {
    pub fn from_truth(truth: &GroundTruth) -> Self {
        Self {
            landmarks: truth
                .landmarks
                .iter()
                .map(|l| GroundTruthEntry { id: l.id.clone(), x: l.position.x, y: l.position.y })
                .collect(),
        }
    }

    pub fn to_truth(&self) -> GroundTruth {
        GroundTruth {
            landmarks: self
                .landmarks
                .iter()
                .map(|l| TruthLandmark { id: l.id.clone(), position: Point2::new(l.x, l.y) })
                .collect(),
        }
    }
}

pub fn read_ground_truth_json(reader: impl std::io::Read) -> Result<GroundTruthFile> {
    serde_json::from_reader(reader)
        .map_err(|e| Error::Parse(format!("invalid ground-truth file: {e}")))
}

pub fn write_ground_truth_json(mut writer: impl Write, truth: &GroundTruthFile) -> Result<()> {
    serde_json::to_writer_pretty(&mut writer, truth)
        .map_err(|e| Error::Parse(format!("cannot serialize ground truth: {e}")))?;
    writer.write_all(b"\n")?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Category table (JSON)
// ---------------------------------------------------------------------------

/// File shape: `{"Snacks": ["cookie", "chips"], "Meeting Room 3": ["room 3"]}`.
pub fn read_category_table_json(reader: impl std::io::Read) -> Result<CategoryTable> {
    let raw: BTreeMap<String, Vec<String>> = serde_json::from_reader(reader)
        .map_err(|e| Error::Parse(format!("invalid category table: {e}")))?;
    CategoryTable::new(
        raw.into_iter()
            .map(|(label, keywords)| CategoryEntry { label, keywords })
            .collect(),
    )
}

pub fn write_category_table_json(mut writer: impl Write, table: &CategoryTable) -> Result<()> {
    let raw: BTreeMap<&str, &[String]> = table
        .entries
        .iter()
        .map(|e| (e.label.as_str(), e.keywords.as_slice()))
        .collect();
    serde_json::to_writer_pretty(&mut writer, &raw)
        .map_err(|e| Error::Parse(format!("cannot serialize category table: {e}")))?;
    writer.write_all(b"\n")?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Alignment result (JSON)
// ---------------------------------------------------------------------------

pub fn read_alignment_json(reader: impl std::io::Read) -> Result<AlignmentResult> {
    serde_json::from_reader(reader)
        .map_err(|e| Error::Parse(format!("invalid alignment file: {e}")))
}

pub fn write_alignment_json(mut writer: impl Write, result: &AlignmentResult) -> Result<()> {
    serde_json::to_writer_pretty(&mut writer, result)
        .map_err(|e| Error::Parse(format!("cannot serialize alignment: {e}")))?;
    writer.write_all(b"\n")?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Sweep results (CSV)
// ---------------------------------------------------------------------------

pub const SWEEP_CSV_HEADER: [&str; 11] = [
    "condition",
    "n_landmarks",
    "p",
    "sigma",
    "num_records",
    "seed",
    "drop_duplicates",
    "positional_error_m",
    "coverage",
    "objective",
    "runtime_s",
];

pub const SWEEP_MEANS_CSV_HEADER: [&str; 11] = [
    "condition",
    "n_landmarks",
    "p",
    "sigma",
    "num_records",
    "drop_duplicates",
    "seeds_ok",
    "mean_positional_error_m",
    "mean_coverage",
    "mean_objective",
    "mean_runtime_s",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Failed cells keep their config columns and leave the metric columns empty.
pub fn write_sweep_rows_csv(writer: impl Write, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SWEEP_CSV_HEADER).map_err(csv_err)?;
    for row in rows {
        w.write_record([
            row.condition.to_string(),
            row.n_landmarks.to_string(),
            row.p.to_string(),
            row.sigma.to_string(),
            row.num_records.to_string(),
            row.seed.to_string(),
            row.drop_duplicates.to_string(),
            opt(row.positional_error_m),
            row.coverage.map(|c| c.to_string()).unwrap_or_default(),
            opt(row.objective),
            row.runtime_s.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep_means_csv(writer: impl Write, means: &[SweepMeanRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SWEEP_MEANS_CSV_HEADER).map_err(csv_err)?;
    for row in means {
        w.write_record([
            row.condition.to_string(),
            row.n_landmarks.to_string(),
            row.p.to_string(),
            row.sigma.to_string(),
            row.num_records.to_string(),
            row.drop_duplicates.to_string(),
            row.seeds_ok.to_string(),
            opt(row.mean_positional_error_m),
            opt(row.mean_coverage),
            opt(row.mean_objective),
            row.mean_runtime_s.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse(format!("csv: {other:?}")),
    }
}
