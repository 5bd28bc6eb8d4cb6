//! Synthetic experiment protocol.
//!
//! Generates environments of labeled landmarks (optionally with duplicated
//! ids), synthesizes per-user records that see random subsets under few/many/
//! mixed sampling with Gaussian position noise and a scrambled private frame,
//! runs the full pipeline, and scores against the environment as ground truth.
//! A sweep evaluates whole config grids across seeds into CSV-ready rows.

use std::collections::BTreeSet;
use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregate::DEFAULT_LINK_THRESHOLD;
use crate::align::AlignmentConfig;
use crate::evaluate::{positional_error, EvalReport, GroundTruth, TruthLandmark};
use crate::model::{flatten_observations, Observation, Point2, Recording};
use crate::pipeline::{build_map, BuildOptions};
use crate::relatedness::{Provider, RelatednessOptions};
use crate::{seeding, Error, Result};

/// Total rejection-sampling attempts allowed while packing an environment.
const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    /// Every record sees 3–6 landmarks.
    Few,
    /// Every record sees 12–15 landmarks.
    Many,
    /// The first ~10% of records are many-sized, the rest few-sized.
    Mixed,
    /// Every record sees every landmark (used by exact-recovery tests).
    All,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Condition::Few => "few",
            Condition::Many => "many",
            Condition::Mixed => "mixed",
            Condition::All => "all",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "few" => Ok(Condition::Few),
            "many" => Ok(Condition::Many),
            "mixed" => Ok(Condition::Mixed),
            "all" => Ok(Condition::All),
            other => Err(Error::InvalidInput(format!(
                "unknown condition '{other}' (expected few, many, mixed, or all)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n_landmarks: usize,
    /// Fraction p of landmarks whose id duplicates another's.
    pub duplication_ratio: f64,
    pub noise_sigma: f64,
    pub condition: Condition,
    pub num_records: usize,
    pub seed: u64,
    pub area_side: f64,
    pub min_separation: f64,
    /// Exclude duplicated-id landmarks from the alignment objective.
    pub drop_duplicates_in_alignment: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_landmarks: 30,
            duplication_ratio: 0.0,
            noise_sigma: 0.5,
            condition: Condition::Few,
            num_records: 3,
            seed: 0,
            area_side: 10.0,
            min_separation: 1.0,
            drop_duplicates_in_alignment: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_landmarks < 1 {
            return Err(Error::InvalidInput("n_landmarks must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.duplication_ratio) {
            return Err(Error::InvalidInput(format!(
                "duplication_ratio must lie in [0,1), got {}",
                self.duplication_ratio
            )));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::InvalidInput("noise_sigma must be non-negative".into()));
        }
        if self.num_records < 1 {
            return Err(Error::InvalidInput("num_records must be at least 1".into()));
        }
        if !(self.area_side > 0.0) || !(self.min_separation >= 0.0) {
            return Err(Error::InvalidInput(
                "area_side must be positive, min_separation non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Stream label for the environment RNG: only the fields the environment
    /// depends on, so e.g. changing num_records replays the same world.
    fn environment_label(&self) -> String {
        format!(
            "sim/env/n{}/p{:x}/a{:x}/m{:x}",
            self.n_landmarks,
            self.duplication_ratio.to_bits(),
            self.area_side.to_bits(),
            self.min_separation.to_bits()
        )
    }

    /// Stream label for record synthesis. Excludes num_records so that the
    /// records of a shorter run are an exact prefix of a longer run's
    /// (mixed is the exception: its sizing rule reads num_records directly).
    fn record_label(&self) -> String {
        format!("{}/rec/{}/s{:x}", self.environment_label(), self.condition, self.noise_sigma.to_bits())
    }

    fn align_seed(&self) -> u64 {
        seeding::derive(&format!("{}/align/r{}", self.record_label(), self.num_records), self.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEnvironment {
    pub landmarks: Vec<TruthLandmark>,
    /// Count of distinct base ids (N′).
    pub n_unique: usize,
}

impl SimEnvironment {
    pub fn ground_truth(&self) -> GroundTruth {
        GroundTruth { landmarks: self.landmarks.clone() }
    }

    /// Ids assigned to two or more landmarks.
    pub fn duplicated_ids(&self) -> BTreeSet<String> {
        let mut counts = std::collections::BTreeMap::new();
        for lm in &self.landmarks {
            *counts.entry(lm.id.as_str()).or_insert(0usize) += 1;
        }
        counts
            .into_iter()
            .filter(|(_, c)| *c >= 2)
            .map(|(id, _)| id.to_string())
            .collect()
    }
}

/// Places `n_landmarks` uniformly in [0, area_side]² at pairwise distances of
/// at least min_separation; the first N′ = max(1, ⌊(1−p)·N⌋) get fresh ids
/// "ID-00"…, the rest reuse ids drawn uniformly from those.
pub fn generate_environment(config: &SimConfig, rng: &mut ChaCha8Rng) -> Result<SimEnvironment> {
    config.validate()?;
    let n = config.n_landmarks;
    let mut positions: Vec<Point2> = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while positions.len() < n {
        attempts += 1;
        if attempts > MAX_PLACEMENT_ATTEMPTS {
            return Err(Error::Generation(format!(
                "could not pack {n} landmarks at min separation {sep} into a {side}×{side} m area after {MAX_PLACEMENT_ATTEMPTS} attempts; enlarge the area or lower the separation",
                sep = config.min_separation,
                side = config.area_side
            )));
        }
        let candidate = Point2::new(
            rng.random_range(0.0..config.area_side),
            rng.random_range(0.0..config.area_side),
        );
        if positions.iter().all(|p| p.distance(&candidate) >= config.min_separation) {
            positions.push(candidate);
        }
    }

    let n_unique = (((1.0 - config.duplication_ratio) * n as f64).floor() as usize).max(1);
    let landmarks = positions
        .into_iter()
        .enumerate()
        .map(|(i, position)| {
            let id_index = if i < n_unique { i } else { rng.random_range(0..n_unique) };
            TruthLandmark { id: format!("ID-{id_index:02}"), position }
        })
        .collect();
    Ok(SimEnvironment { landmarks, n_unique })
}

/// How many landmarks record `record_index` (of `num_records`) sees.
pub fn sample_record_size(
    condition: Condition,
    record_index: usize,
    num_records: usize,
    n_landmarks: usize,
    rng: &mut ChaCha8Rng,
) -> usize {
    let size = match condition {
        Condition::Few => rng.random_range(3..=6),
        Condition::Many => rng.random_range(12..=15),
        Condition::Mixed => {
            let many_records = ((0.1 * num_records as f64).round() as usize).max(1);
            if record_index < many_records {
                rng.random_range(12..=15)
            } else {
                rng.random_range(3..=6)
            }
        }
        Condition::All => n_landmarks,
    };
    size.min(n_landmarks)
}

/// Gaussian noise, independent per axis, applied to each chosen landmark.
fn noisy_positions(
    env: &SimEnvironment,
    chosen: &[usize],
    sigma: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<Point2> {
    let normal = Normal::new(0.0, sigma).expect("sigma validated non-negative");
    chosen
        .iter()
        .map(|&i| {
            let p = env.landmarks[i].position;
            if sigma == 0.0 {
                p
            } else {
                Point2::new(p.x + normal.sample(rng), p.y + normal.sample(rng))
            }
        })
        .collect()
}

/// One synthetic user record: `k` distinct landmarks in a random visit order,
/// noisy positions, and a scrambled private frame — rotated by a random angle
/// and translated so the first visited landmark sits exactly at the origin.
pub fn synthesize_record(
    env: &SimEnvironment,
    recording_id: &str,
    k: usize,
    sigma: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Recording> {
    let n = env.landmarks.len();
    if k > n {
        return Err(Error::InvalidInput(format!(
            "record wants {k} landmarks but the environment has only {n}"
        )));
    }
    if k == 0 {
        return Err(Error::InvalidInput("record must visit at least one landmark".into()));
    }
    // Uniform k-subset in random visit order: partial Fisher–Yates.
    let mut indices: Vec<usize> = (0..n).collect();
    for slot in 0..k {
        let pick = rng.random_range(slot..n);
        indices.swap(slot, pick);
    }
    indices.truncate(k);

    let noisy = noisy_positions(env, &indices, sigma, rng);
    let theta = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    let (sin, cos) = theta.sin_cos();
    let rotated: Vec<Point2> = noisy
        .iter()
        .map(|p| Point2::new(cos * p.x - sin * p.y, sin * p.x + cos * p.y))
        .collect();
    let anchor = rotated[0];

    let observations = indices
        .iter()
        .zip(&rotated)
        .enumerate()
        .map(|(visit, (&landmark, p))| Observation {
            recording_id: recording_id.to_string(),
            obs_index: visit,
            label: env.landmarks[landmark].id.clone(),
            position: Point2::new(p.x - anchor.x, p.y - anchor.y),
            note: format!("saw {}", env.landmarks[landmark].id),
            timestamp: chrono::DateTime::from_timestamp(visit as i64 * 10, 0).unwrap(),
        })
        .collect();
    Ok(Recording {
        recording_id: recording_id.to_string(),
        observations,
        trajectory: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub report: EvalReport,
    pub objective: f64,
    pub iterations: usize,
    pub restart_index: usize,
    /// True when the alignment had no cross-recording relatedness to work with.
    pub degenerate: bool,
    /// Records left out of the map for lack of any cross-record relatedness.
    pub dropped_recordings: Vec<String>,
}

/// Runs one full simulated experiment: environment → records → exact-id
/// relatedness → alignment → clustering → evaluation. Deterministic in
/// (config, seed).
pub fn run_experiment(config: &SimConfig) -> Result<RunOutcome> {
    config.validate()?;
    let mut env_rng = seeding::rng(&config.environment_label(), config.seed);
    let env = generate_environment(config, &mut env_rng)?;

    let record_label = config.record_label();
    let mut records: Vec<Recording> = Vec::with_capacity(config.num_records);
    for k in 0..config.num_records {
        let mut rng = seeding::rng_indexed(&record_label, config.seed, k as u64);
        let size = sample_record_size(
            config.condition,
            k,
            config.num_records,
            config.n_landmarks,
            &mut rng,
        );
        records.push(synthesize_record(
            &env,
            &format!("rec-{k:02}"),
            size,
            config.noise_sigma,
            &mut rng,
        )?);
    }
    let observations = flatten_observations(&records);

    // In simulation the duplicated ids are known from the environment; the
    // builder adds in-record auto-detection on top.
    let flagged: BTreeSet<String> = if config.drop_duplicates_in_alignment {
        env.duplicated_ids()
    } else {
        BTreeSet::new()
    };
    let options = BuildOptions {
        provider: Provider::ExactId,
        relatedness: RelatednessOptions {
            drop_duplicate_labels: config.drop_duplicates_in_alignment,
            flagged_duplicates: flagged,
            ..Default::default()
        },
        align: AlignmentConfig { seed: config.align_seed(), ..Default::default() },
        link_threshold: DEFAULT_LINK_THRESHOLD,
    };
    let outcome = build_map(&observations, &options)?;
    let report = positional_error(&outcome.map, &env.ground_truth())?;
    Ok(RunOutcome {
        report,
        objective: outcome.alignment.objective,
        iterations: outcome.alignment.iterations,
        restart_index: outcome.alignment.restart_index,
        degenerate: outcome.alignment.degenerate,
        dropped_recordings: outcome.dropped_recordings,
    })
}

/// One sweep cell: metric fields are None when the cell failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub condition: Condition,
    pub n_landmarks: usize,
    pub p: f64,
    pub sigma: f64,
    pub num_records: usize,
    pub seed: u64,
    pub drop_duplicates: bool,
    pub positional_error_m: Option<f64>,
    pub coverage: Option<usize>,
    pub objective: Option<f64>,
    pub runtime_s: f64,
    /// Failure reason for failed cells; not part of the CSV schema.
    pub failure: Option<String>,
}

/// Per-config means over the successful seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMeanRow {
    pub condition: Condition,
    pub n_landmarks: usize,
    pub p: f64,
    pub sigma: f64,
    pub num_records: usize,
    pub drop_duplicates: bool,
    pub seeds_ok: usize,
    pub mean_positional_error_m: Option<f64>,
    pub mean_coverage: Option<f64>,
    pub mean_objective: Option<f64>,
    pub mean_runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub means: Vec<SweepMeanRow>,
}

/// Runs every (config, seed) cell of the grid. `parallelism` bounds the worker
/// count (0 = library default); rows come back in grid-major, seed-minor order
/// regardless of the degree, and cell results are independent of it.
pub fn sweep(grid: &[SimConfig], seeds_per_config: usize, parallelism: usize) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("sweep grid is empty".into()));
    }
    if seeds_per_config == 0 {
        return Err(Error::InvalidInput("seeds_per_config must be at least 1".into()));
    }
    let cells: Vec<SimConfig> = grid
        .iter()
        .flat_map(|config| {
            (0..seeds_per_config as u64).map(move |seed| SimConfig { seed, ..config.clone() })
        })
        .collect();

    let run_cell = |config: &SimConfig| -> SweepRow {
        let started = std::time::Instant::now();
        let outcome = run_experiment(config);
        let runtime_s = started.elapsed().as_secs_f64();
        let mut row = SweepRow {
            condition: config.condition,
            n_landmarks: config.n_landmarks,
            p: config.duplication_ratio,
            sigma: config.noise_sigma,
            num_records: config.num_records,
            seed: config.seed,
            drop_duplicates: config.drop_duplicates_in_alignment,
            positional_error_m: None,
            coverage: None,
            objective: None,
            runtime_s,
            failure: None,
        };
        match outcome {
            Ok(out) => {
                row.positional_error_m = Some(out.report.positional_error);
                row.coverage = Some(out.report.coverage);
                row.objective = Some(out.objective);
            }
            Err(e) => row.failure = Some(e.to_string()),
        }
        row
    };

    let rows: Vec<SweepRow> = if parallelism == 1 {
        cells.iter().map(run_cell).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallelism)
            .build()
            .map_err(|e| Error::InvalidInput(format!("cannot build worker pool: {e}")))?;
        pool.install(|| cells.par_iter().map(run_cell).collect())
    };

    let means = rows
        .chunks(seeds_per_config)
        .map(|chunk| {
            let ok: Vec<&SweepRow> = chunk.iter().filter(|r| r.failure.is_none()).collect();
            let mean_of = |f: &dyn Fn(&SweepRow) -> f64| -> Option<f64> {
                if ok.is_empty() {
                    None
                } else {
                    Some(ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64)
                }
            };
            let first = &chunk[0];
            SweepMeanRow {
                condition: first.condition,
                n_landmarks: first.n_landmarks,
                p: first.p,
                sigma: first.sigma,
                num_records: first.num_records,
                drop_duplicates: first.drop_duplicates,
                seeds_ok: ok.len(),
                mean_positional_error_m: mean_of(&|r| r.positional_error_m.unwrap()),
                mean_coverage: mean_of(&|r| r.coverage.unwrap() as f64),
                mean_objective: mean_of(&|r| r.objective.unwrap()),
                mean_runtime_s: chunk.iter().map(|r| r.runtime_s).sum::<f64>() / chunk.len() as f64,
            }
        })
        .collect();
    Ok(SweepResult { rows, means })
}

/// The named experiment grids reproduced by the sweep presets.
pub fn preset(name: &str) -> Result<Vec<SimConfig>> {
    let conditions = [Condition::Few, Condition::Many, Condition::Mixed];
    let grid = match name {
        // Coverage / error versus number of aggregated records.
        "fig7a" => conditions
            .iter()
            .flat_map(|&condition| {
                [3usize, 6, 9, 12, 15].into_iter().map(move |records| SimConfig {
                    condition,
                    num_records: records,
                    ..SimConfig::default()
                })
            })
            .collect(),
        // Error versus noise scale at 15 records.
        "fig7b" => conditions
            .iter()
            .flat_map(|&condition| {
                [0.1, 0.5, 1.0].into_iter().map(move |sigma| SimConfig {
                    condition,
                    num_records: 15,
                    noise_sigma: sigma,
                    ..SimConfig::default()
                })
            })
            .collect(),
        // Error versus duplication ratio, with and without duplicate filtering.
        "fig7c" => conditions
            .iter()
            .flat_map(|&condition| {
                [0.0, 0.05, 0.1].into_iter().flat_map(move |p| {
                    [false, true].into_iter().map(move |drop| SimConfig {
                        condition,
                        num_records: 15,
                        duplication_ratio: p,
                        drop_duplicates_in_alignment: drop,
                        ..SimConfig::default()
                    })
                })
            })
            .collect(),
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown preset '{other}' (expected fig7a, fig7b, or fig7c)"
            )))
        }
    };
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env_rng(config: &SimConfig) -> ChaCha8Rng {
        seeding::rng(&config.environment_label(), config.seed)
    }

    #[test]
    fn environment_without_duplicates_has_all_unique_ids() {
        let config = SimConfig::default();
        let env = generate_environment(&config, &mut env_rng(&config)).unwrap();
        assert_eq!(env.landmarks.len(), 30);
        assert_eq!(env.n_unique, 30);
        let distinct: BTreeSet<&str> = env.landmarks.iter().map(|l| l.id.as_str()).collect();
        assert_eq!(distinct.len(), 30);
        assert!(distinct.contains("ID-00") && distinct.contains("ID-29"));
        assert!(env.duplicated_ids().is_empty());
    }

    #[test]
    fn duplication_ratio_controls_distinct_ids() {
        let config = SimConfig { duplication_ratio: 0.1, ..Default::default() };
        let env = generate_environment(&config, &mut env_rng(&config)).unwrap();
        assert_eq!(env.landmarks.len(), 30);
        assert_eq!(env.n_unique, 27);
        let distinct: BTreeSet<&str> = env.landmarks.iter().map(|l| l.id.as_str()).collect();
        assert_eq!(distinct.len(), 27, "3 landmarks reuse ids");
        assert!(!env.duplicated_ids().is_empty());
    }

    #[test]
    fn single_landmark_environment() {
        let config = SimConfig { n_landmarks: 1, duplication_ratio: 0.9, ..Default::default() };
        let env = generate_environment(&config, &mut env_rng(&config)).unwrap();
        assert_eq!(env.landmarks.len(), 1);
        assert_eq!(env.n_unique, 1);
        assert_eq!(env.landmarks[0].id, "ID-00");
    }

    #[test]
    fn environment_respects_bounds_and_separation() {
        let config = SimConfig { seed: 3, ..Default::default() };
        let env = generate_environment(&config, &mut env_rng(&config)).unwrap();
        for (i, a) in env.landmarks.iter().enumerate() {
            assert!(a.position.x >= 0.0 && a.position.x <= 10.0);
            assert!(a.position.y >= 0.0 && a.position.y <= 10.0);
            for b in &env.landmarks[i + 1..] {
                assert!(a.position.distance(&b.position) >= 1.0);
            }
        }
    }

    #[test]
    fn impossible_packing_fails_with_generation_error() {
        let config = SimConfig {
            n_landmarks: 100,
            area_side: 2.0,
            min_separation: 1.0,
            ..Default::default()
        };
        let err = generate_environment(&config, &mut env_rng(&config)).unwrap_err();
        assert!(matches!(err, Error::Generation(_)), "{err:?}");
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn record_sizes_follow_conditions() {
        let mut rng = seeding::rng("test/sizes", 1);
        for k in 0..50 {
            let few = sample_record_size(Condition::Few, k, 15, 30, &mut rng);
            assert!((3..=6).contains(&few), "{few}");
            let many = sample_record_size(Condition::Many, k, 15, 30, &mut rng);
            assert!((12..=15).contains(&many), "{many}");
            assert_eq!(sample_record_size(Condition::All, k, 15, 30, &mut rng), 30);
        }
        // Mixed at 15 records: round(1.5) = 2 many-sized records, then few.
        for k in 0..15 {
            let size = sample_record_size(Condition::Mixed, k, 15, 30, &mut rng);
            if k < 2 {
                assert!((12..=15).contains(&size), "record {k} should be many-sized");
            } else {
                assert!((3..=6).contains(&size), "record {k} should be few-sized");
            }
        }
        // Mixed never loses its many-sized record, even for tiny runs.
        let size = sample_record_size(Condition::Mixed, 0, 3, 30, &mut rng);
        assert!((12..=15).contains(&size));
    }

    #[test]
    fn zero_noise_record_preserves_distances_and_anchors_origin() {
        let config = SimConfig::default();
        let env = generate_environment(&config, &mut env_rng(&config)).unwrap();
        let mut rng = seeding::rng("test/record", 7);
        let record = synthesize_record(&env, "rec-00", 5, 0.0, &mut rng).unwrap();
        assert_eq!(record.observations.len(), 5);
        let first = record.observations[0].position;
        assert_eq!((first.x, first.y), (0.0, 0.0), "first visited landmark sits exactly at the origin");

        // Rigid scrambling preserves pairwise distances (σ = 0).
        let by_id: std::collections::BTreeMap<&str, Point2> =
            env.landmarks.iter().map(|l| (l.id.as_str(), l.position)).collect();
        for a in &record.observations {
            for b in &record.observations {
                let truth = by_id[a.label.as_str()].distance(&by_id[b.label.as_str()]);
                let observed = a.position.distance(&b.position);
                assert!((truth - observed).abs() < 1e-9, "{} vs {}", truth, observed);
            }
        }
        // Distinct landmarks, valid recording.
        record.validate().unwrap();
        let labels: BTreeSet<&str> = record.observations.iter().map(|o| o.label.as_str()).collect();
        assert_eq!(labels.len(), 5);
    }

    #[test]
    fn first_position_is_origin_even_with_noise() {
        let config = SimConfig::default();
        let env = generate_environment(&config, &mut env_rng(&config)).unwrap();
        let mut rng = seeding::rng("test/record-noise", 7);
        for _ in 0..10 {
            let record = synthesize_record(&env, "r", 4, 0.8, &mut rng).unwrap();
            let first = record.observations[0].position;
            assert_eq!((first.x, first.y), (0.0, 0.0));
        }
    }

    #[test]
    fn noise_statistics_match_sigma() {
        // Monte Carlo on the injection step itself: per-axis mean → 0 and
        // std → σ. 20,000 samples put the 3-sigma band well inside ±0.02.
        let config = SimConfig { n_landmarks: 2, ..Default::default() };
        let env = generate_environment(&config, &mut env_rng(&config)).unwrap();
        let mut rng = seeding::rng("test/noise", 11);
        let mut offsets: Vec<f64> = Vec::with_capacity(20_000);
        for _ in 0..10_000 {
            let noisy = noisy_positions(&env, &[0, 1], 0.5, &mut rng);
            offsets.push(noisy[0].x - env.landmarks[0].position.x);
            offsets.push(noisy[1].y - env.landmarks[1].position.y);
        }
        let n = offsets.len() as f64;
        let mean = offsets.iter().sum::<f64>() / n;
        let std = (offsets.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!(mean.abs() < 0.02, "noise mean drifted: {mean}");
        assert!((std - 0.5).abs() < 0.02, "noise std off target: {std}");
    }

    #[test]
    fn oversized_record_rejected() {
        let config = SimConfig { n_landmarks: 4, ..Default::default() };
        let env = generate_environment(&config, &mut env_rng(&config)).unwrap();
        let mut rng = seeding::rng("test/oversize", 0);
        assert!(synthesize_record(&env, "r", 5, 0.0, &mut rng).is_err());
    }

    #[test]
    fn zero_noise_experiment_recovers_exactly() {
        let config = SimConfig {
            n_landmarks: 10,
            noise_sigma: 0.0,
            condition: Condition::All,
            num_records: 3,
            ..Default::default()
        };
        let outcome = run_experiment(&config).unwrap();
        assert!(outcome.report.positional_error < 1e-3, "{}", outcome.report.positional_error);
        assert_eq!(outcome.report.coverage, 10);
        assert!(!outcome.degenerate);
    }

    #[test]
    fn experiments_are_deterministic() {
        let config = SimConfig { n_landmarks: 12, num_records: 4, seed: 9, ..Default::default() };
        let a = run_experiment(&config).unwrap();
        let b = run_experiment(&config).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            a.report.positional_error.to_bits(),
            b.report.positional_error.to_bits()
        );
    }

    #[test]
    fn coverage_monotone_in_records_for_nested_prefixes() {
        // Records are derived per-index independently of num_records, so a
        // longer run replays the shorter run's records plus new ones.
        for seed in 0..3 {
            let mut last = 0usize;
            for records in [3usize, 6, 9] {
                let config = SimConfig {
                    n_landmarks: 15,
                    num_records: records,
                    seed,
                    ..Default::default()
                };
                let outcome = run_experiment(&config).unwrap();
                assert!(
                    outcome.report.coverage >= last,
                    "coverage dropped from {last} to {} at {records} records",
                    outcome.report.coverage
                );
                last = outcome.report.coverage;
            }
        }
    }

    #[test]
    fn sweep_emits_one_row_per_cell_in_order() {
        let grid = vec![
            SimConfig { n_landmarks: 8, num_records: 2, ..Default::default() },
            SimConfig { n_landmarks: 8, num_records: 3, ..Default::default() },
        ];
        let result = sweep(&grid, 2, 1).unwrap();
        assert_eq!(result.rows.len(), 4);
        assert_eq!(result.means.len(), 2);
        let order: Vec<(usize, u64)> = result.rows.iter().map(|r| (r.num_records, r.seed)).collect();
        assert_eq!(order, vec![(2, 0), (2, 1), (3, 0), (3, 1)]);
        for row in &result.rows {
            assert!(row.failure.is_none());
            assert!(row.positional_error_m.is_some());
        }
        assert_eq!(result.means[0].seeds_ok, 2);
    }

    #[test]
    fn sweep_rows_identical_across_parallelism_degrees() {
        let grid = vec![
            SimConfig { n_landmarks: 8, num_records: 2, ..Default::default() },
            SimConfig { n_landmarks: 8, num_records: 3, condition: Condition::Many, ..Default::default() },
        ];
        let serial = sweep(&grid, 2, 1).unwrap();
        let parallel = sweep(&grid, 2, 4).unwrap();
        assert_eq!(serial.rows.len(), parallel.rows.len());
        for (a, b) in serial.rows.iter().zip(&parallel.rows) {
            // Everything except wall-clock runtime must agree bit-for-bit.
            assert_eq!(a.positional_error_m.map(f64::to_bits), b.positional_error_m.map(f64::to_bits));
            assert_eq!(a.coverage, b.coverage);
            assert_eq!(a.objective.map(f64::to_bits), b.objective.map(f64::to_bits));
            assert_eq!(a.seed, b.seed);
        }
    }

    #[test]
    fn sweep_records_failures_and_continues() {
        let grid = vec![
            SimConfig { n_landmarks: 100, area_side: 2.0, ..Default::default() }, // unpackable
            SimConfig { n_landmarks: 8, num_records: 2, ..Default::default() },
        ];
        let result = sweep(&grid, 1, 1).unwrap();
        assert_eq!(result.rows.len(), 2);
        assert!(result.rows[0].failure.is_some());
        assert!(result.rows[0].positional_error_m.is_none());
        assert!(result.rows[1].failure.is_none());
        assert_eq!(result.means[0].seeds_ok, 0);
        assert_eq!(result.means[0].mean_positional_error_m, None);
    }

    #[test]
    fn presets_have_the_documented_shapes() {
        let a = preset("fig7a").unwrap();
        assert_eq!(a.len(), 15);
        assert!(a.iter().all(|c| c.noise_sigma == 0.5 && c.duplication_ratio == 0.0));

        let b = preset("fig7b").unwrap();
        assert_eq!(b.len(), 9);
        assert!(b.iter().all(|c| c.num_records == 15));

        let c = preset("fig7c").unwrap();
        assert_eq!(c.len(), 18);
        assert_eq!(c.iter().filter(|cfg| cfg.drop_duplicates_in_alignment).count(), 9);

        assert!(preset("fig9z").is_err());
    }
}
