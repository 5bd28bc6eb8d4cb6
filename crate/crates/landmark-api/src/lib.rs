//! Request/response types for the landmark mapping HTTP API.
//!
//! Everything here is plain serde data. Heavy domain types that already have a
//! stable serialized form (observations, maps, configs, reports) are reused
//! from `landmark-core` rather than mirrored.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use landmark_core::align::{AlignmentConfig, AlignmentResult};
pub use landmark_core::evaluate::EvalReport;
pub use landmark_core::formats::{
    GroundTruthFile, InputRecording, MapFile, ObservationRecord,
};
pub use landmark_core::simulate::{RunOutcome, SimConfig, SweepResult};

/// API route paths, shared by the server and the client.
pub mod paths {
    pub const HEALTH: &str = "/v1/health";
    pub const INGEST: &str = "/v1/ingest";
    pub const ALIGN: &str = "/v1/align";
    pub const EVALUATE: &str = "/v1/evaluate";
    pub const SIMULATE: &str = "/v1/simulate";
    pub const SWEEP: &str = "/v1/sweep";
    pub const RENDER: &str = "/v1/render";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub version: String,
}

/// Error payload returned with every non-2xx response.
///
/// `kind` round-trips the server-side error variant so a client can rebuild
/// it (and the process exit code it implies) without parsing the message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub kind: String,
    pub message: String,
}

impl ErrorBody {
    pub fn from_error(err: &landmark_core::Error) -> Self {
        use landmark_core::Error as E;
        // Store the payload without the Display prefix: `to_error` adds the
        // prefix back through the variant constructor.
        let (kind, message) = match err {
            E::InvalidInput(m) => ("invalid_input", m.clone()),
            E::OutOfRange { .. } => ("out_of_range", err.to_string()),
            E::Parse(m) => ("parse", m.clone()),
            E::Degenerate(m) => ("degenerate", m.clone()),
            E::Unmatchable(m) => ("unmatchable", m.clone()),
            E::Generation(m) => ("generation", m.clone()),
            E::Transport(m) => ("transport", m.clone()),
            E::Protocol(m) => ("protocol", m.clone()),
            E::Io(e) => ("io", e.to_string()),
        };
        Self { kind: kind.to_string(), message }
    }

    /// Rebuild a core error carrying this body's message.
    ///
    /// `out_of_range` loses its numeric fields over the wire and comes back as
    /// `InvalidInput` (same exit code); unknown kinds become `Protocol` since
    /// the server broke the contract.
    pub fn to_error(&self) -> landmark_core::Error {
        use landmark_core::Error as E;
        let msg = self.message.clone();
        match self.kind.as_str() {
            "invalid_input" | "out_of_range" => E::InvalidInput(msg),
            "parse" => E::Parse(msg),
            "degenerate" => E::Degenerate(msg),
            "unmatchable" => E::Unmatchable(msg),
            "generation" => E::Generation(msg),
            "transport" => E::Transport(msg),
            "protocol" => E::Protocol(msg),
            "io" => E::Io(std::io::Error::other(msg)),
            _ => E::Protocol(format!("unknown error kind '{}': {msg}", self.kind)),
        }
    }
}

/// Relatedness provider selection in wire form.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProviderSpec {
    #[default]
    ExactId,
    Lexical,
    Service {
        endpoint: String,
        #[serde(default)]
        timeout_s: Option<f64>,
    },
}

impl ProviderSpec {
    pub fn to_provider(&self) -> landmark_core::relatedness::Provider {
        use landmark_core::relatedness::Provider;
        match self {
            ProviderSpec::ExactId => Provider::ExactId,
            ProviderSpec::Lexical => Provider::Lexical,
            ProviderSpec::Service { endpoint, timeout_s } => Provider::Service {
                endpoint: endpoint.clone(),
                timeout: duration_or_default(*timeout_s),
            },
        }
    }
}

pub fn duration_or_default(timeout_s: Option<f64>) -> Duration {
    match timeout_s {
        Some(s) if s > 0.0 => Duration::from_secs_f64(s),
        _ => landmark_core::identify::DEFAULT_SERVICE_TIMEOUT,
    }
}

/// Stationary-stop detection knobs, mirroring the trajectory module defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarySpec {
    pub speed_threshold: f64,
    pub window: f64,
}

impl StationarySpec {
    pub fn to_params(&self) -> landmark_core::trajectory::StationaryParams {
        landmark_core::trajectory::StationaryParams {
            speed_threshold: self.speed_threshold,
            window: self.window,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestRequest {
    pub recordings: Vec<InputRecording>,
    /// Same shape as the category table file: label → keywords.
    #[serde(default)]
    pub category_table: Option<BTreeMap<String, Vec<String>>>,
    #[serde(default)]
    pub labeling_endpoint: Option<String>,
    #[serde(default)]
    pub timeout_s: Option<f64>,
    #[serde(default)]
    pub stationary: Option<StationarySpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestResponse {
    pub observations: Vec<ObservationRecord>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignRequest {
    pub observations: Vec<ObservationRecord>,
    #[serde(default)]
    pub provider: ProviderSpec,
    #[serde(default)]
    pub config: AlignmentConfig,
    #[serde(default)]
    pub drop_duplicates: bool,
    #[serde(default)]
    pub flagged_duplicates: Vec<String>,
    /// Gaussian kernel bandwidth for embedding providers; None keeps the default.
    #[serde(default)]
    pub tau: Option<f64>,
    /// Minimum relatedness for two observations to share a cluster.
    #[serde(default)]
    pub link_threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignResponse {
    pub alignment: AlignmentResult,
    pub map: MapFile,
    pub dropped_recordings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateRequest {
    pub map: MapFile,
    pub ground_truth: GroundTruthFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateResponse {
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateRequest {
    pub config: SimConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateResponse {
    pub outcome: RunOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRequest {
    /// Named grid (fig7a / fig7b / fig7c); exclusive with `grid`.
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub grid: Vec<SimConfig>,
    #[serde(default = "default_seeds")]
    pub seeds_per_config: usize,
    /// Worker threads; 1 is serial, 0 picks the server default. Results are
    /// identical at any degree.
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
}

fn default_seeds() -> usize {
    5
}

fn default_parallelism() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResponse {
    pub result: SweepResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderRequest {
    pub map: MapFile,
    #[serde(default)]
    pub ground_truth: Option<GroundTruthFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderResponse {
    pub svg: String,
}
