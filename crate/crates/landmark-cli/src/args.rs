//! Command-line surface. Values that need domain validation (conditions,
//! providers) stay strings here and are parsed in `exec`, so every bad value
//! flows through the same error-to-exit-code mapping.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "landmark",
    version,
    about = "Build, score, and simulate collective landmark maps"
)]
pub struct Cli {
    /// Run pipeline work on a landmark service at this base URL instead of
    /// in-process (e.g. http://127.0.0.1:8080)
    #[arg(long, global = true, value_name = "URL")]
    pub remote: Option<String>,

    /// HTTP timeout in seconds for service calls; 0 disables the deadline
    /// (env: HTTP_TIMEOUT_S)
    #[arg(long = "timeout-s", global = true, value_name = "SECONDS")]
    pub timeout_s: Option<f64>,

    /// TOML file with defaults; precedence is flags > environment > file
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn raw recordings (trajectories + annotations) into labeled observations
    Ingest(IngestArgs),
    /// Align observations into a shared frame and build the landmark map
    Align(AlignArgs),
    /// Score a map against ground-truth landmark positions
    Eval(EvalArgs),
    /// Run one synthetic experiment end to end
    Simulate(SimulateArgs),
    /// Run a grid of synthetic experiments and write row + mean CSVs
    Sweep(SweepArgs),
    /// Draw a map, optionally over ground truth, as an SVG
    Render(RenderArgs),
    /// Start the HTTP service
    Serve(ServeArgs),
}

#[derive(Debug, clap::Args)]
pub struct IngestArgs {
    /// Recordings file (JSONL, one recording per line)
    #[arg(long, value_name = "FILE")]
    pub recordings: PathBuf,

    /// Category table (JSON: {"label": ["keyword", ...]}) for rule-based labeling
    #[arg(long, value_name = "FILE")]
    pub categories: Option<PathBuf>,

    /// Labeling service base URL (env: LABELING_ENDPOINT); needs --categories
    #[arg(long = "labeling-endpoint", value_name = "URL")]
    pub labeling_endpoint: Option<String>,

    /// Stationary-stop speed threshold in m/s
    #[arg(long = "speed-threshold", value_name = "MPS")]
    pub speed_threshold: Option<f64>,

    /// Stationary-stop window width in seconds
    #[arg(long, value_name = "SECONDS")]
    pub window: Option<f64>,

    /// Observations output (JSONL); stdout when omitted
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct AlignArgs {
    /// Observations file (JSONL)
    #[arg(long, value_name = "FILE")]
    pub observations: PathBuf,

    /// Relatedness provider: exact-id, lexical, or service
    #[arg(long, default_value = "exact-id", value_name = "NAME")]
    pub provider: String,

    /// Embedding service base URL for --provider service (env: EMBEDDING_ENDPOINT)
    #[arg(long = "embedding-endpoint", value_name = "URL")]
    pub embedding_endpoint: Option<String>,

    /// Gaussian kernel bandwidth for embedding providers
    #[arg(long, value_name = "TAU")]
    pub tau: Option<f64>,

    /// Initial step size for the line-searched gradient descent
    #[arg(long = "learning-rate", value_name = "RATE")]
    pub learning_rate: Option<f64>,

    /// Gradient-descent iteration cap per restart
    #[arg(long = "max-iters", value_name = "N")]
    pub max_iters: Option<usize>,

    /// Relative objective decrease below which descent stops
    #[arg(long = "rel-tol", value_name = "TOL")]
    pub rel_tol: Option<f64>,

    /// Descent runs; the first starts from identity, the rest from random poses
    #[arg(long, value_name = "N")]
    pub restarts: Option<usize>,

    /// Seed for the random restart poses
    #[arg(long, value_name = "SEED")]
    pub seed: Option<u64>,

    /// Exclude duplicated labels from the alignment objective
    #[arg(long = "drop-duplicates")]
    pub drop_duplicates: bool,

    /// Label known to be duplicated (repeatable); implies nothing unless
    /// --drop-duplicates is set
    #[arg(long = "flag-duplicate", value_name = "LABEL")]
    pub flag_duplicate: Vec<String>,

    /// Minimum relatedness for two observations to share a cluster
    #[arg(long = "link-threshold", value_name = "S")]
    pub link_threshold: Option<f64>,

    /// Per-recording transforms output (JSON)
    #[arg(long = "transforms-out", default_value = "transforms.json", value_name = "FILE")]
    pub transforms_out: PathBuf,

    /// Landmark map output (JSON)
    #[arg(long = "map-out", default_value = "map.json", value_name = "FILE")]
    pub map_out: PathBuf,
}

#[derive(Debug, clap::Args)]
pub struct EvalArgs {
    /// Map file (JSON)
    #[arg(long, value_name = "FILE")]
    pub map: PathBuf,

    /// Ground-truth file (JSON: {"landmarks": [{"id", "x", "y"}]})
    #[arg(long, value_name = "FILE")]
    pub truth: PathBuf,

    /// Also write the full report as JSON
    #[arg(long = "json-out", value_name = "FILE")]
    pub json_out: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct SimulateArgs {
    /// Number of landmarks in the synthetic environment
    #[arg(long = "n", default_value_t = 30, value_name = "N")]
    pub n_landmarks: usize,

    /// Fraction of landmarks given an already-used id
    #[arg(long = "p", default_value_t = 0.0, value_name = "P")]
    pub duplication_ratio: f64,

    /// Per-axis Gaussian position noise in meters
    #[arg(long, default_value_t = 0.5, value_name = "SIGMA")]
    pub sigma: f64,

    /// Visit-size condition: few, many, mixed, or all
    #[arg(long, default_value = "few", value_name = "NAME")]
    pub condition: String,

    /// Number of synthetic recordings
    #[arg(long, default_value_t = 3, value_name = "N")]
    pub records: usize,

    /// Seed for environment generation, noise, and restarts
    #[arg(long, default_value_t = 0, value_name = "SEED")]
    pub seed: u64,

    /// Exclude duplicated-id landmarks from the alignment objective
    #[arg(long = "drop-duplicates")]
    pub drop_duplicates: bool,

    /// Environment square side in meters
    #[arg(long = "area-side", default_value_t = 10.0, value_name = "M")]
    pub area_side: f64,

    /// Minimum landmark separation in meters
    #[arg(long = "min-separation", default_value_t = 1.0, value_name = "M")]
    pub min_separation: f64,

    /// Print the full outcome as JSON instead of the summary
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, clap::Args)]
pub struct SweepArgs {
    /// Named grid: fig7a, fig7b, or fig7c (exclusive with the grid flags)
    #[arg(long, value_name = "NAME")]
    pub preset: Option<String>,

    /// Landmark count; repeat the flag to sweep several values
    #[arg(long = "n", value_name = "N")]
    pub n_landmarks: Vec<usize>,

    /// Duplication ratio; repeatable
    #[arg(long = "p", value_name = "P")]
    pub duplication_ratio: Vec<f64>,

    /// Noise sigma; repeatable
    #[arg(long, value_name = "SIGMA")]
    pub sigma: Vec<f64>,

    /// Condition (few/many/mixed/all); repeatable
    #[arg(long, value_name = "NAME")]
    pub condition: Vec<String>,

    /// Record count; repeatable
    #[arg(long, value_name = "N")]
    pub records: Vec<usize>,

    /// Exclude duplicated-id landmarks from the alignment objective
    #[arg(long = "drop-duplicates")]
    pub drop_duplicates: bool,

    /// Seeds per grid cell
    #[arg(long, default_value_t = 5, value_name = "N")]
    pub seeds: usize,

    /// Worker threads (default: available processors); results are identical
    /// at any degree
    #[arg(long, value_name = "N")]
    pub parallel: Option<usize>,

    /// Rows CSV output path
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,

    /// Means CSV output path (default: rows path with a .means.csv suffix)
    #[arg(long = "means-out", value_name = "FILE")]
    pub means_out: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct RenderArgs {
    /// Map file (JSON)
    #[arg(long, value_name = "FILE")]
    pub map: PathBuf,

    /// Ground-truth file to overlay (JSON)
    #[arg(long, value_name = "FILE")]
    pub truth: Option<PathBuf>,

    /// SVG output; stdout when omitted
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct ServeArgs {
    /// Address to listen on; port 0 picks an ephemeral port
    #[arg(long, default_value = "127.0.0.1:8080", value_name = "ADDR:PORT")]
    pub bind: String,
}
