//! Command implementations. Every command reads and writes local files;
//! `--remote` only changes where the pipeline math runs.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use landmark_api as api;
use landmark_client::Client;
use landmark_core::align::AlignmentConfig;
use landmark_core::formats::{self, MapFile, ObservationRecord};
use landmark_core::identify::LabelingClient;
use landmark_core::model::Observation;
use landmark_core::pipeline::{self, BuildOptions, IngestOptions};
use landmark_core::relatedness::{Provider, RelatednessOptions};
use landmark_core::simulate::{self, Condition, RunOutcome, SimConfig, SweepResult};
use landmark_core::trajectory::StationaryParams;
use landmark_core::{aggregate, evaluate, render, Error, Result};

use crate::args::{
    AlignArgs, Cli, Command, EvalArgs, IngestArgs, RenderArgs, ServeArgs, SimulateArgs, SweepArgs,
};
use crate::config::{self, FileConfig};

pub fn run(cli: Cli) -> Result<()> {
    let file = config::load(cli.config.as_deref())?;
    let remote = config::resolve_remote(&cli.remote, &file);
    let timeout_s = config::resolve_timeout(cli.timeout_s, &file)?;

    match cli.command {
        Command::Ingest(args) => ingest(args, remote.as_deref(), timeout_s),
        Command::Align(args) => align(args, remote.as_deref(), timeout_s),
        Command::Eval(args) => eval(args, remote.as_deref(), timeout_s),
        Command::Simulate(args) => simulate_cmd(args, remote.as_deref(), timeout_s),
        Command::Sweep(args) => sweep(args, remote.as_deref(), timeout_s, &file),
        Command::Render(args) => render_cmd(args, remote.as_deref(), timeout_s),
        Command::Serve(args) => serve(args),
    }
}

// ---------------------------------------------------------------- file I/O

fn with_path(e: std::io::Error, path: &Path) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| with_path(e, path))?))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| with_path(e, path))?))
}

/// Write target for outputs that default to stdout.
fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    match path {
        Some(p) => Ok(Box::new(create(p)?)),
        None => Ok(Box::new(std::io::stdout().lock())),
    }
}

fn remote_client(base: &str, timeout_s: Option<f64>) -> Result<Client> {
    let timeout = match timeout_s {
        Some(s) if s > 0.0 => Some(std::time::Duration::from_secs_f64(s)),
        _ => None,
    };
    Client::new(base, timeout)
}

// ------------------------------------------------------------------ ingest

fn ingest(args: IngestArgs, remote: Option<&str>, timeout_s: Option<f64>) -> Result<()> {
    let recordings = formats::read_recordings_jsonl(open(&args.recordings)?)?;
    let labeling_endpoint =
        config::resolve_endpoint(args.labeling_endpoint, "LABELING_ENDPOINT");
    let stationary_flags = args.speed_threshold.is_some() || args.window.is_some();
    let defaults = StationaryParams::default();
    let stationary = StationaryParams {
        speed_threshold: args.speed_threshold.unwrap_or(defaults.speed_threshold),
        window: args.window.unwrap_or(defaults.window),
    };

    let (observations, warnings) = match remote {
        Some(base) => {
            let table = args
                .categories
                .as_deref()
                .map(|p| formats::read_category_table_json(open(p)?))
                .transpose()?
                .map(|t| {
                    t.entries.into_iter().map(|e| (e.label, e.keywords)).collect()
                });
            let response = remote_client(base, timeout_s)?.ingest(&api::IngestRequest {
                recordings,
                category_table: table,
                labeling_endpoint,
                timeout_s,
                stationary: stationary_flags.then_some(api::StationarySpec {
                    speed_threshold: stationary.speed_threshold,
                    window: stationary.window,
                }),
            })?;
            (response.observations, response.warnings)
        }
        None => {
            let table = args
                .categories
                .as_deref()
                .map(|p| formats::read_category_table_json(open(p)?))
                .transpose()?;
            let labeling = labeling_endpoint
                .map(|e| LabelingClient::new(e, api::duration_or_default(timeout_s)))
                .transpose()?;
            let outcome = pipeline::ingest(
                &recordings,
                &IngestOptions {
                    category_table: table.as_ref(),
                    labeling: labeling.as_ref(),
                    stationary,
                },
            )?;
            (outcome.observations, outcome.warnings)
        }
    };

    for warning in &warnings {
        eprintln!("warning: {warning}");
    }
    formats::write_observations_jsonl(sink(args.out.as_deref())?, &observations)?;
    Ok(())
}

// ------------------------------------------------------------------- align

fn provider_from(args: &AlignArgs, timeout_s: Option<f64>) -> Result<api::ProviderSpec> {
    match args.provider.as_str() {
        "exact-id" | "exact_id" => Ok(api::ProviderSpec::ExactId),
        "lexical" => Ok(api::ProviderSpec::Lexical),
        "service" => {
            let endpoint =
                config::resolve_endpoint(args.embedding_endpoint.clone(), "EMBEDDING_ENDPOINT")
                    .ok_or_else(|| {
                        Error::InvalidInput(
                            "--provider service needs --embedding-endpoint or EMBEDDING_ENDPOINT"
                                .to_string(),
                        )
                    })?;
            Ok(api::ProviderSpec::Service { endpoint, timeout_s })
        }
        other => Err(Error::InvalidInput(format!(
            "unknown provider '{other}' (expected exact-id, lexical, or service)"
        ))),
    }
}

fn alignment_config_from(args: &AlignArgs) -> AlignmentConfig {
    let mut config = AlignmentConfig::default();
    if let Some(v) = args.learning_rate {
        config.learning_rate = v;
    }
    if let Some(v) = args.max_iters {
        config.max_iters = v;
    }
    if let Some(v) = args.rel_tol {
        config.rel_tol = v;
    }
    if let Some(v) = args.restarts {
        config.restarts = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    config
}

fn align(args: AlignArgs, remote: Option<&str>, timeout_s: Option<f64>) -> Result<()> {
    let records = formats::read_observations_jsonl(open(&args.observations)?)?;
    let provider = provider_from(&args, timeout_s)?;
    let alignment_config = alignment_config_from(&args);

    let (alignment, map, dropped) = match remote {
        Some(base) => {
            let response = remote_client(base, timeout_s)?.align(&api::AlignRequest {
                observations: records,
                provider,
                config: alignment_config,
                drop_duplicates: args.drop_duplicates,
                flagged_duplicates: args.flag_duplicate.clone(),
                tau: args.tau,
                link_threshold: args.link_threshold,
            })?;
            (response.alignment, response.map, response.dropped_recordings)
        }
        None => {
            let mut relatedness = RelatednessOptions {
                drop_duplicate_labels: args.drop_duplicates,
                flagged_duplicates: args.flag_duplicate.iter().cloned().collect(),
                ..RelatednessOptions::default()
            };
            if let Some(tau) = args.tau {
                relatedness.tau = tau;
            }
            let provider: Provider = provider.to_provider();
            let observations: Vec<Observation> =
                records.iter().map(ObservationRecord::to_observation).collect();
            let outcome = pipeline::build_map(
                &observations,
                &BuildOptions {
                    provider,
                    relatedness,
                    align: alignment_config,
                    link_threshold: args
                        .link_threshold
                        .unwrap_or(aggregate::DEFAULT_LINK_THRESHOLD),
                },
            )?;
            (
                outcome.alignment,
                MapFile::from_map(&outcome.map),
                outcome.dropped_recordings,
            )
        }
    };

    if alignment.degenerate {
        return Err(Error::Degenerate(
            "no cross-recording relatedness: the transforms would be arbitrary, \
             so no files were written"
                .to_string(),
        ));
    }
    if !dropped.is_empty() {
        eprintln!(
            "warning: left out recordings whose pose the links cannot pin down: {}",
            dropped.join(", ")
        );
    }

    formats::write_alignment_json(create(&args.transforms_out)?, &alignment)?;
    formats::write_map_json(create(&args.map_out)?, &map)?;
    println!("objective: {}", alignment.objective);
    println!("iterations: {} (restart {})", alignment.iterations, alignment.restart_index);
    println!("clusters: {}", map.landmarks.len());
    Ok(())
}

// -------------------------------------------------------------------- eval

fn eval(args: EvalArgs, remote: Option<&str>, timeout_s: Option<f64>) -> Result<()> {
    let map = formats::read_map_json(open(&args.map)?)?;
    let truth = formats::read_ground_truth_json(open(&args.truth)?)?;

    let report = match remote {
        Some(base) => {
            remote_client(base, timeout_s)?
                .evaluate(&api::EvaluateRequest { map, ground_truth: truth })?
                .report
        }
        None => evaluate::positional_error(&map.to_map(), &truth.to_truth())?,
    };

    println!("positional error: {} m", report.positional_error);
    println!("coverage: {}", report.coverage);
    println!("matched pairs: {}", report.matched_pairs);
    println!("scale: {}", report.scale);
    println!("clusters: {}", report.cluster_count);
    if let Some(path) = args.json_out.as_deref() {
        let mut out = create(path)?;
        serde_json::to_writer_pretty(&mut out, &report)
            .map_err(|e| Error::Parse(format!("cannot serialize report: {e}")))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

// ---------------------------------------------------------------- simulate

fn sim_config_from(args: &SimulateArgs) -> Result<SimConfig> {
    Ok(SimConfig {
        n_landmarks: args.n_landmarks,
        duplication_ratio: args.duplication_ratio,
        noise_sigma: args.sigma,
        condition: args.condition.parse()?,
        num_records: args.records,
        seed: args.seed,
        area_side: args.area_side,
        min_separation: args.min_separation,
        drop_duplicates_in_alignment: args.drop_duplicates,
    })
}

fn simulate_cmd(args: SimulateArgs, remote: Option<&str>, timeout_s: Option<f64>) -> Result<()> {
    let config = sim_config_from(&args)?;
    let outcome: RunOutcome = match remote {
        Some(base) => {
            remote_client(base, timeout_s)?
                .simulate(&api::SimulateRequest { config })?
                .outcome
        }
        None => simulate::run_experiment(&config)?,
    };

    if args.json {
        let stdout = std::io::stdout();
        let mut out = stdout.lock();
        serde_json::to_writer_pretty(&mut out, &outcome)
            .map_err(|e| Error::Parse(format!("cannot serialize outcome: {e}")))?;
        out.write_all(b"\n")?;
        return Ok(());
    }
    println!("positional error: {} m", outcome.report.positional_error);
    println!("coverage: {}", outcome.report.coverage);
    println!("objective: {}", outcome.objective);
    println!("iterations: {} (restart {})", outcome.iterations, outcome.restart_index);
    if outcome.degenerate {
        println!("degenerate: no cross-recording relatedness");
    }
    if !outcome.dropped_recordings.is_empty() {
        println!("dropped recordings: {}", outcome.dropped_recordings.join(", "));
    }
    Ok(())
}

// ------------------------------------------------------------------- sweep

fn sweep_grid_from(args: &SweepArgs) -> Result<Vec<SimConfig>> {
    let grid_flags_used = !(args.n_landmarks.is_empty()
        && args.duplication_ratio.is_empty()
        && args.sigma.is_empty()
        && args.condition.is_empty()
        && args.records.is_empty());
    match (&args.preset, grid_flags_used) {
        (Some(_), true) => Err(Error::InvalidInput(
            "give either --preset or grid flags (--n/--p/--sigma/--condition/--records), not both"
                .to_string(),
        )),
        (Some(name), false) => simulate::preset(name),
        (None, false) => Err(Error::InvalidInput(
            "sweep needs --preset or at least one grid flag".to_string(),
        )),
        (None, true) => {
            let defaults = SimConfig::default();
            let ns =
                if args.n_landmarks.is_empty() { vec![defaults.n_landmarks] } else { args.n_landmarks.clone() };
            let ps = if args.duplication_ratio.is_empty() {
                vec![defaults.duplication_ratio]
            } else {
                args.duplication_ratio.clone()
            };
            let sigmas =
                if args.sigma.is_empty() { vec![defaults.noise_sigma] } else { args.sigma.clone() };
            let conditions: Vec<Condition> = if args.condition.is_empty() {
                vec![defaults.condition]
            } else {
                args.condition.iter().map(|c| c.parse()).collect::<Result<_>>()?
            };
            let records =
                if args.records.is_empty() { vec![defaults.num_records] } else { args.records.clone() };

            // Cartesian product of the supplied axes, in flag order.
            let mut grid = Vec::new();
            for &n in &ns {
                for &p in &ps {
                    for &sigma in &sigmas {
                        for &condition in &conditions {
                            for &num_records in &records {
                                grid.push(SimConfig {
                                    n_landmarks: n,
                                    duplication_ratio: p,
                                    noise_sigma: sigma,
                                    condition,
                                    num_records,
                                    drop_duplicates_in_alignment: args.drop_duplicates,
                                    ..SimConfig::default()
                                });
                            }
                        }
                    }
                }
            }
            Ok(grid)
        }
    }
}

fn means_path_for(rows_path: &Path) -> PathBuf {
    match rows_path.extension().and_then(|e| e.to_str()) {
        Some(ext) => rows_path.with_extension(format!("means.{ext}")),
        None => rows_path.with_extension("means"),
    }
}

fn sweep(
    args: SweepArgs,
    remote: Option<&str>,
    timeout_s: Option<f64>,
    file: &FileConfig,
) -> Result<()> {
    let parallelism = config::resolve_parallel(args.parallel, file);
    let result: SweepResult = match remote {
        Some(base) => {
            let request = match (&args.preset, sweep_grid_from(&args)) {
                // Let the service expand presets; ship explicit grids as data.
                (Some(name), Ok(_)) => api::SweepRequest {
                    preset: Some(name.clone()),
                    grid: vec![],
                    seeds_per_config: args.seeds,
                    parallelism,
                },
                (None, Ok(grid)) => api::SweepRequest {
                    preset: None,
                    grid,
                    seeds_per_config: args.seeds,
                    parallelism,
                },
                (_, Err(e)) => return Err(e),
            };
            remote_client(base, timeout_s)?.sweep(&request)?.result
        }
        None => {
            let grid = sweep_grid_from(&args)?;
            simulate::sweep(&grid, args.seeds, parallelism)?
        }
    };

    let failures = result.rows.iter().filter(|r| r.failure.is_some()).count();
    if failures > 0 {
        eprintln!("warning: {failures} of {} cells failed; see the failure-row blanks", result.rows.len());
    }
    let means_out = args.means_out.clone().unwrap_or_else(|| means_path_for(&args.out));
    formats::write_sweep_rows_csv(create(&args.out)?, &result.rows)?;
    formats::write_sweep_means_csv(create(&means_out)?, &result.means)?;
    println!(
        "wrote {} rows to {} and {} means to {}",
        result.rows.len(),
        args.out.display(),
        result.means.len(),
        means_out.display()
    );
    Ok(())
}

// ------------------------------------------------------------------ render

fn render_cmd(args: RenderArgs, remote: Option<&str>, timeout_s: Option<f64>) -> Result<()> {
    let map = formats::read_map_json(open(&args.map)?)?;
    let truth = args
        .truth
        .as_deref()
        .map(|p| formats::read_ground_truth_json(open(p)?))
        .transpose()?;

    let svg = match remote {
        Some(base) => {
            remote_client(base, timeout_s)?
                .render(&api::RenderRequest { map, ground_truth: truth })?
                .svg
        }
        None => {
            let truth = truth.as_ref().map(|t| t.to_truth());
            render::render_svg(&map.to_map(), truth.as_ref())?
        }
    };
    let mut out = sink(args.out.as_deref())?;
    out.write_all(svg.as_bytes())?;
    Ok(())
}

// ------------------------------------------------------------------- serve

fn serve(args: ServeArgs) -> Result<()> {
    let addr: std::net::SocketAddr = args
        .bind
        .parse()
        .map_err(|e| Error::InvalidInput(format!("invalid bind address '{}': {e}", args.bind)))?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(Error::Io)?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(Error::Io)?;
        let local = listener.local_addr().map_err(Error::Io)?;
        // Announce the resolved address (port 0 binds ephemerally) so callers
        // can connect; flush so waiting parents see it immediately.
        println!("listening on http://{local}");
        std::io::stdout().flush().map_err(Error::Io)?;
        landmark_service::serve(listener).await.map_err(Error::Io)
    })
}
