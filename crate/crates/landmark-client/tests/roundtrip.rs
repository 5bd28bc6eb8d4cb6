//! End-to-end client↔service round trips over a real TCP socket.

use chrono::{DateTime, Utc};
use landmark_api as api;
use landmark_client::Client;
use landmark_core::formats::ObservationRecord;
use landmark_core::Error;

/// Boot the service on an ephemeral port; returns its base URL. The runtime
/// lives on a detached thread for the rest of the test process.
fn spawn_service() -> String {
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()
        .expect("runtime");
    let listener = runtime
        .block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))
        .expect("bind ephemeral port");
    let addr = listener.local_addr().expect("local addr");
    std::thread::spawn(move || {
        runtime.block_on(landmark_service::serve(listener)).expect("serve");
    });
    format!("http://{addr}")
}

fn obs(rec: &str, idx: usize, label: &str, x: f64, y: f64) -> ObservationRecord {
    ObservationRecord {
        recording_id: rec.to_string(),
        obs_index: idx,
        label: label.to_string(),
        x,
        y,
        note: format!("saw {label}"),
        timestamp: DateTime::<Utc>::from_timestamp(idx as i64, 0).unwrap(),
        identified: true,
    }
}

#[test]
fn full_pipeline_round_trip_over_http() {
    let base = spawn_service();
    let client = Client::new(&base, None).unwrap();

    let health = client.health().unwrap();
    assert_eq!(health.status, "ok");

    // Ingest: explicit positions plus a category table.
    let ingest = client
        .ingest(&api::IngestRequest {
            recordings: vec![landmark_core::formats::InputRecording {
                recording_id: "r1".to_string(),
                trajectory: None,
                annotations: vec![landmark_core::formats::InputAnnotation {
                    t: Some(0.0),
                    timestamp: None,
                    text: "two cookies left".to_string(),
                    x: Some(1.0),
                    y: Some(2.0),
                }],
            }],
            category_table: Some(
                [("Snacks".to_string(), vec!["cookie".to_string()])].into_iter().collect(),
            ),
            labeling_endpoint: None,
            timeout_s: None,
            stationary: None,
        })
        .unwrap();
    assert_eq!(ingest.observations.len(), 1);
    assert_eq!(ingest.observations[0].label, "Snacks");

    // Align two quarter-turn recordings of the same pair of landmarks.
    let aligned = client
        .align(&api::AlignRequest {
            observations: vec![
                obs("a", 0, "L1", 0.0, 0.0),
                obs("a", 1, "L2", 2.0, 0.0),
                obs("b", 0, "L1", 0.0, 0.0),
                obs("b", 1, "L2", 0.0, -2.0),
            ],
            provider: api::ProviderSpec::ExactId,
            config: api::AlignmentConfig::default(),
            drop_duplicates: false,
            flagged_duplicates: vec![],
            tau: None,
            link_threshold: None,
        })
        .unwrap();
    assert!(!aligned.alignment.degenerate);
    assert_eq!(aligned.map.landmarks.len(), 2);
    assert!(aligned.alignment.objective < 1e-8);

    // Evaluate the produced map against truth in the first recording's frame.
    let report = client
        .evaluate(&api::EvaluateRequest {
            map: aligned.map.clone(),
            ground_truth: api::GroundTruthFile {
                landmarks: vec![
                    landmark_core::formats::GroundTruthEntry {
                        id: "L1".to_string(),
                        x: 0.0,
                        y: 0.0,
                    },
                    landmark_core::formats::GroundTruthEntry {
                        id: "L2".to_string(),
                        x: 2.0,
                        y: 0.0,
                    },
                ],
            },
        })
        .unwrap()
        .report;
    assert!(report.positional_error < 1e-6, "{report:?}");
    assert_eq!(report.coverage, 2);

    // Render the same map with truth overlay.
    let svg = client
        .render(&api::RenderRequest { map: aligned.map, ground_truth: None })
        .unwrap()
        .svg;
    assert!(svg.starts_with("<svg"));
}

#[test]
fn simulate_and_sweep_match_in_process_results() {
    let base = spawn_service();
    let client = Client::new(&base, None).unwrap();

    let config = api::SimConfig {
        n_landmarks: 8,
        noise_sigma: 0.0,
        condition: landmark_core::simulate::Condition::All,
        num_records: 2,
        seed: 3,
        ..api::SimConfig::default()
    };
    let remote = client.simulate(&api::SimulateRequest { config: config.clone() }).unwrap();
    let local = landmark_core::simulate::run_experiment(&config).unwrap();
    assert_eq!(remote.outcome.report.coverage, local.report.coverage);
    assert_eq!(
        remote.outcome.report.positional_error.to_bits(),
        local.report.positional_error.to_bits(),
        "remote and in-process runs are bit-identical"
    );
    assert_eq!(remote.outcome.objective.to_bits(), local.objective.to_bits());

    let sweep = client
        .sweep(&api::SweepRequest {
            preset: None,
            grid: vec![config.clone()],
            seeds_per_config: 2,
            parallelism: 1,
        })
        .unwrap()
        .result;
    let local_sweep = landmark_core::simulate::sweep(&[config], 2, 1).unwrap();
    // Wall-clock columns are the one legitimate difference between runs.
    let normalized = |mut result: api::SweepResult| {
        for row in &mut result.rows {
            row.runtime_s = 0.0;
        }
        for mean in &mut result.means {
            mean.mean_runtime_s = 0.0;
        }
        result
    };
    assert_eq!(normalized(sweep), normalized(local_sweep));
}

#[test]
fn server_errors_rebuild_core_error_kinds() {
    let base = spawn_service();
    let client = Client::new(&base, None).unwrap();

    let empty = client.align(&api::AlignRequest {
        observations: vec![],
        provider: api::ProviderSpec::ExactId,
        config: api::AlignmentConfig::default(),
        drop_duplicates: false,
        flagged_duplicates: vec![],
        tau: None,
        link_threshold: None,
    });
    match empty {
        Err(Error::InvalidInput(_)) => {}
        other => panic!("expected InvalidInput, got {other:?}"),
    }

    let unmatchable = client.evaluate(&api::EvaluateRequest {
        map: api::MapFile {
            frame_note: "n".to_string(),
            landmarks: vec![landmark_core::formats::MapLandmark {
                label: "A".to_string(),
                x: 0.0,
                y: 0.0,
                notes: vec![],
            }],
        },
        ground_truth: api::GroundTruthFile {
            landmarks: vec![landmark_core::formats::GroundTruthEntry {
                id: "Z".to_string(),
                x: 1.0,
                y: 1.0,
            }],
        },
    });
    match unmatchable {
        Err(e @ Error::Unmatchable(_)) => assert_eq!(e.exit_code(), 2),
        other => panic!("expected Unmatchable, got {other:?}"),
    }
}

#[test]
fn unreachable_service_is_a_transport_error() {
    // Bind-then-drop reserves an address nobody is listening on.
    let port = {
        let sock = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        sock.local_addr().unwrap().port()
    };
    let client = Client::new(format!("http://127.0.0.1:{port}"), None).unwrap();
    match client.health() {
        Err(e @ Error::Transport(_)) => assert_eq!(e.exit_code(), 3),
        other => panic!("expected Transport, got {other:?}"),
    }
}
