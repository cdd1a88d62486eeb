use std::fs;

use marlin::stream::{
    read_csv_stream, read_results, read_stream, read_stream_from, read_truth, write_csv_stream, write_results, write_stream,
    write_stream_file, write_truth, ResultsWriter,
};
use marlin::synth::{generate, SynthConfig};
use marlin::{Engine, Error, OnlineConfig};

fn small_stream() -> (Vec<marlin::StreamBatch>, marlin::synth::GroundTruth) {
    generate(&SynthConfig { d: 4, m: 2, n_per_state: 60, batch_size: 20, seed: 5, ..Default::default() }).unwrap()
}

#[test]
fn jsonl_round_trip_is_byte_identical() {
    let (batches, _) = small_stream();
    let mut first = Vec::new();
    write_stream(&batches, &mut first).unwrap();
    let back: Vec<_> = read_stream_from(first.as_slice()).collect::<marlin::Result<_>>().unwrap();
    assert_eq!(back, batches);
    let mut second = Vec::new();
    write_stream(&back, &mut second).unwrap();
    assert_eq!(first, second);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.jsonl");
    write_stream_file(&batches, &path).unwrap();
    assert_eq!(fs::read(&path).unwrap(), first);
    let from_file: Vec<_> = read_stream(&path).unwrap().collect::<marlin::Result<_>>().unwrap();
    assert_eq!(from_file, batches);
}

#[test]
fn csv_round_trip() {
    let (batches, _) = small_stream();
    let dir = tempfile::tempdir().unwrap();
    let (csv, side) = (dir.path().join("s.csv"), dir.path().join("s.json"));
    write_csv_stream(&batches, &csv, &side).unwrap();
    assert_eq!(read_csv_stream(&csv, &side).unwrap(), batches);
}

#[test]
fn ordering_error_names_both_lines() {
    let text = "{\"t\":1,\"l\":2,\"x\":[[1.0]]}\n\n{\"t\":1,\"l\":1,\"x\":[[2.0]]}\n";
    let results: Vec<_> = read_stream_from(text.as_bytes()).collect();
    assert!(results[0].is_ok());
    match &results[1] {
        Err(Error::Ordering { prev_line, line, .. }) => assert_eq!((*prev_line, *line), (1, 3)),
        other => panic!("expected an ordering error, got {other:?}"),
    }
    assert_eq!(results.len(), 2);
}

#[test]
fn width_drift_and_bad_schema_are_rejected() {
    let drift = "{\"t\":1,\"l\":1,\"x\":[[1.0,2.0]]}\n{\"t\":1,\"l\":2,\"x\":[[1.0]]}\n";
    let r: Vec<_> = read_stream_from(drift.as_bytes()).collect();
    assert!(matches!(r[1], Err(Error::Schema { line: 2, .. })));

    for bad in ["{\"t\":1}", "{\"t\":1,\"l\":1,\"x\":[[1.0],[1.0,2.0]]}", "not json", "{\"t\":0,\"l\":1,\"x\":[[1.0]]}"] {
        let r: Vec<_> = read_stream_from(bad.as_bytes()).collect();
        assert!(matches!(r[0], Err(Error::Schema { line: 1, .. })), "{bad}");
    }
}

#[test]
fn results_reload_equal_and_flush_per_line() {
    let (batches, truth) = small_stream();
    let cfg = OnlineConfig { episodes_per_batch: 2, samples_per_episode: 2, ..Default::default() };
    let mut engine = Engine::new(cfg, 4).unwrap();
    let records = engine.run(batches.into_iter().map(Ok)).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.jsonl");
    let mut w = ResultsWriter::create(&path).unwrap();
    for (k, r) in records.iter().enumerate() {
        w.write(r).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap().lines().count(), k + 1);
    }
    drop(w);
    assert_eq!(read_results(&path).unwrap(), records);

    let mut buf = Vec::new();
    write_results(&records, &mut buf).unwrap();
    let line: serde_json::Value = serde_json::from_slice(buf.split(|&b| b == b'\n').next().unwrap()).unwrap();
    for key in ["t", "l", "a_est", "a_spec", "a_inv", "best_reward", "xi", "wall_ms", "converged", "edge_scores"] {
        assert!(line.get(key).is_some(), "missing {key}");
    }
    assert!(line["a_est"][0].as_array().unwrap().iter().all(|v| v == 0 || v == 1));

    let tpath = dir.path().join("truth.json");
    write_truth(&truth, &tpath).unwrap();
    assert_eq!(read_truth(&tpath).unwrap(), truth);
}
