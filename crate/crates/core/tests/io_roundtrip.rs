mod common;

use std::fs;

use common::{rng, unit};
use topo_proto::classifier::{dual_view_score, ClassifierConfig};
use topo_proto::harness::run_stream;
use topo_proto::io::{load_features, load_state, load_stream, save_state, save_stream, TRAIN_FILE};
use topo_proto::synth::{make_stream, StreamSpec};
use topo_proto::Error;

fn small_spec(seed: u64) -> StreamSpec {
    let mut spec = StreamSpec::benchmark(6, 3, seed);
    spec.samples_per_class = 50;
    spec.heldout_per_class = 20;
    spec.dim = 8;
    spec
}

fn config() -> ClassifierConfig {
    ClassifierConfig {
        k_init: 10,
        ..Default::default()
    }
}

#[test]
fn state_round_trip_reproduces_scores() {
    let stream = make_stream(&small_spec(1)).unwrap();
    let (_, state, anchors) = run_stream(&stream, &config(), true).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.txt");
    save_state(&path, &state, &anchors).unwrap();
    let (loaded, loaded_anchors) = load_state(&path).unwrap();
    assert_eq!(loaded.classes, state.classes);
    assert_eq!(loaded.config, state.config);
    assert_eq!(loaded_anchors, anchors);
    let mut r = rng(4);
    for _ in 0..200 {
        let x = unit(&mut r, 8);
        let a = dual_view_score(&x, &state).unwrap();
        let b = dual_view_score(&x, &loaded).unwrap();
        for (c, v) in &a.0 {
            assert_eq!(v.to_bits(), b.get(*c).unwrap().to_bits());
        }
    }
}

#[test]
fn file_stream_matches_generated_stream() {
    let stream = make_stream(&small_spec(2)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_stream(dir.path(), &stream).unwrap();
    let loaded = load_stream(dir.path()).unwrap();
    let (a, ..) = run_stream(&stream, &config(), true).unwrap();
    let (b, ..) = run_stream(&loaded, &config(), true).unwrap();
    assert_eq!(a.to_tsv(), b.to_tsv());
}

#[test]
fn missing_and_damaged_files() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_features(&dir.path().join("nope.csv")), Err(Error::Io(_))));
    assert!(matches!(load_stream(dir.path()), Err(Error::Io(_))));

    let stream = make_stream(&small_spec(3)).unwrap();
    save_stream(dir.path(), &stream).unwrap();
    let train = dir.path().join(TRAIN_FILE);
    let text = fs::read_to_string(&train).unwrap();
    let cut = text.rfind(',').unwrap();
    fs::write(&train, &text[..cut]).unwrap();
    let lines = text[..cut].lines().count();
    match load_features(&train) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, lines),
        other => panic!("expected parse error, got {other:?}"),
    }

    let state_path = dir.path().join("state.txt");
    fs::write(&state_path, "#topo-proto-state v1\n[meta]\ndim 4\n").unwrap();
    assert!(matches!(load_state(&state_path), Err(Error::Parse { .. })));
}
