use std::path::Path;

use featspace::cli::dispatch;
use featspace::io::{format_feature_set, read_feature_set, sha256_file, write_feature_set, ExperimentManifest};
use featspace::{Error, LabeledFeatureSet};

fn run(args: &[&str]) -> i32 {
    let mut argv = vec!["featspace"];
    argv.extend_from_slice(args);
    dispatch(argv)
}

fn data(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name).to_string_lossy().into_owned()
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["--help"]), 0);
    assert_eq!(run(&["frobnicate"]), 1);
    assert_eq!(run(&["divide"]), 1);
    assert_eq!(run(&["divide", "--head", "/nonexistent/head.csv"]), 2);
    assert_eq!(run(&["knn", "--features", &data("toy_points.csv"), "--k", "2"]), 1);
}

#[test]
fn table_and_record_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let o = out.to_str().unwrap();
    assert_eq!(run(&["--format", "record", "--output", o, "divide", "--head", &data("toy_head.csv"), "--samples", "500"]), 0);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["command"], "divide");
    assert_eq!(run(&["--output", o, "correlate", "--table", &data("loss_ratios.csv")]), 0);
    assert!(std::fs::read_to_string(&out).unwrap().contains("rho"));
}

#[test]
fn replay_rejects_edited_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let head = dir.path().join("head.csv");
    std::fs::copy(data("toy_head.csv"), &head).unwrap();
    let m = dir.path().join("m.json");
    let out = dir.path().join("a.json");
    let args = ["--manifest", m.to_str().unwrap(), "--output", out.to_str().unwrap(), "divide", "--head", head.to_str().unwrap()];
    assert_eq!(run(&args), 0);
    assert!(ExperimentManifest::load(&m).is_ok());

    std::fs::write(&head, std::fs::read_to_string(&head).unwrap().replace("0.8", "0.9")).unwrap();
    assert!(matches!(ExperimentManifest::load(&m), Err(Error::DigestMismatch { .. })));
    assert_eq!(run(&["replay", m.to_str().unwrap()]), 1);
}

#[test]
fn large_feature_file_round_trips() {
    let n = 100_000;
    let vectors: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let x = i as f64;
            vec![(x * 0.37).sin() * 1e-300, (x + 0.5).ln(), -x / 3.0, f64::MIN_POSITIVE * x]
        })
        .collect();
    let labels = (0..n).map(|i| i % 7).collect();
    let set = LabeledFeatureSet::unnamed(vectors, labels, 7).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    write_feature_set(&a, &set).unwrap();
    let back = read_feature_set(&a, None).unwrap();
    assert_eq!(back, set);
    write_feature_set(&b, &back).unwrap();
    assert_eq!(sha256_file(&a).unwrap(), sha256_file(&b).unwrap());
    assert_eq!(format_feature_set(&back).len(), std::fs::metadata(&a).unwrap().len() as usize);
}
