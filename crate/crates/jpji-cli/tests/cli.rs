use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use jpji_cli::evaluate::EvaluationFile;
use jpji_cli::io::{matrix_from_csv, matrix_to_csv, read_matrix, read_table};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn jpji(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jpji")).args(args).env_remove("JPJI_THREADS").output().unwrap()
}

fn ok(args: &[&str]) {
    let out = jpji(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn simulate(dir: &Path, extra: &[&str]) {
    let mut args = vec!["simulate", "--time", "60", "--seed", "4", "--out", p(dir)];
    args.extend_from_slice(extra);
    ok(&args);
}

#[test]
fn round_trip_simulate_decompose_evaluate_report() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, res, tab) = (tmp.path().join("d"), tmp.path().join("r"), tmp.path().join("t"));
    simulate(&data, &[]);
    assert_eq!(fs::read_dir(&data).unwrap().filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("obs_")).count(), 10);
    ok(&["decompose", "--data", p(&data), "--out", p(&res), "--snapshots", "1,2,3,4"]);
    for f in ["features.csv", "labels.csv", "contributions.csv", "cost_trace.csv", "run.json", "u_s01.csv", "y_s10.csv", "sweep_02/labels.csv"] {
        assert!(res.join(f).exists(), "{f}");
    }
    let y = read_matrix(&res.join("y_s03.csv")).unwrap();
    let u = read_matrix(&res.join("u_s03.csv")).unwrap();
    assert_eq!(y.shape(), (6, 4096));
    assert_eq!(u.shape(), (6, 6));
    assert_eq!(read_table(&res.join("labels.csv"), &["slot", "subject", "kind", "peers"]).unwrap().len(), 60);

    ok(&["evaluate", "--data", p(&data), "--results", p(&res)]);
    let report: EvaluationFile = serde_json::from_str(&fs::read_to_string(res.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.per_sweep.iter().map(|s| s.sweep).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5]);
    assert!(report.summary.jsir_db > 15.0);
    assert_eq!(report.summary.acc_c_pjoint, 100.0);

    ok(&["report", p(&res.join("report.json")), "--out", p(&tab)]);
    let conv = read_table(&tab.join("convergence.csv"), &[
        "algorithm", "n_subjects", "snr_db", "sweep", "runs", "jsir_db", "acc_c_joint", "acc_c_pjoint", "acc_c_individual", "acc_k",
    ])
    .unwrap();
    assert_eq!(conv.len(), 5, "one row per outer sweep");
    let scatter = fs::read_to_string(tab.join("feature_kurtosis.csv")).unwrap();
    assert_eq!(scatter.lines().count(), 61);
}

#[test]
fn jithica_writes_two_way_labels_in_binary() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, res) = (tmp.path().join("d"), tmp.path().join("r"));
    simulate(&data, &["--binary"]);
    assert!(data.join("obs_s01.bin").exists());
    ok(&["decompose", "--data", p(&data), "--out", p(&res), "--algorithm", "jithica", "--sigma0", "auto", "--binary"]);
    assert!(res.join("y_s01.bin").exists());
    let labels = fs::read_to_string(res.join("labels.csv")).unwrap();
    assert!(labels.lines().skip(1).all(|l| l.contains(",J,") || l.contains(",I,")));
    ok(&["evaluate", "--data", p(&data), "--results", p(&res)]);
}

#[test]
fn classify_by_groups_and_by_fixed_sigma() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, res) = (tmp.path().join("d"), tmp.path().join("r"));
    simulate(&data, &[]);
    ok(&["decompose", "--data", p(&data), "--out", p(&res)]);
    ok(&["classify", "--results", p(&res), "--groups", "0,1,2,3,4/5,6,7,8,9"]);
    let spatial = read_table(&res.join("classify.csv"), &["slot", "kind", "discoveries"]).unwrap();
    let kinds: Vec<&str> = spatial.iter().map(|r| r[1].as_str()).collect();
    assert_eq!(kinds, vec!["J", "J", "J", "PJ", "PJ", "I"]);
    let out = tmp.path().join("fixed.csv");
    ok(&["classify", "--results", p(&res), "--sigma", "1e300", "--out", p(&out)]);
    assert!(fs::read_to_string(out).unwrap().lines().skip(1).all(|l| l.contains(",I,")));
    // Reclassifying with the stored threshold reproduces the stored labels.
    let again = tmp.path().join("again.csv");
    ok(&["classify", "--results", p(&res), "--out", p(&again)]);
    assert_eq!(fs::read_to_string(again).unwrap(), fs::read_to_string(res.join("labels.csv")).unwrap());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("d");
    assert_eq!(jpji(&["simulate", "--subjects", "6", "--out", p(&data)]).status.code(), Some(2), "clusters of 3 cannot hold PJ sources");
    assert_eq!(jpji(&["simulate", "--subjects", "0", "--out", p(&data)]).status.code(), Some(2));

    simulate(&data, &["--subjects", "4", "--pjoint", "0", "--clusters", "1"]);
    let res = tmp.path().join("r");
    let out = jpji(&["decompose", "--data", p(&data), "--out", p(&res), "--components", "70"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(jpji(&["decompose", "--data", p(&data), "--out", p(&res), "--components", "lots"]).status.code(), Some(2));

    ok(&["decompose", "--data", p(&data), "--out", p(&res), "--max-iter", "1"]);
    let manifest = data.join("manifest.json");
    let mut m: serde_json::Value = serde_json::from_str(&fs::read_to_string(&manifest).unwrap()).unwrap();
    m["truth"] = serde_json::Value::Null;
    fs::write(&manifest, m.to_string()).unwrap();
    assert_eq!(jpji(&["evaluate", "--data", p(&data), "--results", p(&res)]).status.code(), Some(4));

    let empty = tmp.path().join("empty");
    fs::create_dir(&empty).unwrap();
    assert_eq!(jpji(&["report", p(&empty), "--out", p(&tmp.path().join("t"))]).status.code(), Some(5));
    assert_eq!(jpji(&["decompose", "--data", p(&empty), "--out", p(&res)]).status.code(), Some(1));
}

#[test]
fn small_subject_count_warns_on_stderr() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("d");
    simulate(&data, &["--subjects", "3", "--pjoint", "0", "--clusters", "1"]);
    let out = jpji(&["decompose", "--data", p(&data), "--out", p(&tmp.path().join("r")), "--max-iter", "1"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning:"));
}

proptest! {
    #[test]
    fn csv_matrices_round_trip_bit_for_bit(v in prop::collection::vec(any::<f64>().prop_filter("finite", |x| x.is_finite()), 12)) {
        let m = DMatrix::from_row_slice(3, 4, &v);
        let back = matrix_from_csv(&matrix_to_csv(&m)).unwrap();
        prop_assert!(m.iter().zip(back.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
