use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cdma-lab")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const SMALL_CONVERGENCE: &str = r#"{
  "scenario": "convergence",
  "matrix": {"source": "construct", "m": 3, "n": 6, "noise": "known"},
  "trajectory": {"kind": "constant", "powers": [1.0]},
  "ebn0_db": [10.0],
  "lengths": [50, 500],
  "estimators": [{"method": "subopt_known"}, {"method": "ml"}],
  "seeds": [0, 1]
}"#;

#[test]
fn construct_then_audit() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("s.txt");
    let out = lab(&["construct", "--m", "4", "--n", "10", "--noise", "known", "--out", file.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(fs::read_to_string(&file).unwrap().lines().any(|l| l.trim() == "4 10"));

    let out = lab(&["audit", "--in", file.to_str().unwrap(), "--noise", "known"]);
    assert_eq!(code(&out), 0);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["rank"], 10);
    assert_eq!(report["estimable"], true);
}

#[test]
fn construct_beyond_bound_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("s.txt");
    let out = lab(&["construct", "--m", "3", "--n", "7", "--noise", "known", "--out", file.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(!file.exists());
}

#[test]
fn search_ud_writes_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("ud.txt");
    let out = lab(&["search-ud", "--m", "4", "--n", "5", "--trials", "2", "--out", file.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let s = matrix_shape(&fs::read_to_string(&file).unwrap());
    assert_eq!((s.0, s.1), (4, 5));
}

/// `(m, n)` from the header line of a matrix file.
fn matrix_shape(text: &str) -> (usize, usize) {
    let line = text.lines().find(|l| !l.trim().is_empty() && !l.starts_with('#')).unwrap();
    let mut it = line.split_whitespace().map(|v| v.parse().unwrap());
    (it.next().unwrap(), it.next().unwrap())
}

#[test]
fn convergence_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL_CONVERGENCE);
    let csv = dir.path().join("r.csv");
    let out = lab(&["convergence", "--config", &cfg, "--out", csv.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# cdma-lab results format 1; scenario convergence"));
    assert_eq!(
        lines.next().unwrap(),
        "scenario,seed,ebn0_db,index,estimator,user,true_power,estimated_power,relative_error"
    );
    // seeds x lengths x estimators x users
    assert_eq!(lines.count(), 2 * 2 * 2 * 6);

    let json = dir.path().join("r.jsonl");
    let out = lab(&["convergence", "--config", &cfg, "--out", json.to_str().unwrap(), "--json"]);
    assert_eq!(code(&out), 0);
    let text = fs::read_to_string(&json).unwrap();
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["scenario"], "convergence");
    assert_eq!(text.lines().count(), 1 + 2 * 2 * 2 * 6);
}

#[test]
fn runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL_CONVERGENCE);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    assert_eq!(code(&lab(&["convergence", "--config", &cfg, "--out", a.to_str().unwrap()])), 0);
    assert_eq!(code(&lab(&["convergence", "--config", &cfg, "--out", b.to_str().unwrap()])), 0);
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
}

#[test]
fn ber_small_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "b.json",
        r#"{
          "scenario": "ber",
          "matrix": {"source": "search_ud", "m": 4, "n": 5},
          "trajectory": {"kind": "constant", "powers": [1.0]},
          "ebn0_db": [4.0, 8.0],
          "modes": ["perfect", "subopt", "iterative", "none"],
          "bits_per_point": 2000,
          "seeds": [1, 2]
        }"#,
    );
    let csv = dir.path().join("ber.csv");
    let out = lab(&["ber", "--config", &cfg, "--out", csv.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.lines().next().unwrap().contains("note: desk-scale"));
    assert_eq!(text.lines().nth(1).unwrap(), "ebn0_db,mode,bits,bit_errors,ber,ci95_half_width");
    assert_eq!(text.lines().count(), 2 + 8);
}

#[test]
fn configuration_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("r.csv");
    let out = out_path.to_str().unwrap();

    let cfg = write_config(dir.path(), "c.json", SMALL_CONVERGENCE);
    assert_eq!(code(&lab(&["track", "--config", &cfg, "--out", out])), 2, "scenario mismatch");

    let missing = dir.path().join("nope.json");
    assert_eq!(code(&lab(&["convergence", "--config", missing.to_str().unwrap(), "--out", out])), 2);

    let bad = write_config(dir.path(), "bad.json", &SMALL_CONVERGENCE.replace("\"lengths\"", "\"lenghts\""));
    assert_eq!(code(&lab(&["convergence", "--config", &bad, "--out", out])), 2, "unknown field");

    let unidentifiable = write_config(
        dir.path(),
        "u.json",
        &SMALL_CONVERGENCE.replace(r#""source": "construct", "m": 3, "n": 6"#, r#""source": "random", "m": 2, "n": 4, "alphabet": "uniform", "seed": 3"#),
    );
    assert_eq!(code(&lab(&["convergence", "--config", &unidentifiable, "--out", out])), 2);

    assert_eq!(code(&lab(&["convergence", "--out", out])), 2, "missing --config");
}

#[test]
fn numerical_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        &SMALL_CONVERGENCE.replace(r#"{"method": "ml"}"#, r#"{"method": "ml", "max_iter": 1, "tol": 1e-14}"#),
    );
    let out = lab(&["convergence", "--config", &cfg, "--out", dir.path().join("r.csv").to_str().unwrap()]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}
