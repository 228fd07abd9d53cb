use std::path::{Path, PathBuf};
use std::process::Command;

use airmap_cli::execute;
use sha2::{Digest, Sha256};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn run(args: &[&str]) -> i32 {
    let mut argv = vec!["airmap"];
    argv.extend_from_slice(args);
    execute(argv)
}

fn bin(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_airmap")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn qc_on_bundled_fixture_matches_hand_labels() {
    let out = tempfile::tempdir().unwrap();
    let config = fixtures().join("run.toml");
    assert_eq!(run(&["qc", "--config", s(&config), "--out", s(out.path())]), 0);

    let mut got: Vec<(String, String)> = csv::Reader::from_path(out.path().join("qc_report.csv"))
        .unwrap()
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].to_string(), r[1].to_string())
        })
        .collect();
    let mut want: Vec<(String, String)> = csv::Reader::from_path(fixtures().join("qc_expected.csv"))
        .unwrap()
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].to_string(), r[1].to_string())
        })
        .collect();
    got.sort();
    want.sort();
    assert_eq!(got, want);
    assert!(out.path().join("manifest-qc.json").exists());
}

#[test]
fn usage_errors_exit_2() {
    let o = bin(&["qc", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(bin(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(bin(&["qc"]).status.code(), Some(2));
    assert_eq!(bin(&["--help"]).status.code(), Some(0));
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn train_without_measurements_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(fixtures().join("stations.csv"), dir.path().join("stations.csv")).unwrap();
    std::fs::create_dir(dir.path().join("cov")).unwrap();
    let cfg = write_config(dir.path(), "[paths]\nstations = \"stations.csv\"\ncovariates = \"cov\"\n");
    let o = bin(&["train", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("paths.measurements"));
}

#[test]
fn bad_configs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for text in [
        "[train]\nmax_bin = 64\n",
        "[run]\nseed = 1\nseed = 1\n",
        "[run]\ncolour = \"blue\"\n",
        "[paths]\nstations = \"absent.csv\"\n",
    ] {
        let cfg = write_config(dir.path(), text);
        let o = bin(&["qc", "--config", s(&cfg)]);
        assert_eq!(o.status.code(), Some(2), "{text}");
    }
}

fn sha(p: &Path) -> String {
    hex::encode(Sha256::digest(std::fs::read(p).unwrap()))
}

#[test]
fn pipeline_on_synthetic_world() {
    let root = tempfile::tempdir().unwrap();
    let world = root.path().join("world");
    assert_eq!(run(&["synth", "--days", "7", "--out", s(&world)]), 0);
    let cfg = world.join("run.toml");
    let (a, b) = (root.path().join("a"), root.path().join("b"));

    // reproducibility of train, serial against parallel
    assert_eq!(run(&["train", "--config", s(&cfg), "--out", s(&a), "--threads", "1"]), 0);
    assert_eq!(run(&["train", "--config", s(&cfg), "--out", s(&b), "--threads", "3"]), 0);
    for f in ["model.json", "scores_holdout.csv", "manifest-train.json"] {
        assert_eq!(sha(&a.join(f)), sha(&b.join(f)), "{f}");
    }

    // grid tiles, serial against parallel
    assert_eq!(run(&["predict-grid", "--config", s(&cfg), "--out", s(&a), "--threads", "1"]), 0);
    assert_eq!(run(&["predict-grid", "--config", s(&cfg), "--out", s(&b), "--threads", "4"]), 0);
    let tiles: Vec<_> = std::fs::read_dir(a.join("tiles")).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(tiles.len(), 2);
    for t in &tiles {
        assert_eq!(sha(&a.join("tiles").join(t)), sha(&b.join("tiles").join(t)));
    }

    assert_eq!(run(&["aqi", "--config", s(&cfg), "--out", s(&a)]), 0);
    assert!(a.join("aqi/driving.aptile").exists());
    assert_eq!(run(&["experiment", "baseline", "--config", s(&cfg), "--out", s(&a)]), 0);
    assert_eq!(run(&["experiment", "between-continent", "--config", s(&cfg), "--out", s(&a)]), 0);
    assert_eq!(run(&["report", "--config", s(&cfg), "--out", s(&a)]), 0);
    let report = std::fs::read_to_string(a.join("report.csv")).unwrap();
    assert!(report.lines().any(|l| l.starts_with("baseline,NO2,20,")));

    assert_eq!(run(&["intervals", "--config", s(&cfg), "--out", s(&a)]), 0);
    let ranking = std::fs::read_to_string(a.join("intervals/ranking.csv")).unwrap();
    assert_eq!(ranking.lines().count(), 21);

    assert_eq!(run(&["split", "--config", s(&cfg), "--out", s(&a)]), 0);
    assert_eq!(run(&["tune", "--config", s(&cfg), "--out", s(&a)]), 0);
    assert_eq!(run(&["features", "--config", s(&cfg), "--out", s(&a)]), 0);

    // b only saw train and predict-grid, so nothing in it was overwritten;
    // every manifest checksum there matches the file on disk
    for entry in std::fs::read_dir(&b).unwrap() {
        let p = entry.unwrap().path();
        let name = p.file_name().unwrap().to_str().unwrap().to_string();
        if !name.starts_with("manifest-") {
            continue;
        }
        let m: serde_json::Value = serde_json::from_slice(&std::fs::read(&p).unwrap()).unwrap();
        assert_eq!(m["seed"], 42);
        for (rel, sum) in m["outputs"].as_object().unwrap() {
            assert_eq!(sha(&b.join(rel)), sum.as_str().unwrap(), "{name}: {rel}");
        }
    }
}

#[test]
fn predict_grid_without_model_is_runtime_failure() {
    let root = tempfile::tempdir().unwrap();
    let world = root.path().join("world");
    assert_eq!(run(&["synth", "--days", "1", "--out", s(&world)]), 0);
    let code = run(&[
        "predict-grid",
        "--config",
        s(&world.join("run.toml")),
        "--out",
        s(&root.path().join("empty")),
    ]);
    assert_eq!(code, 1);
}
