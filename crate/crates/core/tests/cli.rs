use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn agmixup(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_agmixup"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

const FAST: [&str; 6] = ["--hidden", "8", "--max-epochs", "4", "--patience", "2"];

fn dataset(tmp: &TempDir) -> PathBuf {
    let dir = tmp.path().join("data");
    let out = agmixup(&[
        "gen-sbm",
        "--blocks",
        "15,15,15",
        "--p-in",
        "0.2",
        "--p-out",
        "0.02",
        "--features",
        "6",
        "--train-per-class",
        "4",
        "--val-size",
        "9",
        "--seed",
        "2",
        "--out",
        &s(&dir),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    dir
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

fn col(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap()
}

fn run(tmp: &TempDir, name: &str, args: &[&str]) -> (PathBuf, Output) {
    let out = tmp.path().join(name);
    let mut full: Vec<&str> = args.to_vec();
    let o = s(&out);
    full.extend(["--out", &o]);
    full.extend(FAST);
    let res = agmixup(&full);
    (out, res)
}

#[test]
fn train_fixed_policy_writes_outputs() {
    let tmp = TempDir::new().unwrap();
    let data = s(&dataset(&tmp));
    let (out, res) = run(
        &tmp,
        "fixed",
        &[
            "train",
            "--dataset",
            &data,
            "--policy",
            "fixed",
            "--lambda",
            "0.5",
            "--seed",
            "1",
        ],
    );
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    assert!(String::from_utf8_lossy(&res.stdout).contains("policy=fixed"));
    let (h, rows) = read_csv(&out.join("summary.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][col(&h, "policy")], "fixed");
    assert!(h.iter().any(|c| c == "miss_0.5"));
    let (_, trace) = read_csv(&out.join("trace.csv"));
    assert!(!trace.is_empty());
    assert!(out.join("model.ckpt").is_file());
}

#[test]
fn zero_mu_matches_vanilla() {
    let tmp = TempDir::new().unwrap();
    let data = s(&dataset(&tmp));
    let base = ["train", "--dataset", &data, "--seed", "1"];
    let (a, ra) = run(
        &tmp,
        "mu0",
        &[&base[..], &["--mu", "0", "--gamma", "1", "--beta", "1"]].concat(),
    );
    let (b, rb) = run(
        &tmp,
        "vanilla",
        &[&base[..], &["--policy", "vanilla"]].concat(),
    );
    assert!(ra.status.success() && rb.status.success());
    let (ha, sa) = read_csv(&a.join("summary.csv"));
    let (hb, sb) = read_csv(&b.join("summary.csv"));
    assert_eq!(sa[0][col(&ha, "test_acc")], sb[0][col(&hb, "test_acc")]);
}

#[test]
fn missing_dataset_is_usage_error_and_writes_nothing() {
    let tmp = TempDir::new().unwrap();
    let (out, res) = run(
        &tmp,
        "none",
        &["train", "--seed", "1", "--gamma", "1", "--beta", "1"],
    );
    assert_eq!(res.status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn flag_errors() {
    let tmp = TempDir::new().unwrap();
    let data = s(&dataset(&tmp));
    // no seed
    let (_, res) = run(
        &tmp,
        "x",
        &["train", "--dataset", &data, "--policy", "vanilla"],
    );
    assert_eq!(res.status.code(), Some(1));
    // adaptive without gamma
    let (out, res) = run(
        &tmp,
        "y",
        &["train", "--dataset", &data, "--seed", "1", "--beta", "1"],
    );
    assert_eq!(res.status.code(), Some(1));
    assert!(!out.exists());
    // out-of-range mu
    let (_, res) = run(
        &tmp,
        "z",
        &[
            "train",
            "--dataset",
            &data,
            "--seed",
            "1",
            "--policy",
            "vanilla",
            "--mu",
            "2",
        ],
    );
    assert_eq!(res.status.code(), Some(1));
    // nonexistent bundle is a data error
    let (_, res) = run(
        &tmp,
        "w",
        &[
            "train",
            "--dataset",
            "/nonexistent",
            "--seed",
            "1",
            "--policy",
            "vanilla",
        ],
    );
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let tmp = TempDir::new().unwrap();
    let data = dataset(&tmp);
    let cfg = tmp.path().join("run.toml");
    std::fs::write(
        &cfg,
        format!(
            "dataset = {:?}\nseed = 4\npolicy = \"fixed\"\nlambda = 0.3\n",
            s(&data)
        ),
    )
    .unwrap();
    let (out, res) = run(
        &tmp,
        "cfg",
        &["train", "--config", &s(&cfg), "--policy", "vanilla"],
    );
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let (h, rows) = read_csv(&out.join("summary.csv"));
    assert_eq!(rows[0][col(&h, "policy")], "vanilla");
    assert_eq!(rows[0][col(&h, "seed")], "4");

    std::fs::write(&cfg, "bogus_key = 1\n").unwrap();
    let (_, res) = run(&tmp, "bad", &["train", "--config", &s(&cfg)]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn sweep_counts_runs_and_rows() {
    let tmp = TempDir::new().unwrap();
    let data = s(&dataset(&tmp));
    let (out, res) = run(
        &tmp,
        "eps",
        &[
            "sweep",
            "--dataset",
            &data,
            "--seed",
            "1",
            "--gamma",
            "1",
            "--beta",
            "1",
            "--dim",
            "epsilon",
            "--values",
            "0.1..1.0:0.1",
            "--seeds",
            "5",
        ],
    );
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    assert_eq!(read_csv(&out.join("sweep.csv")).1.len(), 10);
    assert_eq!(read_csv(&out.join("runs.csv")).1.len(), 50);

    let (out, res) = run(
        &tmp,
        "r",
        &[
            "sweep",
            "--dataset",
            &data,
            "--seed",
            "1",
            "--policy",
            "fixed",
            "--dim",
            "r",
            "--values",
            "1..7",
        ],
    );
    assert!(res.status.success());
    let (h, rows) = read_csv(&out.join("sweep.csv"));
    assert_eq!(rows.len(), 7);
    assert_eq!(rows[6][col(&h, "value")], "7");
}

#[test]
fn sweep_dedups_and_rejects_unknown_dims() {
    let tmp = TempDir::new().unwrap();
    let data = s(&dataset(&tmp));
    let (out, res) = run(
        &tmp,
        "dup",
        &[
            "sweep",
            "--dataset",
            &data,
            "--seed",
            "1",
            "--policy",
            "fixed",
            "--dim",
            "mu",
            "--values",
            "0.5,1,0.5",
        ],
    );
    assert!(res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("duplicate"));
    assert_eq!(read_csv(&out.join("sweep.csv")).1.len(), 2);

    let (out, res) = run(
        &tmp,
        "bad",
        &[
            "sweep",
            "--dataset",
            &data,
            "--seed",
            "1",
            "--policy",
            "fixed",
            "--dim",
            "width",
            "--values",
            "1",
        ],
    );
    assert_eq!(res.status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn casestudy_rows_per_policy() {
    let tmp = TempDir::new().unwrap();
    let data = s(&dataset(&tmp));
    let (out, res) = run(
        &tmp,
        "cs",
        &[
            "casestudy",
            "--dataset",
            &data,
            "--seed",
            "3",
            "--gamma",
            "1",
            "--beta",
            "1",
            "--pairs",
            "40",
        ],
    );
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let path = out.join("casestudy.csv");
    let (h, rows) = read_csv(&path);
    assert_eq!(rows.len(), 44);
    for policy in ["adaptive", "random-beta", "fixed", "vanilla"] {
        let mine: Vec<_> = rows
            .iter()
            .filter(|r| r[col(&h, "policy")] == policy)
            .collect();
        assert_eq!(mine.len(), 11, "{policy}");
        let lam = &mine[0][col(&h, "train_mean_lambda")];
        assert_eq!(lam.is_empty(), policy == "vanilla");
    }
    assert!(rows.iter().all(|r| r[col(&h, "num_pairs")] == "40"));

    // a reader-writer round trip reproduces the file
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&h).unwrap();
    for r in &rows {
        w.write_record(r).unwrap();
    }
    assert_eq!(w.into_inner().unwrap(), std::fs::read(&path).unwrap());
}

#[test]
fn casestudy_checkpoint_dimension_mismatch() {
    let tmp = TempDir::new().unwrap();
    let data = s(&dataset(&tmp));
    let (trained, res) = run(
        &tmp,
        "t",
        &[
            "train",
            "--dataset",
            &data,
            "--seed",
            "1",
            "--policy",
            "vanilla",
        ],
    );
    assert!(res.status.success());
    let ckpt = s(&trained.join("model.ckpt"));

    let (out, res) = run(
        &tmp,
        "ok",
        &[
            "casestudy",
            "--dataset",
            &data,
            "--seed",
            "1",
            "--checkpoint",
            &ckpt,
        ],
    );
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    assert_eq!(read_csv(&out.join("casestudy.csv")).1.len(), 11);

    let other = tmp.path().join("other");
    let o = s(&other);
    assert!(agmixup(&[
        "gen-sbm",
        "--blocks",
        "10,10",
        "--p-in",
        "0.2",
        "--p-out",
        "0.0",
        "--features",
        "3",
        "--train-per-class",
        "3",
        "--seed",
        "1",
        "--out",
        &o,
    ])
    .status
    .success());
    let (out, res) = run(
        &tmp,
        "bad",
        &[
            "casestudy",
            "--dataset",
            &o,
            "--seed",
            "1",
            "--checkpoint",
            &ckpt,
        ],
    );
    assert_eq!(res.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn gen_sbm_is_deterministic_and_valid() {
    let tmp = TempDir::new().unwrap();
    let gen = |name: &str| {
        let dir = tmp.path().join(name);
        let out = agmixup(&[
            "gen-sbm",
            "--blocks",
            "50,50",
            "--p-in",
            "0.1",
            "--p-out",
            "0.01",
            "--seed",
            "7",
            "--out",
            &s(&dir),
        ]);
        assert!(out.status.success());
        assert!(String::from_utf8_lossy(&out.stdout).starts_with("nodes=100 edges="));
        dir
    };
    let (a, b) = (gen("a"), gen("b"));
    for f in [
        "meta.json",
        "edges.bin",
        "features.bin",
        "labels.bin",
        "masks.bin",
    ] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let v = agmixup(&["validate-bundle", &s(&a)]);
    assert!(v.status.success());
    assert!(String::from_utf8_lossy(&v.stdout).contains("nodes=100"));

    let bad = agmixup(&[
        "gen-sbm",
        "--blocks",
        "50,50",
        "--p-in",
        "2.0",
        "--p-out",
        "0.01",
        "--seed",
        "7",
        "--out",
        &s(&tmp.path().join("c")),
    ]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(!tmp.path().join("c").exists());
}

#[test]
fn validate_bundle_reports_corruption() {
    let tmp = TempDir::new().unwrap();
    let data = dataset(&tmp);
    let feats = data.join("features.bin");
    let bytes = std::fs::read(&feats).unwrap();
    std::fs::write(&feats, &bytes[..bytes.len() - 4]).unwrap();
    let out = agmixup(&["validate-bundle", &s(&data)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("features.bin"));
}

#[test]
fn help_exits_zero() {
    for sub in ["train", "sweep", "casestudy", "gen-sbm", "validate-bundle"] {
        assert!(agmixup(&[sub, "--help"]).status.success(), "{sub}");
    }
    assert!(agmixup(&["--help"]).status.success());
}
