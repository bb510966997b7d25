use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dss(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dss"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn kl_column(dir: &Path) -> Vec<(String, f64)> {
    let text = fs::read_to_string(dir.join("scores.csv")).unwrap();
    text.lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[1].to_string(), f[2].parse().unwrap())
        })
        .collect()
}

#[test]
fn config_init_writes_a_loadable_file_and_refuses_to_overwrite() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&dss(tmp.path(), &["config", "init", "cfg.json"]));
    let text = fs::read_to_string(tmp.path().join("cfg.json")).unwrap();
    assert!(text.contains("\"seed\""));
    assert_eq!(
        dss(tmp.path(), &["config", "init", "cfg.json"])
            .status
            .code(),
        Some(2)
    );
    ok(&dss(tmp.path(), &["config", "init", "cfg.json", "--force"]));
    ok(&dss(
        tmp.path(),
        &[
            "--config",
            "cfg.json",
            "simulate",
            "--trials",
            "1",
            "--duration",
            "1",
        ],
    ));
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        ok(&dss(
            tmp.path(),
            &[
                "--seed",
                "9",
                "--out",
                out,
                "simulate",
                "--trials",
                "2",
                "--duration",
                "2",
            ],
        ));
    }
    ok(&dss(
        tmp.path(),
        &[
            "--seed",
            "10",
            "--out",
            "c",
            "simulate",
            "--trials",
            "2",
            "--duration",
            "2",
        ],
    ));
    let read = |d: &str, f: &str| fs::read(tmp.path().join(d).join(f)).unwrap();
    for f in ["optimal_000.csv", "optimal_001.csv", "manifest.json"] {
        assert_eq!(read("a", f), read("b", f), "{f}");
    }
    assert_ne!(read("a", "optimal_000.csv"), read("c", "optimal_000.csv"));
    let csv = String::from_utf8(read("a", "optimal_000.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,theta,x_c,theta_dot,xc_dot,u"));
    assert_eq!(csv.lines().count(), 1 + 121);
    assert_eq!(fs::read_dir(tmp.path().join("a")).unwrap().count(), 3);
}

#[test]
fn segment_then_embody_scores_the_reference_near_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path();
    ok(&dss(p, &["--out", "optimal", "simulate", "--trials", "30"]));
    ok(&dss(
        p,
        &[
            "--out", "random", "--seed", "3", "simulate", "--agent", "random", "--trials", "5",
        ],
    ));
    let summary = ok(&dss(
        p,
        &[
            "--out",
            "model",
            "segment",
            "optimal",
            "--dump-tree",
            "tree.json",
        ],
    ));
    assert!(summary.starts_with("nodes: "), "{summary}");
    assert!(p.join("tree.json").exists());

    ok(&dss(
        p,
        &[
            "--out",
            "scores",
            "embody",
            "--model",
            "model/model.json",
            "optimal",
            "random",
        ],
    ));
    let scores = kl_column(&p.join("scores"));
    let kl = |tag: &str| scores.iter().find(|(s, _)| s == tag).unwrap().1;
    assert!(kl("optimal") <= 0.01, "{scores:?}");
    assert!(kl("random") > kl("optimal"), "{scores:?}");

    // a single CSV is accepted as well
    ok(&dss(
        p,
        &[
            "--out",
            "one",
            "embody",
            "--model",
            "model/model.json",
            "--session",
            "s1",
            "optimal/optimal_000.csv",
        ],
    ));
    assert_eq!(kl_column(&p.join("one")).len(), 1);
}

#[test]
fn corrupt_csv_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&dss(
        tmp.path(),
        &["--out", "d", "simulate", "--trials", "1", "--duration", "4"],
    ));
    let f = tmp.path().join("d/optimal_000.csv");
    let text = fs::read_to_string(&f)
        .unwrap()
        .replacen("\n0.0", "\nnot-a-number", 1);
    fs::write(&f, text).unwrap();
    let out = dss(tmp.path(), &["segment", "d"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("optimal_000.csv"));
}

#[test]
fn missing_dataset_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(
        dss(tmp.path(), &["segment", "nowhere"]).status.code(),
        Some(3)
    );
}

#[test]
fn invalid_config_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("bad.json"),
        r#"{"window": {"size": 1, "overlap": 0.5}}"#,
    )
    .unwrap();
    assert_eq!(
        dss(tmp.path(), &["--config", "bad.json", "simulate"])
            .status
            .code(),
        Some(2)
    );
    fs::write(tmp.path().join("typo.json"), r#"{"sead": 4}"#).unwrap();
    assert_eq!(
        dss(tmp.path(), &["--config", "typo.json", "simulate"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        dss(tmp.path(), &["--jobs", "0", "simulate"]).status.code(),
        Some(2)
    );
}
