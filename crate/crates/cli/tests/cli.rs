use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn lbp(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lbp"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("LBP_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn ok(o: &Output) {
    assert!(
        o.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
}

fn rows(path: &Path) -> Vec<Vec<f64>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|rec| rec.unwrap().iter().map(|v| v.parse().unwrap()).collect())
        .collect()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMOKE: &str = "[sampler]\niterations = 200\nburn_in = 0\n";

#[test]
fn simulate_cosine600() {
    let dir = tempfile::tempdir().unwrap();
    ok(&lbp(&["simulate", "--scenario", "cosine600", "--seed", "1"], dir.path()));
    let data = rows(&dir.path().join("data.csv"));
    let truth = rows(&dir.path().join("truth.csv"));
    assert_eq!(data.len(), 600);
    assert_eq!(truth.len(), 600);
    for (d, t) in data.iter().zip(&truth) {
        assert!(d[1] == 0.0 || d[1] == 1.0);
        let p = 1.0 / (1.0 + (-(std::f64::consts::PI * t[0]).cos()).exp());
        assert!((t[1] - p).abs() < 1e-12);
    }
}

#[test]
fn simulate_spatial_split_and_regression() {
    let dir = tempfile::tempdir().unwrap();
    ok(&lbp(
        &["simulate", "--scenario", "spatial-copula", "--n", "50", "--n-test", "10", "--range", "0.1"],
        dir.path(),
    ));
    assert_eq!(rows(&dir.path().join("data.csv")).len(), 40);
    assert_eq!(rows(&dir.path().join("test.csv")).len(), 10);
    assert_eq!(rows(&dir.path().join("truth.csv"))[0].len(), 3);

    let dir = tempfile::tempdir().unwrap();
    ok(&lbp(&["simulate", "--scenario", "scenario-b", "--n", "30"], dir.path()));
    let truth = rows(&dir.path().join("truth.csv"));
    for t in truth {
        let expected = if t[0] <= 2.0 {
            0.0
        } else if t[0] <= 5.0 {
            2.0 * t[0] - 4.0
        } else {
            6.0
        };
        assert_eq!(t[1], expected);
    }
}

#[test]
fn prior_analyze_reports_diagonal_tie() {
    let dir = tempfile::tempdir().unwrap();
    let o = lbp(&["prior-analyze", "--b", "1.0", "--draws", "200"], dir.path());
    ok(&o);
    assert!(String::from_utf8_lossy(&o.stdout).contains("tie probability at distance 0: 0.5\n"));
    let dep = rows(&dir.path().join("dependence.csv"));
    assert_eq!(dep.len(), 21);
    assert_eq!(dep[0][0], 0.0);
    assert!((dep[0][4] - 0.5).abs() < 1e-12);
    let comp = rows(&dir.path().join("competitor_bounds.csv"));
    let b1 = comp.iter().find(|r| r[0] == 1.0).unwrap();
    assert!((b1[5] - 2.0 / 3.0).abs() < 1e-12, "M3 at b = 1");

    let o = lbp(&["prior-analyze", "--b", "0.2", "--draws", "200"], dir.path());
    ok(&o);
    assert!(String::from_utf8_lossy(&o.stdout).contains("distance 0: 0.833333333333"));
}

#[test]
fn fit_predict_diagnose_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&lbp(&["simulate", "--scenario", "cosine600", "--n", "60", "--seed", "3"], d));
    let cfg = write(d, "smoke.toml", &format!("[shape]\na = 2.0\nb = 4.0\n{SMOKE}"));
    let data = d.join("data.csv");
    ok(&lbp(&["fit-binary", "--data", s(&data), "--config", s(&cfg), "--seed", "3"], d));
    assert_eq!(rows(&d.join("draws.csv")).len(), 200);
    let fitted = rows(&d.join("fitted.csv"));
    assert_eq!(fitted.len(), 60);
    assert!(fitted.iter().all(|r| r[3] <= r[2] && r[2] <= r[4]));

    ok(&lbp(&["diagnose", "--fit", s(&d.join("fit.json"))], d));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("report.json")).unwrap()).unwrap();
    let ess = report["ess"][0][1].as_f64().unwrap();
    let acc = report["acceptance_rates"][0][1].as_f64().unwrap();
    assert!(ess > 0.0 && ess <= 200.0);
    assert!(acc > 0.0 && acc <= 1.0);

    let pts = write(d, "new.csv", "x\n0.5\n1.5\n2.5\n");
    ok(&lbp(&["predict", "--fit", s(&d.join("fit.json")), "--points", s(&pts)], d));
    let pred = rows(&d.join("predictions.csv"));
    assert_eq!(pred.len(), 3);
    assert!(pred.iter().all(|r| (0.0..=1.0).contains(&r[1])));
}

#[test]
fn pipeline_is_deterministic() {
    let run = |d: &Path| {
        ok(&lbp(&["simulate", "--scenario", "spatial-lbp", "--n", "40", "--seed", "9"], d));
        let cfg = write(d, "c.toml", "[shape]\na = 1.0\nb = 2.0\n[sampler]\niterations = 150\nburn_in = 0\nrange_grid = [0.1, 0.2]\n");
        ok(&lbp(&["fit-binary", "--data", s(&d.join("data.csv")), "--config", s(&cfg), "--seed", "9"], d));
        ["data.csv", "draws.csv", "fitted.csv"].map(|f| std::fs::read(d.join(f)).unwrap())
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(run(a.path()), run(b.path()));
    assert_eq!(rows(&a.path().join("draws.csv"))[0].len(), 3, "range column");
}

#[test]
fn mixture_fit_with_standardization() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&lbp(&["simulate", "--scenario", "scenario-a", "--n", "80", "--seed", "5"], d));
    let cfg = write(
        d,
        "ddp.toml",
        "[sampler]\niterations = 60\nburn_in = 30\n[ddp]\ntruncation = 5\nstandardize = true\ngrid_x = 4\ngrid_y = 30\n",
    );
    ok(&lbp(&["fit-ddp", "--data", s(&d.join("data.csv")), "--config", s(&cfg), "--seed", "5"], d));
    let st: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("standardization.json")).unwrap()).unwrap();
    assert!(st["y"]["scale"].as_f64().unwrap() > 0.0);
    let draws = rows(&d.join("draws.csv"));
    assert_eq!(draws.len(), 30);
    assert_eq!(draws[0].len(), 2 + 4);
    let mean = rows(&d.join("conditional_mean.csv"));
    assert_eq!(mean.len(), 4);
    // grid endpoints are the data range in original units
    let xs: Vec<f64> = rows(&d.join("data.csv")).iter().map(|r| r[0]).collect();
    let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!((mean[0][0] - lo).abs() < 1e-9);
    assert_eq!(rows(&d.join("density.csv")).len(), 4 * 30);

    let pts = write(d, "x.csv", "x\n0.2\n0.8\n");
    ok(&lbp(
        &["predict", "--fit", s(&d.join("fit.json")), "--points", s(&pts), "--threshold", "0.5"],
        d,
    ));
    let pred = rows(&d.join("predictions.csv"));
    assert_eq!(pred[0].len(), 7);
    assert!(pred.iter().all(|r| (0.0..=1.0).contains(&r[4])));
}

#[test]
fn replicate_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write(d, "r.toml", "[shape]\na = 1.0\nb = 2.0\n[sampler]\niterations = 120\nburn_in = 0\n");
    let o = lbp(
        &["replicate", "--experiment", "blocking", "--replicates", "2", "--n", "25", "--config", s(&cfg), "--threads", "2"],
        d,
    );
    ok(&o);
    let reps = rows(&d.join("replicates.csv"));
    assert_eq!(reps.len(), 2);
    assert_eq!(reps[0].len(), 6);
    let mut r = csv::Reader::from_path(d.join("summary.csv")).unwrap();
    assert_eq!(r.records().count(), 5);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(lbp(&["no-such-command"], d).status.code(), Some(2));
    assert_eq!(lbp(&["simulate", "--scenario", "cosine600", "--seed", "x"], d).status.code(), Some(2));
    assert_eq!(
        lbp(&["simulate", "--scenario", "spatial-lbp", "--range", "0.3"], d).status.code(),
        Some(2),
        "range outside the documented grid"
    );
    let bad_cfg = write(d, "bad.toml", "[sampler]\niterationz = 5\n");
    let data = write(d, "d.csv", "x,z\n0.1,1\n0.2,0\n0.3,2\n");
    assert_eq!(lbp(&["fit-binary", "--data", s(&data), "--config", s(&bad_cfg)], d).status.code(), Some(2));

    let o = lbp(&["fit-binary", "--data", s(&data)], d);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("d.csv row 4") && err.contains("z must be 0 or 1"), "{err}");

    let o = lbp(&["fit-binary", "--data", s(&d.join("missing.csv"))], d);
    assert_eq!(o.status.code(), Some(1));

    let text = write(d, "t.csv", "x,y\n0.1,abc\n");
    let o = lbp(&["fit-ddp", "--data", s(&text)], d);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("row 2: column y"));
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from-env");
    let o = Command::new(env!("CARGO_BIN_EXE_lbp"))
        .args(["simulate", "--scenario", "scenario-a", "--n", "10"])
        .env("LBP_OUT_DIR", &target)
        .output()
        .unwrap();
    ok(&o);
    assert_eq!(rows(&target.join("data.csv")).len(), 10);
}
