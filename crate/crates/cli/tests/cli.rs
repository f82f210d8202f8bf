use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_modelrepair")).args(args).output().expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_then_repair_recovers_the_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let out = bin(&["simulate", "--n", "10", "--p", "300", "--eps", "0.2", "--Q", "normal:1,1", "--seed", "0x2a", "--out", p(&sim)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = json(&sim.join("manifest.json"));
    assert_eq!(manifest["seeds"]["base"], 42);

    let rep = dir.path().join("rep");
    let out = bin(&[
        "repair",
        "--design",
        p(&sim.join("X.csv")),
        "--design-is-x",
        "--eta",
        p(&sim.join("eta.csv")),
        "--reference",
        p(&sim.join("theta_hat.csv")),
        "--out",
        p(&rep),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&rep.join("report.json"));
    assert_eq!(report["status"], "Optimal");
    assert_eq!(report["verdict"]["exact"], true);
    assert_eq!(fs::read_to_string(rep.join("u_hat.csv")).unwrap().lines().count(), 10);
}

#[test]
fn rank_deficient_design_exits_with_degenerate_code() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let eta = dir.path().join("eta.csv");
    fs::write(&a, "1,2\n2,4\n3,6\n").unwrap();
    fs::write(&eta, "1\n2\n3\n").unwrap();
    let out = bin(&["repair", "--design", p(&a), "--eta", p(&eta)]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn iteration_limit_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let eta = dir.path().join("eta.csv");
    fs::write(&a, "a1,a2\n1,0.3\n-0.2,1\n0.5,0.7\n2,-1\n0.1,0.4\n").unwrap();
    fs::write(&eta, "3\n-1\n0.5\n7\n2\n").unwrap();
    let out = bin(&["repair", "--design", p(&a), "--eta", p(&eta), "--max-iter", "1"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stdout));
    let ok = bin(&["repair", "--design", p(&a), "--eta", p(&eta)]);
    assert_eq!(ok.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert!(report["objective"].as_f64().unwrap() > 0.0);
}

#[test]
fn check_conditions_prints_json() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    assert!(bin(&["simulate", "--n", "5", "--p", "400", "--out", p(&sim)]).status.success());
    let out = bin(&["check-conditions", "--design", p(&sim.join("X.csv")), "--design-is-x", "--eps", "0.1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["estimates"]["m"], 400);
    assert_eq!(v["estimates"]["k"], 5);
    assert!(v["prediction"]["score"].as_f64().unwrap() > 0.0);
}

#[test]
fn experiment_writes_reproducible_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out_dir = dir.path().join(name);
        let out = bin(&[
            "experiment", "--kind", "linear_curve", "--n", "8", "--ratio", "30", "--k", "1..2", "--eps", "0:0.3:0.6", "--trials", "5",
            "--seed", "7", "--out", p(&out_dir),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        out_dir
    };
    let (a, b) = (run("a"), run("b"));
    let csv = fs::read_to_string(a.join("curves.csv")).unwrap();
    assert_eq!(csv, fs::read_to_string(b.join("curves.csv")).unwrap());
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
    assert!(fs::read_to_string(a.join("curves.svg")).unwrap().matches("<polyline").count() == 2);
    let manifest = json(&a.join("manifest.json"));
    assert_eq!(manifest["spec"]["n"], 8);
    assert_eq!(manifest["failures"], 0);

    let rerun = dir.path().join("rerun");
    let man = a.join("manifest.json");
    let out = bin(&["experiment", "--kind", "linear_curve", "--spec", p(&man), "--out", p(&rerun)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(csv, fs::read_to_string(rerun.join("curves.csv")).unwrap());

    let bad = bin(&["experiment", "--kind", "linear_curve", "--eps", "0:0.5:1.5", "--out", p(&dir.path().join("c"))]);
    assert!(!bad.status.success());
}

#[test]
fn network_round_trip_through_bundles() {
    let dir = tempfile::tempdir().unwrap();
    let (n, d) = (4, 12);
    let mut x = String::new();
    let mut y = String::new();
    for i in 0..n {
        let row: Vec<String> = (0..d).map(|j| format!("{}", (((i * 7 + j * 3) % 11) as f64 - 5.0) / 5.0)).collect();
        x.push_str(&(row.join(",") + "\n"));
        y.push_str(&format!("{}\n", (i as f64 * 0.4 - 0.6).tanh()));
    }
    let (xp, yp) = (dir.path().join("X.csv"), dir.path().join("y.csv"));
    fs::write(&xp, x).unwrap();
    fs::write(&yp, y).unwrap();

    let trained = dir.path().join("trained");
    let out = bin(&[
        "nn-train", "--x", p(&xp), "--y", p(&yp), "--p", "30", "--mode", "retrain_output", "--t-max", "20", "--seed", "3", "--out",
        p(&trained),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(trained.join("W.csv").exists() && trained.join("trace.csv").exists());

    let corrupted = dir.path().join("corrupted");
    let out = bin(&["nn-corrupt", "--bundle", p(&trained), "--eps", "0.1", "--seed", "9", "--out", p(&corrupted)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!json(&corrupted.join("manifest.json"))["corruption"].is_null());

    let repaired = dir.path().join("repaired");
    let out = bin(&[
        "nn-repair", "--bundle", p(&corrupted), "--x", p(&xp), "--reference", p(&trained), "--out", p(&repaired),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&repaired.join("report.json"));
    assert_eq!(report["all_optimal"], true);
    assert!(report["hidden_mse"].as_f64().unwrap().is_finite());
}
