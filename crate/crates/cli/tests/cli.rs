use std::path::PathBuf;
use std::process::{Command, Output};

use mrisk::threshold::delta_perfect_unreg;
use mrisk::{ExpectationEngine, MarginalLaw, ScalarConvexFunction};

const SPARSE: &str = "0.9*delta(0)+0.1*normal(0,1)";

fn mrisk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mrisk")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = mrisk(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn tmp(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("cli");
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect()
}

#[test]
fn huber_threshold_is_infinite() {
    let out = ok(&["threshold", "--loss", "huber(1)", "--noise", SPARSE]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["delta_perfect"], "inf");
}

#[test]
fn l1_threshold_matches_library() {
    let out = ok(&["threshold", "--loss", "abs", "--noise", SPARSE]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let want = delta_perfect_unreg(&ExpectationEngine::default(), &ScalarConvexFunction::abs(), &MarginalLaw::sparse_gaussian(0.1))
        .unwrap();
    assert_eq!(v["delta_perfect"].as_f64().unwrap(), want.delta_perfect);
    assert!(want.delta_perfect.is_finite());
}

#[test]
fn missing_noise_exits_2() {
    let out = mrisk(&["threshold", "--loss", "abs"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("noise"));
}

#[test]
fn assumption_violations_exit_2_and_say_why() {
    let cases: [(&[&str], &str); 5] = [
        (&["threshold", "--loss", "quantile(1.5)", "--noise", SPARSE], "quantile"),
        (&["threshold", "--loss", "abs", "--noise", "delta(0)"], "P(Z != 0)"),
        (&["solve", "--loss", "square", "--noise", "0.5*delta(0)+0.5*cauchy(0,1)", "--delta", "2"], "Lipschitz"),
        (&["solve", "--loss", "abs", "--noise", SPARSE, "--delta", "0.8"], "delta > 1"),
        (&["threshold", "--loss", "abs", "--noise", "0.5*delta(0)+0.4*normal(0,1)"], "weights sum"),
    ];
    for (args, needle) in cases {
        let out = mrisk(args);
        let err = String::from_utf8_lossy(&out.stderr);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {err}");
        assert!(err.contains(needle), "{args:?}: {err}");
    }
}

#[test]
fn bad_descriptor_exits_2() {
    let out = mrisk(&["threshold", "--loss", "cosh", "--noise", SPARSE]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn solve_square_loss() {
    let out = ok(&["solve", "--loss", "square", "--noise", "normal(0,1)", "--delta", "2"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!((v["alpha"].as_f64().unwrap() - 1.0).abs() < 1e-8);
    assert!((v["kappa"].as_f64().unwrap() - 1.0).abs() < 1e-8);
    assert_eq!(v["status"], "Converged");
}

#[test]
fn risk_curve_columns() {
    let out = ok(&[
        "risk-curve",
        "--loss",
        "abs",
        "--reg",
        "abs",
        "--noise",
        "0.7*delta(0)+0.3*normal(0,1)",
        "--signal",
        SPARSE,
        "--delta",
        "1.2",
        "--set",
        "lambdas=[0.1, 1, 10]",
    ]);
    assert!(out.starts_with("lambda,alpha,status,residual_max\n"));
    let rows = csv_rows(&out);
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[1][2], "at_zero");
    assert_eq!(rows[1][1], "0");
}

#[test]
fn reruns_are_byte_identical() {
    let runs: [&[&str]; 3] = [
        &["simulate", "--loss", "abs", "--noise", SPARSE, "--set", "deltas=[2, 3]", "--set", "experiment.p=40", "--set", "experiment.replicates=3"],
        &["phase-diagram", "--loss", "abs", "--set", "s_grid=[0.2]", "--set", "deltas=[2, 4]", "--set", "experiment.replicates=4", "--set", "engine.mc_samples=100000"],
        &["statdim", "--loss", "abs", "--noise", SPARSE, "-m", "50", "--samples", "20", "--seed", "7"],
    ];
    for args in runs {
        assert_eq!(ok(args), ok(args), "{args:?}");
    }
}

#[test]
fn seed_changes_simulation() {
    let base = ["simulate", "--loss", "abs", "--noise", SPARSE, "--delta", "2", "--set", "experiment.p=30", "--set", "experiment.replicates=2"];
    let a = ok(&base);
    let mut with_seed = base.to_vec();
    with_seed.extend(["--seed", "11"]);
    assert_ne!(a, ok(&with_seed));
}

#[test]
fn simulate_columns() {
    let out = ok(&[
        "simulate", "--loss", "abs", "--reg", "abs", "--noise", "0.7*delta(0)+0.3*normal(0,1)", "--signal", SPARSE, "--delta", "1.5",
        "--set", "experiment.p=40", "--set", "experiment.replicates=2", "--set", "lambdas=[0.5, 1]",
    ]);
    assert!(out.starts_with("replicate,n,p,delta,lambda,empirical_risk,recovered,kkt_certificate_norm,iters\n"));
    let rows = csv_rows(&out);
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0][1], "60");
    assert_eq!(rows[0][2], "40");
}

#[test]
fn single_cell_phase_diagram() {
    let out = ok(&[
        "phase-diagram", "--loss", "abs", "--set", "s_grid=[0.3]", "--delta", "3", "--set", "experiment.replicates=2",
        "--set", "engine.mc_samples=100000",
    ]);
    assert!(out.starts_with("s,delta,predicted_boundary,empirical_recovery_freq\n"));
    assert_eq!(csv_rows(&out).len(), 1);
}

#[test]
fn cauchy_boundary_increases_with_s() {
    let out = ok(&[
        "phase-diagram", "--loss", "abs", "--set", "s_grid=[0.1, 0.2, 0.3, 0.4, 0.5]", "--delta", "2", "--set",
        "experiment.replicates=1", "--set", "engine.mc_samples=200000",
    ]);
    let b: Vec<f64> = csv_rows(&out).iter().map(|r| r[2].parse().unwrap()).collect();
    assert_eq!(b.len(), 5);
    assert!(b.windows(2).all(|w| w[0] < w[1]), "{b:?}");
}

#[test]
fn recovery_well_above_the_boundary() {
    let engine = ExpectationEngine::default();
    let dp = delta_perfect_unreg(&engine, &ScalarConvexFunction::abs(), &MarginalLaw::sparse_cauchy(0.3)).unwrap().delta_perfect;
    let delta = format!("{}", 2.0 * dp);
    let out = ok(&[
        "phase-diagram", "--loss", "abs", "--set", "s_grid=[0.3]", "--delta", &delta, "--set", "experiment.n=100",
        "--set", "experiment.replicates=20",
    ]);
    let freq: f64 = csv_rows(&out)[0][3].parse().unwrap();
    assert!(freq >= 0.9, "{freq}");
}

#[test]
fn figures_single_delta() {
    let dir = tmp("figures_single");
    let _ = std::fs::remove_dir_all(&dir);
    ok(&[
        "figures",
        "--out",
        dir.to_str().unwrap(),
        "--svg",
        "--set",
        "figures.risk_deltas=[2.0]",
        "--set",
        "figures.reg_ratios=[1.3]",
        "--set",
        "figures.threshold_s=[0.1]",
        "--set",
        "figures.threshold_t=[0.3]",
        "--set",
        "figures.empirical=false",
        "--set",
        "lambdas=[1]",
        "--set",
        "s_grid=[0.2]",
        "--set",
        "deltas=[2]",
        "--set",
        "engine.mc_samples=100000",
    ]);
    let risk = std::fs::read_to_string(dir.join("risk_compare.csv")).unwrap();
    let rows = csv_rows(&risk);
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][0], "l1");
    assert_eq!(rows[0][2], "0");
    assert_eq!(rows[1][0], "huber");
    assert!(rows[1][2].parse::<f64>().unwrap() > 0.0);
    for f in ["reg_phase_transition", "reg_threshold", "phase_diagram", "risk_compare"] {
        assert!(dir.join(format!("{f}.csv")).exists());
        let svg = std::fs::read_to_string(dir.join(format!("{f}.svg"))).unwrap();
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
    }
}

#[test]
fn risk_compare_curves() {
    let dir = tmp("figures_curves");
    let _ = std::fs::remove_dir_all(&dir);
    ok(&[
        "figures",
        "--out",
        dir.to_str().unwrap(),
        "--set",
        "figures.risk_deltas=[1.2, 1.4, 1.6, 2.0, 3.0, 5.0]",
        "--set",
        "figures.reg_ratios=[1.3]",
        "--set",
        "figures.threshold_s=[0.1]",
        "--set",
        "figures.threshold_t=[0.3]",
        "--set",
        "figures.empirical=false",
        "--set",
        "lambdas=[1]",
        "--set",
        "s_grid=[0.2]",
        "--set",
        "deltas=[2]",
        "--set",
        "engine.mc_samples=100000",
    ]);
    let dp = delta_perfect_unreg(&ExpectationEngine::default(), &ScalarConvexFunction::abs(), &MarginalLaw::sparse_gaussian(0.1))
        .unwrap()
        .delta_perfect;
    for row in csv_rows(&std::fs::read_to_string(dir.join("risk_compare.csv")).unwrap()) {
        let delta: f64 = row[1].parse().unwrap();
        let a2: f64 = row[2].parse().unwrap();
        match row[0].as_str() {
            "huber" => assert!(a2 > 0.0, "{row:?}"),
            "l1" => assert_eq!(a2 == 0.0, delta >= dp, "{row:?}"),
            other => panic!("{other}"),
        }
    }
}

#[test]
fn config_file_and_round_trip() {
    let toml_path = tmp("run.toml");
    std::fs::write(
        &toml_path,
        r#"
loss = { kind = "huber", bend = 1.0, scale = 2.5 }
noise = "0.9*delta(0)+0.1*normal(0,1)"
delta = 2.0
lambdas = [0.5, 1.0]

[engine]
mc_samples = 1000

[experiment]
p = 50
"#,
    )
    .unwrap();
    let path = toml_path.to_str().unwrap();
    let printed = ok(&["threshold", "--config", path, "--print-config"]);
    let again_path = tmp("again.toml");
    std::fs::write(&again_path, &printed).unwrap();
    let printed_again = ok(&["threshold", "--config", again_path.to_str().unwrap(), "--print-config"]);
    assert_eq!(printed, printed_again);
    assert!(printed.contains("mc_samples = 1000"));

    let json_path = tmp("run.json");
    std::fs::write(&json_path, r#"{"loss": "abs", "noise": {"atoms": [{"at": 0.0, "w": 0.9}], "continuous": [{"gaussian": {"mean": 0, "sd": 1}, "w": 0.1}]}}"#).unwrap();
    let a = ok(&["threshold", "--config", json_path.to_str().unwrap()]);
    let b = ok(&["threshold", "--loss", "abs", "--noise", SPARSE]);
    assert_eq!(a, b);
}

#[test]
fn set_overrides_file() {
    let path = tmp("override.toml");
    std::fs::write(&path, "loss = \"huber\"\nnoise = \"0.9*delta(0)+0.1*normal(0,1)\"\n").unwrap();
    let out = ok(&["threshold", "--config", path.to_str().unwrap(), "--set", "loss=abs"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!(v["delta_perfect"].as_f64().is_some());
}

#[test]
fn unknown_key_exits_2() {
    let out = mrisk(&["threshold", "--loss", "abs", "--noise", SPARSE, "--set", "nosie=abs"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn output_file() {
    let path = tmp("sub/out.json");
    ok(&["statdim", "--loss", "abs", "--noise", SPARSE, "-m", "20", "--samples", "5", "--out", path.to_str().unwrap()]);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["m"], 20);
}
