use std::path::Path;
use std::process::{Command, Output};

fn genestim(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_genestim"));
    cmd.args(args);
    if let Some(t) = threads {
        cmd.env("GENESTIM_THREADS", t);
    }
    cmd.output().expect("binary runs")
}

fn run_in(dir: &Path, args: &[&str], threads: Option<&str>) -> Output {
    let mut full = vec!["--out-dir", dir.to_str().unwrap()];
    full.extend_from_slice(args);
    genestim(&full, threads)
}

/// CSV text without the manifest comment line.
fn body(path: &Path) -> String {
    let text = std::fs::read_to_string(path).unwrap();
    text.split_once('\n').unwrap().1.to_string()
}

#[test]
fn every_csv_starts_with_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["binom-curves", "--n", "20", "--y", "6"], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    let files = manifest["files"].as_array().unwrap();
    assert!(files.iter().any(|f| f == "fig1_score_curves.csv"));
    for f in files.iter().filter_map(|f| f.as_str()).filter(|f| f.ends_with(".csv")) {
        let text = std::fs::read_to_string(dir.path().join(f)).unwrap();
        let first = text.lines().next().unwrap();
        let comment: serde_json::Value = serde_json::from_str(first.strip_prefix("# ").unwrap()).unwrap();
        assert_eq!(comment, manifest);
        assert!(!text.contains('\r'));
    }
    assert_eq!(manifest["command"], "binom-curves");
    assert_eq!(manifest["params"]["n"], 20);
}

#[test]
fn realized_curve_is_marked() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_in(dir.path(), &["binom-curves", "--n", "20", "--y", "6"], None).status.success());
    let text = body(&dir.path().join("fig1_score_curves.csv"));
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "y,p,value,realized,slope_sign");
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[3] == "true", cols[0] == "6");
        assert_eq!(cols[4], "-1");
    }
}

#[test]
fn monte_carlo_output_is_identical_across_runs_and_thread_counts() {
    let args = ["--seed", "7", "zeta-lab", "--family", "t3", "--reps", "4000"];
    let mut bodies = Vec::new();
    for threads in [Some("1"), Some("4"), None] {
        let dir = tempfile::tempdir().unwrap();
        let out = run_in(dir.path(), &args, threads);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        bodies.push((body(&dir.path().join("efficiency.csv")), body(&dir.path().join("zeta_curves.csv"))));
    }
    assert!(bodies.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn different_seeds_differ() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_in(a.path(), &["--seed", "1", "zeta-lab", "--reps", "2000"], None);
    run_in(b.path(), &["--seed", "2", "zeta-lab", "--reps", "2000"], None);
    assert_ne!(body(&a.path().join("zeta_curves.csv")), body(&b.path().join("zeta_curves.csv")));
}

#[test]
fn table1_has_all_cells() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["or-table1", "--n1", "20", "--n2", "30", "--z", "1.959964"], None);
    assert!(out.status.success());
    let text = body(&dir.path().join("table1.csv"));
    assert_eq!(text.lines().count(), 1 + 15 * 8);
    let spot = text
        .lines()
        .find(|l| l.starts_with("1.0000000000000000e0,1.0000000000000000e-2,") && l.contains(",0.0000000000000000e0,false,z-standard,"))
        .unwrap();
    let coverage: f64 = spot.rsplit(',').next().unwrap().parse().unwrap();
    assert!((coverage - 0.394).abs() < 0.005, "{coverage}");
}

#[test]
fn or_interval_reports_intervals() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["or-interval", "--x1", "5", "--x2", "10", "--rule", "plus-c:0.5"], None);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("interval.json")).unwrap()).unwrap();
    let z = &v["z_standard_log_odds_ratio"];
    assert!(z["lower"].as_f64().unwrap() < z["upper"].as_f64().unwrap());
    assert!(v["fisher_exact_odds_ratio"]["lower"].as_f64().unwrap() > 0.0);
}

#[test]
fn schema_errors_exit_2_with_json() {
    for args in [
        vec!["no-such-command"],
        vec!["binom-ci", "--n", "20"],
        vec!["or-interval", "--x1", "50", "--x2", "1"],
        vec!["or-interval", "--x1", "1", "--x2", "1", "--rule", "plus-x:1"],
        vec!["binom-ci", "--n", "20", "--y", "6", "--side", "sideways"],
        vec!["info-report", "--family", "bernoulli-sum", "--sizes", "20", "--point", "{not json"],
    ] {
        let out = genestim(&args, None);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
        assert_eq!(err["exit_code"], 2);
    }
    let out = genestim(&["verify"], Some("zero"));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numeric_failures_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["info-report", "--family", "normal-sample-location", "--sizes", "5", "--point", r#"{"theta":[0.0]}"#, "--reps", "1"],
        None,
    );
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("info_report.json").exists());
}

#[test]
fn infeasible_point_is_a_schema_error() {
    let out = genestim(
        &["info-report", "--family", "two-binomial", "--sizes", "20,30", "--point", r#"{"theta":[0.0],"nuisance":[80.0]}"#],
        None,
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_succeeds() {
    let out = genestim(&["--help"], None);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("or-table1"));
}

#[test]
fn verify_passes_and_flags_biased_estimator() {
    let out = genestim(&["verify", "--with-biased"], None);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert!(!stdout.contains("FAIL"));
    assert!(stdout.lines().any(|l| l.starts_with("FLAG") && l.contains("biased")));
}
