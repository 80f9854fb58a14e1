use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gamlasso"))
}

fn run_ok(args: &[&str]) -> Vec<u8> {
    let out = bin().args(args).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn json(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).unwrap()
}

fn fixture(dir: &TempDir, n: usize) -> PathBuf {
    let path = dir.path().join(format!("trio{n}.csv"));
    run_ok(&["simulate", "--fixture", "fig3", "--n", &n.to_string(), "--out", path.to_str().unwrap()]);
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Compares against `tests/golden/<name>`; set `UPDATE_GOLDEN=1` to rewrite.
fn golden(name: &str, actual: &[u8]) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() || !path.exists() {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, actual).unwrap();
        return;
    }
    let expected = fs::read(&path).unwrap();
    assert!(expected == actual, "output differs from golden file {name}");
}

#[test]
fn fit_document_schema_and_trio_recovery() {
    let dir = TempDir::new().unwrap();
    let data = fixture(&dir, 1000);
    let doc = json(&run_ok(&["fit", "--data", s(&data), "--response", "y", "--gamma", "2"]));
    for key in ["config", "lambda", "segments", "nullDeviance", "ic"] {
        assert!(doc.get(key).is_some(), "missing {key}");
    }
    let segs = doc["segments"].as_array().unwrap();
    assert_eq!(segs.len(), 100);
    assert_eq!(doc["lambda"].as_array().unwrap().len(), 100);
    for key in ["lambda", "alpha", "beta", "df", "deviance", "support", "converged"] {
        assert!(segs[0].get(key).is_some(), "segment missing {key}");
    }
    for key in ["aic", "aicc", "bic"] {
        assert_eq!(doc["ic"][key].as_array().unwrap().len(), 100);
        assert!(doc["ic"]["selected"][key].is_u64());
    }
    let t = doc["ic"]["selected"]["aicc"].as_u64().unwrap() as usize;
    let mut beta = [0.0; 3];
    for pair in segs[t]["beta"].as_array().unwrap() {
        beta[pair[0].as_u64().unwrap() as usize] = pair[1].as_f64().unwrap();
    }
    assert!((beta[0] - 3.0).abs() < 0.3 && (beta[1] + 1.0).abs() < 0.3 && beta[2].abs() < 0.3, "{beta:?}");
    assert_eq!(doc["config"]["path"]["gamma"], 2.0);
}

#[test]
fn default_gamma_is_lasso_byte_for_byte() {
    let dir = TempDir::new().unwrap();
    let data = fixture(&dir, 200);
    let a = run_ok(&["fit", "--data", s(&data), "--response", "y"]);
    let b = run_ok(&["fit", "--data", s(&data), "--response", "y", "--gamma", "0"]);
    assert_eq!(a, b);
}

#[test]
fn single_segment_document() {
    let dir = TempDir::new().unwrap();
    let data = fixture(&dir, 50);
    let doc = json(&run_ok(&["fit", "--data", s(&data), "--response", "y", "--nlambda", "1"]));
    assert_eq!(doc["segments"].as_array().unwrap().len(), 1);
    assert_eq!(doc["segments"][0]["support"], 0);
}

#[test]
fn cv_fold_sizes_and_rule_order() {
    let dir = TempDir::new().unwrap();
    let small = fixture(&dir, 10);
    let doc = json(&run_ok(&["cv", "--data", s(&small), "--response", "y", "--folds", "2", "--nlambda", "20"]));
    assert_eq!(doc["foldSizes"], serde_json::json!([5, 5]));

    let data = fixture(&dir, 300);
    let args = ["cv", "--data", s(&data), "--response", "y", "--seed", "4"];
    let a = run_ok(&args);
    assert_eq!(a, run_ok(&args));
    let doc = json(&a);
    assert!(doc["idx1se"].as_u64().unwrap() <= doc["idxMin"].as_u64().unwrap());
    for key in ["config", "lambda", "mean", "se", "idxMin", "idx1se"] {
        assert!(doc.get(key).is_some(), "missing {key}");
    }
    assert!(doc["refit"]["atMin"]["beta"].is_array() && doc["refit"]["at1se"]["beta"].is_array());
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let dir = TempDir::new().unwrap();
    let data = fixture(&dir, 200);
    let commands: Vec<Vec<&str>> = vec![
        vec!["cv", "--data", s(&data), "--response", "y", "--gamma", "2", "--seed", "9"],
        vec!["simulate", "--reps", "3", "--n", "80", "--p", "30", "--nlambda", "30", "--seed", "5"],
        vec!["verify", "--suite", "all", "--instances", "8", "--seed", "3", "--details"],
        vec!["fit", "--data", s(&data), "--response", "y", "--gamma", "10"],
    ];
    for c in commands {
        let mut one = vec!["--threads", "1"];
        one.extend(&c);
        let mut four = vec!["--threads", "4"];
        four.extend(&c);
        let a = run_ok(&one);
        assert_eq!(a, run_ok(&four), "{c:?}");
        assert_eq!(a, run_ok(&one), "{c:?} rerun");
    }
}

#[test]
fn simulate_small_cell_is_quick_and_well_formed() {
    let dir = TempDir::new().unwrap();
    let summary = dir.path().join("summary.json");
    let start = std::time::Instant::now();
    let csv = run_ok(&["simulate", "--reps", "1", "--n", "100", "--p", "50", "--summary", s(&summary)]);
    assert!(start.elapsed().as_secs_f64() < 5.0);
    let text = String::from_utf8(csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "rep,gamma,selector,r2,fdr,sensitivity,support,seconds");
    assert_eq!(lines.count(), 4 * 5);
    let doc: Value = serde_json::from_str(&fs::read_to_string(&summary).unwrap()).unwrap();
    assert_eq!(doc["aggregates"].as_array().unwrap().len(), 20);
    assert_eq!(doc["config"]["n"], 100);
}

#[test]
fn simulate_timings_fill_seconds() {
    let csv = run_ok(&["simulate", "--reps", "1", "--n", "60", "--p", "20", "--nlambda", "10", "--timings", "--no-marginal", "--selectors", "AICc"]);
    let text = String::from_utf8(csv).unwrap();
    let row = text.lines().nth(1).unwrap();
    assert!(row.rsplit(',').next().unwrap().parse::<f64>().is_ok(), "{row}");
}

#[test]
fn verify_lemma_suite_passes() {
    let out = bin().args(["verify", "--suite", "lemma1", "--instances", "1000"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let doc = json(&out.stdout);
    assert_eq!(doc["suites"][0]["violated"], 0);
    assert_eq!(doc["suites"][0]["confirmed"], 1000);
}

#[test]
fn oracle_prints_prefix_and_objective() {
    let dir = TempDir::new().unwrap();
    let data = fixture(&dir, 200);
    let doc = json(&run_ok(&["oracle", "--data", s(&data), "--response", "y", "--nested", "--sigma2", "1.0", "--center"]));
    let support: Vec<u64> = doc["support"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
    assert!(support.len() >= 2);
    assert_eq!(support, (0..support.len() as u64).collect::<Vec<_>>());
    assert!(doc["objective"].as_f64().unwrap() > 0.0);
    assert_eq!(doc["penalty"], 2.0);

    let ex = json(&run_ok(&["oracle", "--data", s(&data), "--response", "y", "--exhaustive", "--nu", "0.01", "--center"]));
    assert_eq!(ex["config"]["method"], "exhaustive");
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let data = fixture(&dir, 40);
    let code = |args: &[&str]| bin().args(args).output().unwrap().status.code();

    assert_eq!(code(&["fit", "--data", s(&data), "--response", "y", "--bogus"]), Some(2));
    assert_eq!(code(&["fit", "--data", "/nonexistent.csv", "--response", "y"]), Some(2));
    assert_eq!(code(&["fit", "--data", s(&data), "--response", "nope"]), Some(2));
    assert_eq!(code(&["fit", "--data", s(&data), "--response", "y", "--family", "poisson"]), Some(2));
    assert_eq!(code(&["fit", "--data", s(&data), "--response", "y", "--family", "binomial"]), Some(2));
    assert_eq!(code(&["verify", "--suite", "nope"]), Some(2));
    assert_eq!(code(&["simulate", "--fixture", "nope", "--out", "x.csv"]), Some(2));
    assert_eq!(code(&["oracle", "--data", s(&data), "--response", "y"]), Some(2));

    // a separable logistic problem diverges once the weight on the
    // separating column drops to zero
    let sep = dir.path().join("sep.csv");
    let mut text = String::from("y,x1,x2\n");
    for i in 0..30 {
        let x1 = i as f64 - 14.5;
        let x2 = ((i * 7) % 11) as f64;
        text.push_str(&format!("{},{x1},{x2}\n", (x1 > 0.0) as u8));
    }
    fs::write(&sep, text).unwrap();
    let out = bin()
        .args(["fit", "--data", s(&sep), "--response", "y", "--family", "binomial", "--gamma", "inf"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = json(&out.stdout);
    assert_eq!(doc["truncated"], true);
}

#[test]
fn version_reports_build_info() {
    let out = bin().arg("--version").output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn golden_outputs() {
    let dir = TempDir::new().unwrap();
    let data = fixture(&dir, 60);
    // the data path is echoed, so give it a stable relative name
    let stable = Path::new(env!("CARGO_TARGET_TMPDIR")).join("golden_trio.csv");
    fs::copy(&data, &stable).unwrap();
    let rel = "golden_trio.csv";
    let at = |args: &[&str]| {
        let out = bin().current_dir(env!("CARGO_TARGET_TMPDIR")).args(args).output().unwrap();
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        out.stdout
    };
    golden("fit.json", &at(&["fit", "--data", rel, "--response", "y", "--gamma", "2", "--nlambda", "12"]));
    golden("cv.json", &at(&["cv", "--data", rel, "--response", "y", "--nlambda", "12", "--folds", "3", "--seed", "2"]));
    golden("oracle.json", &at(&["oracle", "--data", rel, "--response", "y", "--nested", "--sigma2", "1", "--center"]));
    golden("verify.json", &at(&["verify", "--suite", "all", "--instances", "5", "--seed", "1"]));
    golden("simulate.csv", &at(&["simulate", "--reps", "1", "--n", "50", "--p", "12", "--nlambda", "15", "--seed", "3"]));
}
