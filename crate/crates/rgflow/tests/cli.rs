use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rgflow"))
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("rgflow-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    d
}

fn run(out: &Path, args: &[&str]) -> Output {
    bin().arg("--out").arg(out).args(args).env_remove("RGFLOW_CACHE_DIR").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn manifest(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

const SMALL_FLOW: &str = r#"{
  "n_max": 4,
  "grid": { "nodes": 40, "lambda_min": 0.01 },
  "probes": { "two_point_count": 4, "four_point_count": 2 }
}"#;

#[test]
fn eval_tree_reports_closed_form_weight() {
    let out = scratch("tree");
    let file = concat!(env!("CARGO_MANIFEST_DIR"), "/data/example_tree.json");
    let o = run(&out, &["eval-tree", "--file", file, "--q", "0.3,0.1,-0.2,0.5;1,0,0.4,0.2", "--lambda", "0.7", "--mu", "1"]);
    assert!(o.status.success(), "{o:?}");
    let s = stdout(&o);
    assert!(s.contains("dimension = -3"), "{s}");
    let rep: Value = serde_json::from_str(&std::fs::read_to_string(out.join("tree_eval.json")).unwrap()).unwrap();
    let w = rep["weight"].as_f64().unwrap();
    let q: Vec<[f64; 4]> = serde_json::from_value(rep["momenta"].clone()).unwrap();
    let n: Vec<f64> = q.iter().map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    let lam: f64 = 0.7;
    let sup = |a: f64| a.max(lam);
    let closed_form = sup(n[0]).sqrt() * lam * lam / (sup(n[1]).sqrt() * sup(n[2]) * sup(n[0].min(n[2])) * sup(n[1].min(n[2])).powi(3));
    assert!((w / closed_form - 1.0).abs() < 1e-12);
    assert_eq!(manifest(&out)["artifacts"].as_array().unwrap().len(), 1);
}

#[test]
fn brst_check_reports_vanishing_su2_anomaly() {
    let out = scratch("su2");
    let o = run(&out, &["brst-check", "--algebra", "su2", "--anomaly"]);
    assert!(o.status.success());
    assert!(stdout(&o).lines().any(|l| l == "anomaly = 0"));
    let out3 = scratch("su3");
    let o = run(&out3, &["brst-check", "--algebra", "su3", "--anomaly"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("anomaly ≠ 0"));
    assert!(std::fs::read_to_string(out3.join("anomaly.txt")).unwrap().lines().count() > 100);
}

#[test]
fn module_errors_have_distinct_exit_codes() {
    let out = scratch("errors");
    let missing = run(&out, &["--config", "/definitely/not/here.json", "integrate-flow"]);
    assert_eq!(missing.status.code(), Some(2));
    let algebra = run(&out, &["brst-check", "--algebra", "so5"]);
    assert_eq!(algebra.status.code(), Some(13));
    let lemma = run(&out, &["lemma-suite", "--only", "B7"]);
    assert_eq!(lemma.status.code(), Some(14));
    let tree = out.join("bad_tree.json");
    std::fs::write(&tree, r#"{"vertices":[{"kind":"internal"}],"edges":[[0,0]],"w":[],"particular":null}"#).unwrap();
    let t = run(&out, &["eval-tree", "--file", tree.to_str().unwrap(), "--q", "1,0,0,0", "--lambda", "1"]);
    assert_eq!(t.status.code(), Some(12));
    let cfg = out.join("bad_flow.json");
    std::fs::write(&cfg, r#"{"l_max": 2}"#).unwrap();
    assert_eq!(run(&out, &["--config", cfg.to_str().unwrap(), "integrate-flow"]).status.code(), Some(10));
}

#[test]
fn lemma_suite_subset_writes_report() {
    let out = scratch("lemma");
    let o = run(&out, &["--seed", "5", "lemma-suite", "--only", "A1,A10", "--samples", "2000"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rep: Value = serde_json::from_str(&std::fs::read_to_string(out.join("lemmas.json")).unwrap()).unwrap();
    let names: Vec<&str> = rep["lemmas"].as_array().unwrap().iter().map(|l| l["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["A1", "A10"]);
    assert!(std::fs::read_to_string(out.join("lemmas.csv")).unwrap().starts_with("lemma,family"));
    assert_eq!(manifest(&out)["seed"], 5);
}

#[test]
fn flow_tables_reproducible_and_bounded() {
    let dir = scratch("flow");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("flow.json");
    std::fs::write(&cfg, SMALL_FLOW).unwrap();
    let (a, b) = (dir.join("a"), dir.join("b"));
    for out in [&a, &b] {
        let o = run(out, &["--config", cfg.to_str().unwrap(), "--threads", "2", "integrate-flow", "--lambda0", "10", "--lambda0", "20"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (ma, mb) = (manifest(&a), manifest(&b));
    assert_eq!(ma["config_hash"], mb["config_hash"]);
    let hashes = |m: &Value| -> Vec<String> {
        m["artifacts"].as_array().unwrap().iter().map(|x| x["sha256"].as_str().unwrap().to_string()).collect()
    };
    assert_eq!(hashes(&ma), hashes(&mb));
    assert!(a.join("convergence.csv").exists());

    let table = a.join("lambda0_20").join("table.json");
    let v = dir.join("v");
    let o = run(&v, &["verify-bounds", "--table", table.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stdout(&o));
    let reps: Value = serde_json::from_str(&std::fs::read_to_string(v.join("bounds.json")).unwrap()).unwrap();
    for r in reps.as_array().unwrap() {
        assert_eq!(r["degree"].as_u64().unwrap(), r["l"].as_u64().unwrap() + 1);
    }
    assert!(v.join("bound_ratios_l1_n2.csv").exists());
}

#[test]
fn cache_directory_reuses_tables() {
    let dir = scratch("cache");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("flow.json");
    std::fs::write(&cfg, SMALL_FLOW).unwrap();
    let cache = dir.join("cache");
    for out in ["a", "b"] {
        let o = bin()
            .arg("--out")
            .arg(dir.join(out))
            .args(["--config", cfg.to_str().unwrap(), "integrate-flow"])
            .env("RGFLOW_CACHE_DIR", &cache)
            .output()
            .unwrap();
        assert!(o.status.success());
    }
    assert_eq!(std::fs::read_dir(&cache).unwrap().count(), 1);
    let read = |p: &str| std::fs::read(dir.join(p).join("cac_l1_n2.csv")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_eq!(manifest(&dir.join("b"))["cache_dir"].as_str().unwrap(), cache.to_str().unwrap());
}
