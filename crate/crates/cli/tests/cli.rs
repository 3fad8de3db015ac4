use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str], cfg: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cbi-lab"))
        .args(args)
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .env("CBI_LAB_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn general_theorem_holds_for_stable_with_diffusion() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["check"], &config("stable_diffusion.toml"), tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report = json(&tmp.path().join("theorem_report.json"));
    assert_eq!(report["result"]["overall"], true);
    assert_eq!(report["result"]["certificate"]["alpha"], serde_json::json!([1.5, 1.6]));
}

#[test]
fn wide_index_spread_fails_without_diffusion() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["check"], &config("stable_pure_jump.toml"), tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let report = json(&tmp.path().join("theorem_report.json"));
    assert_eq!(report["result"]["overall"], false);
}

#[test]
fn cir_oracle_comparison_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["oracle-compare"], &config("cir.toml"), tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let table = std::fs::read_to_string(tmp.path().join("oracle_compare.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("lambda,mc,stderr,oracle,z"));
    for line in lines {
        let z: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(z.abs() <= 3.0, "{line}");
    }
}

#[test]
fn outputs_embed_config_and_version() {
    let tmp = tempfile::tempdir().unwrap();
    for cmd in ["validate", "certify", "simulate"] {
        let o = run(&[cmd, "--paths", "300", "--quiet"], &config("cir_jumps.toml"), tmp.path());
        assert_eq!(o.status.code(), Some(0));
        assert!(o.stdout.is_empty());
    }
    for file in ["validation.json", "certificate.json", "simulate.json"] {
        let v = json(&tmp.path().join(file));
        assert!(v["version"].as_str().unwrap().starts_with("cbi-core "));
        assert_eq!(v["config"]["params"]["beta"], serde_json::json!([1.0]));
        assert_eq!(v["config"]["sim"]["n_paths"], 300);
    }
}

#[test]
fn seed_override_reproduces_csv_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    let cfg = config("stable_axis.toml");
    run(&["simulate", "--paths", "500", "--seed", "42"], &cfg, &a);
    run(&["simulate", "--paths", "500", "--seed", "42"], &cfg, &b);
    run(&["simulate", "--paths", "500", "--seed", "43"], &cfg, &c);
    let read = |d: &Path| std::fs::read(d.join("terminal.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}

#[test]
fn config_errors_exit_one_and_name_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "[params]\nc = [1.0]\nbeta = [1.0]\nB = [[-1.0]]\nmu = [{ kind = \"stable\" }]\n").unwrap();
    let o = run(&["validate"], &bad, tmp.path());
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.toml") && err.contains("mu"), "{err}");

    let o = run(&["validate"], &tmp.path().join("missing.toml"), tmp.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn inadmissible_parameters_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("neg.toml");
    std::fs::write(&cfg, "[params]\nc = [1.0]\nbeta = [-1.0]\nB = [[-1.0]]\nmu = [{ kind = \"zero\" }]\n").unwrap();
    let o = run(&["validate"], &cfg, tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(json(&tmp.path().join("validation.json"))["result"]["ok"], false);
}
