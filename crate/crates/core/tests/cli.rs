use std::path::Path;
use std::process::Command;

fn ietlab(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_ietlab")).args(args).output().expect("binary runs")
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn demo_succeeds_with_bounded_correction() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("demo");
    let r = ietlab(&["demo", "--out", out.to_str().unwrap()]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let summary: serde_json::Value = serde_json::from_str(&read(&out, "summary.json")).unwrap();
    assert_eq!(summary["results"]["correct"]["corrected_trend"], "bounded");
    assert_eq!(summary["passed"], true);
    let hash = summary["hash"].as_str().unwrap();
    assert!(read(&out, "correction.json").contains(hash));
    assert!(read(&out, "gates.log").lines().all(|l| l.starts_with("PASS") || l.starts_with("WARN")));
    let hist = read(&out, "histogram_n3.csv");
    assert!(hist.starts_with("bin_left,bin_right,mass"));
    assert!(read(&out, "diagnostics.csv").starts_with("level,symbol,Q,L1_over_len,sup,defect,bound"));
}

#[test]
fn same_seed_gives_identical_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        let r = ietlab(&["demo", "--seed", "11", "--out", dir.to_str().unwrap()]);
        assert!(r.status.success());
    }
    for entry in std::fs::read_dir(&a).unwrap() {
        let name = entry.unwrap().file_name().into_string().unwrap();
        if name.ends_with(".csv") {
            assert_eq!(read(&a, &name), read(&b, &name), "{name}");
        }
    }
}

#[test]
fn zero_blog_rigidity_fails_validation() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = tmp.path().join("bad.json");
    std::fs::write(
        &sc,
        r#"{"name": "flat", "source": {"catalog": "rev4"}, "cocycle": {"kind": "coboundary", "g": [0, 1, -1]}, "pipeline": ["rigidity"]}"#,
    )
    .unwrap();
    let out = tmp.path().join("out");
    let r = ietlab(&["rigidity", "--scenario", sc.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("Blog = 0"));
    assert!(!out.exists(), "nothing is written before validation passes");
}

#[test]
fn stage_subcommand_writes_only_its_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = tmp.path().join("cob.json");
    std::fs::write(
        &sc,
        r#"{"name": "cob", "source": {"catalog": "rev4"}, "cocycle": {"kind": "coboundary", "g": [0, 0.5, -0.5]}, "pipeline": ["induct", "correct"]}"#,
    )
    .unwrap();
    let out = tmp.path().join("out");
    let r = ietlab(&["correct", "--scenario", sc.to_str().unwrap(), "--out", out.to_str().unwrap(), "--tol", "1e-11"]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(out.join("growth.csv").exists());
    assert!(!out.join("period.json").exists());
    let corr: serde_json::Value = serde_json::from_str(&read(&out, "correction.json")).unwrap();
    let h: Vec<f64> = corr["result"]["h"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert!(h.iter().all(|x| x.abs() < 1e-6), "{h:?}");
}

#[test]
fn mint_writes_catalogs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("m");
    let r = ietlab(&["mint", "--pair", "2,1", "--budget", "10", "--max-loops", "1", "--out", out.to_str().unwrap()]);
    assert!(r.status.success());
    let cat: Vec<serde_json::Value> = serde_json::from_str(&read(&out, "catalog.json")).unwrap();
    assert_eq!(cat.len(), 1);
    assert_eq!(cat[0]["moves"].as_array().unwrap().len(), 2);
    let r = ietlab(&["mint", "--pair", "golden", "--budget", "0", "--out", out.to_str().unwrap()]);
    assert!(r.status.success());
    assert_eq!(read(&out, "catalog.json").trim(), "[]");
}

#[test]
fn stage_without_scenario_is_a_usage_error() {
    let r = ietlab(&["induct"]);
    assert_eq!(r.status.code(), Some(2));
}
