use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_biortho-lab");
const ARTIFACTS: &[&str] = &[
    "validate.json",
    "basis.json",
    "construction.json",
    "sections.json",
    "solutions.json",
    "gram.json",
    "invariants.json",
    "diagnose.json",
    "probes.json",
];

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn lab(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env("BIORTHO_THREADS", "2").output().expect("binary runs")
}

fn run(out: &Path, config: Option<&Path>, stage: &str) -> Output {
    let mut args = vec!["run", "--stage", stage, "--out", out.to_str().unwrap()];
    if let Some(c) = config {
        args.extend(["--config", c.to_str().unwrap()]);
    }
    lab(&args)
}

fn ok(o: &Output) {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

/// Toy run with fewer nodes, written next to the outputs.
fn small_config(dir: &Path) -> PathBuf {
    let mut cfg: Value = serde_json::from_slice(&fs::read(configs().join("toy.json")).unwrap()).unwrap();
    cfg["nodes"] = 5.into();
    cfg["duals"] = 3.into();
    let path = dir.join("small.json");
    fs::write(&path, serde_json::to_vec_pretty(&cfg).unwrap()).unwrap();
    path
}

fn read(dir: &Path, name: &str) -> Value {
    serde_json::from_slice(&fs::read(dir.join(name)).unwrap()).unwrap()
}

#[test]
fn admissible_config_validates() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(tmp.path(), Some(&configs().join("admissible.json")), "validate");
    ok(&o);
    let v = read(tmp.path(), "validate.json");
    assert_eq!(v["admissibility"]["admissible"], Value::Bool(true));
    assert_eq!(v["toy_scale"], Value::Bool(false));
}

#[test]
fn toy_exponents_are_not_admissible_without_the_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = read(&configs(), "toy.json");
    cfg["toy_scale"] = false.into();
    let path = tmp.path().join("strict.json");
    fs::write(&path, serde_json::to_vec(&cfg).unwrap()).unwrap();
    let o = run(tmp.path(), Some(&path), "validate");
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("admissibility"));
}

#[test]
fn toy_pipeline_produces_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&run(tmp.path(), Some(&configs().join("toy.json")), "all"));
    for name in ARTIFACTS {
        assert!(tmp.path().join(name).exists(), "{name} missing");
    }
    let c = read(tmp.path(), "construction.json");
    assert_eq!(c["nodes"].as_array().unwrap().len(), 10);
    let g = read(tmp.path(), "gram.json");
    let table = g["table"].as_array().unwrap();
    assert_eq!(table.len(), 6);
    for (i, row) in table.iter().enumerate() {
        let row = row.as_array().unwrap();
        assert_eq!(row.len(), 6);
        for (k, v) in row.iter().enumerate() {
            let target = if i == k { 1.0 } else { 0.0 };
            assert!((v.as_f64().unwrap() - target).abs() < 1e-4);
        }
    }
    let inv = read(tmp.path(), "invariants.json");
    assert!(inv["checks"].as_array().unwrap().iter().all(|c| c["pass"] == Value::Bool(true)));
}

#[test]
fn construct_without_basis_names_the_dependency() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(tmp.path(), None, "construct");
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("basis.json") && err.contains("`basis`"), "{err}");
}

#[test]
fn stale_construction_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    for stage in ["basis", "construct"] {
        ok(&run(tmp.path(), Some(&cfg), stage));
    }
    let mut basis = read(tmp.path(), "basis.json");
    basis["p0"] = 0.5.into();
    fs::write(tmp.path().join("basis.json"), serde_json::to_vec(&basis).unwrap()).unwrap();
    let o = run(tmp.path(), Some(&cfg), "solve");
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn stages_run_separately_match_a_full_run() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = small_config(a.path());
    ok(&run(a.path(), Some(&cfg), "all"));
    for stage in ["validate", "basis", "construct", "solve", "verify", "diagnose"] {
        ok(&run(b.path(), Some(&cfg), stage));
    }
    for name in ARTIFACTS {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn runs_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = small_config(a.path());
    ok(&run(a.path(), Some(&cfg), "all"));
    let o = Command::new(BIN)
        .args(["run", "--stage", "all", "--config", cfg.to_str().unwrap(), "--out", b.path().to_str().unwrap()])
        .env("BIORTHO_THREADS", "1")
        .output()
        .unwrap();
    ok(&o);
    for name in ARTIFACTS {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn exports() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    ok(&run(tmp.path(), Some(&cfg), "all"));
    let dir = tmp.path().to_str().unwrap();

    let o = lab(&["export", "--artifact", "solutions", "--format", "csv", "--out", dir]);
    ok(&o);
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("m,k,value"));
    assert!(text.lines().skip(1).all(|l| l.split(',').count() == 3));

    let o = lab(&["export", "--artifact", "trace", "--format", "csv", "--out", dir, "--m", "2"]);
    ok(&o);
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("n,r,residual,norm,delta"));
    assert!(text.lines().count() > 1);

    let first = lab(&["export", "--artifact", "config", "--out", dir]);
    let dest = tmp.path().join("exported.json");
    ok(&lab(&["export", "--artifact", "config", "--out", dir, "--dest", dest.to_str().unwrap()]));
    assert_eq!(first.stdout, fs::read(&dest).unwrap());
    let again = lab(&["export", "--artifact", "config", "--out", dir]);
    assert_eq!(first.stdout, again.stdout);

    let o = lab(&["export", "--artifact", "nonsense", "--out", dir]);
    assert_eq!(o.status.code(), Some(4));
    let o = lab(&["export", "--artifact", "probes", "--format", "csv", "--out", dir]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unknown_config_fields_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = read(&configs(), "toy.json");
    cfg["colour"] = "blue".into();
    let path = tmp.path().join("bad.json");
    fs::write(&path, serde_json::to_vec(&cfg).unwrap()).unwrap();
    let o = run(tmp.path(), Some(&path), "validate");
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));
}
