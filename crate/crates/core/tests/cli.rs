use std::path::PathBuf;
use std::process::Command;

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn stemgrow() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stemgrow"))
}

#[test]
fn run_audit_and_oracle_check() {
    let out = tempfile::tempdir().unwrap();
    let status = stemgrow()
        .args(["run", scenario("gravitropic_sphere.toml").to_str().unwrap(), "--out"])
        .arg(out.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let frames = out.path().join("frames.jsonl");
    assert_eq!(stemgrow().arg("audit").arg(&frames).status().unwrap().code(), Some(0));
    let check = stemgrow().arg("oracle-check").arg(&frames).output().unwrap();
    assert_eq!(check.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&check.stdout).contains(" ok"));
}

#[test]
fn exit_codes_follow_terminal_events() {
    for (name, code) in [
        ("straight.toml", 0),
        ("sphere_perpendicular.toml", 10),
        ("huge_step.toml", 20),
    ] {
        let out = tempfile::tempdir().unwrap();
        let status = stemgrow()
            .args(["run", scenario(name).to_str().unwrap(), "--stride", "5", "--out"])
            .arg(out.path())
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(code), "{name}");
        assert!(out.path().join("manifest.json").exists());
    }
}

#[test]
fn rerun_from_manifest_and_twin() {
    let first = tempfile::tempdir().unwrap();
    let again = tempfile::tempdir().unwrap();
    let cfg = scenario("straight.toml");
    assert!(stemgrow().args(["run", cfg.to_str().unwrap(), "--out"]).arg(first.path()).status().unwrap().success());
    let manifest = first.path().join("manifest.json");
    assert!(stemgrow().arg("run").arg(&manifest).arg("--out").arg(again.path()).status().unwrap().success());
    let a = std::fs::read(first.path().join("frames.jsonl")).unwrap();
    let b = std::fs::read(again.path().join("frames.jsonl")).unwrap();
    assert_eq!(a, b);

    let twin = tempfile::tempdir().unwrap();
    let status = stemgrow()
        .args(["twin", scenario("gravitropic_free.toml").to_str().unwrap(), "--perturb", "tilt:1e-3", "--out"])
        .arg(twin.path())
        .status()
        .unwrap();
    assert!(status.success());
    assert!(twin.path().join("distances.jsonl").exists());
}

#[test]
fn bad_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[numerics]\ndt = 0.0\nhorizon = 1.0\n[seed_curve]\nkind = \"segment\"\ndirection = [0.0, 0.0, 1.0]\n").unwrap();
    let out = stemgrow().arg("run").arg(&cfg).arg("--out").arg(dir.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("numerics.dt"));
    assert_eq!(stemgrow().args(["twin", "x.toml", "--perturb", "spin:1", "--out", "o"]).status().unwrap().code(), Some(2));
}
