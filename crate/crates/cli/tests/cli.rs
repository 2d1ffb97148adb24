use std::path::PathBuf;
use std::process::Command;

fn pspin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pspin"))
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("pspin-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

#[test]
fn flows_writes_verdict_and_figures() {
    let out = scratch("flows");
    let st = pspin().args(["flows", "--out"]).arg(&out).output().unwrap();
    assert_eq!(st.status.code(), Some(0), "{}", String::from_utf8_lossy(&st.stdout));
    for f in ["verdict.json", "config.resolved.txt", "uc_ratio_p3.csv", "curves.csv", "region_boundaries.csv"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let v = pspin().arg("validate").arg(out.join("verdict.json")).output().unwrap();
    assert_eq!(v.status.code(), Some(0));
}

#[test]
fn unknown_config_key_exits_one() {
    let dir = scratch("badcfg");
    let cfg = dir.join("bad.cfg");
    std::fs::write(&cfg, "no_such_key = 3\n").unwrap();
    let st = pspin().args(["verify", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(st.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&st.stderr).contains("no_such_key"));
}

#[test]
fn invalid_verdict_exits_two() {
    let dir = scratch("schema");
    let p = dir.join("verdict.json");
    std::fs::write(&p, r#"{"claims": [{"name": "x", "pass": true}]}"#).unwrap();
    let st = pspin().arg("validate").arg(&p).output().unwrap();
    assert_eq!(st.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&st.stdout).contains("$.claims[0].provenance"));
}

#[test]
fn small_simulation_runs() {
    let out = scratch("sim");
    let st = pspin()
        .args(["simulate", "--set", "n=30", "--set", "horizon=1", "--set", "seeds=0..2", "--set", "portrait_starts=5"])
        .args(["--threads", "2", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(matches!(st.status.code(), Some(0) | Some(2)), "{}", String::from_utf8_lossy(&st.stderr));
    assert!(out.join("seed_uniform_0/trajectory.csv").exists());
    assert!(out.join("seed_uniform_1/trajectory.json").exists());
    let v = pspin().arg("validate").arg(out.join("verdict.json")).output().unwrap();
    assert_eq!(v.status.code(), Some(0));
}
