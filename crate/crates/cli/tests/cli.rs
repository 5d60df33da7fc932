use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
[params]
m = 2.5
c = 4.0
pin_mass = 20.0
delta = [0.1, 0.05]
half_length = [8.0, 12.0]

[flow]
cos = [0.3]
sin = [0.5]

[grid]
nx = [64, 96]
ny = 8
"#;

fn pmewaves(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pmewaves")).args(args).output().expect("spawn pmewaves")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn continue_then_resume_from_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL);
    let out = dir.path().join("run");
    let out_s = out.display().to_string();
    let o = pmewaves(&["continue", "--config", &cfg, "--out", &out_s, "--stop-after", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("stopped after 3"));
    let ck = out.join("checkpoints/stage_02.json").display().to_string();
    let o = pmewaves(&["continue", "--config", &cfg, "--out", &out_s, "--resume", &ck]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("report.json").exists());
    let o = pmewaves(&["analyze", "-c", &cfg, "-o", &out_s]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn invalid_configs_fail_with_a_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "[params]\nc = 4.0\nm = 1.0\n");
    let o = pmewaves(&["solve", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3") && err.contains("m = 1 is excluded"), "{err}");

    let cfg = write(dir.path(), "typo.toml", "[params]\nm = 2.5\nc = 4.0\n[flow]\ncosine = [0.1]\n");
    let o = pmewaves(&["solve", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 5"));

    let o = pmewaves(&["solve", "--config", "/nonexistent/x.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/x.toml"));
}

#[test]
fn solve_and_planar_succeed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL);
    for cmd in ["planar", "solve"] {
        let out = dir.path().join(cmd).display().to_string();
        let o = pmewaves(&[cmd, "-c", &cfg, "-o", &out]);
        assert_eq!(o.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(Path::new(&out).join("manifest.json").exists());
    }
}
