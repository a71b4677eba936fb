use std::process::Command;

fn plexus() -> Command {
    Command::new(env!("CARGO_BIN_EXE_plexus"))
}

fn smoke() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.toml")
}

#[test]
fn run_sample_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = plexus()
        .args(["run"])
        .arg(smoke())
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.path().join("smoke/rep0/accuracy.csv").exists());

    let out = plexus()
        .arg("sample")
        .arg(smoke())
        .args(["--round", "3"])
        .output()
        .unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("round 3: "));
    assert_eq!(text.lines().next().unwrap().split(' ').count(), 2 + 5);

    let report = dir.path().join("report");
    let out = plexus()
        .arg("report")
        .arg(dir.path())
        .arg("--out")
        .arg(&report)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(report.join("report.csv").exists() && report.join("curves.csv").exists());
}

#[test]
fn traces_gen_feeds_a_file_config() {
    let dir = tempfile::tempdir().unwrap();
    let traces = dir.path().join("traces");
    let out = plexus()
        .args(["traces-gen", "--nodes", "12", "--cities", "4", "--out"])
        .arg(&traces)
        .output()
        .unwrap();
    assert!(out.status.success());
    let cfg = dir.path().join("c.toml");
    std::fs::write(
        &cfg,
        "n = 12\ns = 4\n[algorithm]\nkind = \"fl\"\n[stop]\nmax_rounds = 3\n[dataset]\nkind = \"synthetic\"\nn_samples = 400\nd_in = 3\nclasses = 2\n[traces]\nkind = \"files\"\nlatency = \"traces/latency.csv\"\nprofiles = \"traces/profiles.csv\"\n",
    )
    .unwrap();
    let out = plexus()
        .arg("run")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn errors_are_prefixed_and_fail() {
    let out = plexus()
        .args(["run", "does-not-exist.toml"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[config]: config not found"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "n = 5\ns = 9\n[algorithm]\nkind = \"plexus\"\n").unwrap();
    let out = plexus()
        .arg("run")
        .arg(&bad)
        .arg("--validate")
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[config]"));
}
