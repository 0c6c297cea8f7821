use std::path::Path;
use std::process::{Command, Output};

fn catproj(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_catproj"))
        .args(args)
        .current_dir(dir)
        .env_remove("CATPROJ_THREADS")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn error_record(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.trim()).unwrap_or_else(|_| panic!("stderr is not JSON: {text}"))
}

const SMALL_SWEEP: &str = r#"
n_max = 12
seed = 5
[grid]
c0sq = [0.5, 0.75, 1.0]
alpha_sq = [0.25]
[sweep]
homodyne = false
"#;

const SMALL_CAMPAIGN: &str = r#"
n_max = 16
seed = 11
[spec]
alpha = 0.499
c0sq = 0.5
phi = 1.5707963267948966
[detector]
eta = 0.689
nu = 5.32e-5
visibility = 0.998
[truth]
model = "displaced-onoff"
beta_abs = 0.894
beta_phase = 1.5707963267948966
[campaign]
gammas = [0.2, 0.3]
shots = 20000
"#;

#[test]
fn sweep_writes_versioned_csv_with_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", SMALL_SWEEP);
    let out = catproj(&["fidelity-sweep", "--config", &cfg, "--out", "s.csv"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# catproj-sweep v1.0"));
    assert!(text.contains("# config_hash="));
    assert!(text.contains("# seed=5"));
    assert!(text.contains("# n_max=12"));
    let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert!(data[0].starts_with("c0sq,alpha_sq,phi,f_dp"));
    assert_eq!(data.len(), 4);
    // c0² = 1 row: parity measurement is perfect
    assert!(data[3].split(',').nth(3).unwrap().starts_with("1.00000000000e0"));
}

#[test]
fn empty_grid_is_rejected_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "e.toml",
        "[grid]\nc0sq = []\nalpha_sq = [0.25]\n",
    );
    let out = catproj(&["fidelity-sweep", "--config", &cfg, "--out", "e.csv"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let rec = error_record(&out);
    assert!(rec["error"]["message"].as_str().unwrap().contains("empty"));
    assert!(!dir.path().join("e.csv").exists());
}

#[test]
fn unknown_keys_and_bad_detector_fail_validation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "u.toml", "nmax = 3\n");
    let out = catproj(&["optimize", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_record(&out)["error"]["kind"], "config");

    let cfg = write(
        dir.path(),
        "d.toml",
        "[spec]\nalpha = 0.5\n[detector]\neta = 1.2\nnu = 0.0\nvisibility = 1.0\n",
    );
    let out = catproj(&["optimize", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_is_byte_reproducible_and_seed_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL_CAMPAIGN);
    let run = |extra: &[&str], out: &str| {
        let mut args = vec!["simulate", "--config", &cfg, "--out", out];
        args.extend_from_slice(extra);
        let o = catproj(&args, dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read_to_string(dir.path().join(out)).unwrap()
    };
    let a = run(&[], "a.csv");
    let b = run(&["--threads", "1"], "b.csv");
    let c = run(&["--seed", "12"], "c.csv");
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(a.starts_with("# catproj-clicks v1.0\n"));
    assert!(a.contains("# seed=11") && c.contains("# seed=12"));
}

#[test]
fn tomography_from_click_file_and_ingestion_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL_CAMPAIGN);
    let o = catproj(&["simulate", "--config", &cfg, "--out", "clicks.csv"], dir.path());
    assert!(o.status.success());

    let tomo = format!(
        "n_max = 16\n[spec]\nalpha = 0.499\nc0sq = 0.5\nphi = 1.5707963267948966\n[tomography]\nclicks_file = {:?}\n",
        dir.path().join("clicks.csv")
    );
    let tcfg = write(dir.path(), "t.toml", &tomo);
    let o = catproj(&["tomography", "--config", &tcfg], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let json: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(json["metadata"]["schema"], "catproj-tomography v1.0");
    let f = json["raw"]["fidelity"].as_f64().unwrap();
    assert!(f > 0.6 && f < 1.0, "{f}");

    // counts exceeding shots
    let clicks = std::fs::read_to_string(dir.path().join("clicks.csv")).unwrap();
    let broken = clicks.replacen(",20000\n", ",10\n", 1);
    std::fs::write(dir.path().join("clicks.csv"), broken).unwrap();
    let o = catproj(&["tomography", "--config", &tcfg], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let rec = error_record(&o);
    assert_eq!(rec["error"]["stage"], "ingestion");
    assert_eq!(rec["error"]["kind"], "ingestion");
}

#[test]
fn selftest_passes_and_reports_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = catproj(&["selftest"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("selftest: ok"));

    let cfg = write(dir.path(), "bad.toml", "[detector]\neta = 1.5\nnu = 0.0\nvisibility = 1.0\n");
    let o = catproj(&["selftest", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("FAIL config") && text.contains("efficiency"), "{text}");
}

#[test]
fn env_thread_count_does_not_change_payload() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", SMALL_SWEEP);
    let a = catproj(&["fidelity-sweep", "--config", &cfg], dir.path());
    let b = Command::new(env!("CARGO_BIN_EXE_catproj"))
        .args(["fidelity-sweep", "--config", &cfg])
        .env("CATPROJ_THREADS", "2")
        .output()
        .unwrap();
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
}
