use std::path::Path;
use std::process::{Command, Output};

use risce_harness::ExperimentConfig;

fn risce(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_risce")).args(args).output().unwrap()
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let mut cfg = ExperimentConfig::desk();
    cfg.samples = 20;
    cfg.calibration_draws = 20;
    cfg.correlation_draws = 20;
    cfg.net.channels = 4;
    cfg.net.post_concat_channels = 4;
    cfg.net.blocks = 1;
    cfg.train.epochs = 1;
    cfg.output_dir = dir.join("out");
    let path = dir.join("c.json");
    std::fs::write(&path, cfg.to_json()).unwrap();
    path
}

#[test]
fn generate_single_link() {
    let dir = tempfile::tempdir().unwrap();
    let c = small_config(dir.path());
    let out = risce(&["generate", "--config", c.to_str().unwrap(), "--link", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("out/link3.risce").exists());
    assert!(!dir.path().join("out/link1.risce").exists());
    assert!(dir.path().join("out/config.json").exists());
}

#[test]
fn overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let c = small_config(dir.path());
    let other = dir.path().join("elsewhere");
    let run = |seed: &str| {
        let out = risce(&["generate", "--config", c.to_str().unwrap(), "--link", "1", "--seed", seed, "--out", other.to_str().unwrap()]);
        assert!(out.status.success());
        std::fs::read(other.join("link1.risce")).unwrap()
    };
    let a = run("5");
    assert_eq!(a, run("5"));
    assert_ne!(a, run("6"));
}

#[test]
fn gradcheck_and_selftest_pass() {
    let out = risce(&["gradcheck"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("net_one_block") && text.contains("max_rel_err"));
    let out = risce(&["selftest"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn bad_invocations_fail_with_diagnostics() {
    let out = risce(&["generate", "--bogus"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    let out = risce(&["generate", "--link", "4"]);
    assert!(!out.status.success());

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("broken.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let out = risce(&["generate", "--config", bad.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("broken.json"));

    let c = small_config(dir.path());
    let out = risce(&["evaluate", "--config", c.to_str().unwrap(), "--link", "2"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("link2.risce") && err.contains("link2_sc_b1.ckpt"), "{err}");
}

#[test]
fn train_requires_a_dataset_then_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let c = small_config(dir.path());
    let c = c.to_str().unwrap();
    let out = risce(&["train", "--config", c, "--link", "3"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("link3.risce"));
    assert!(risce(&["generate", "--config", c, "--link", "3"]).status.success());
    let out = risce(&["train", "--config", c, "--link", "3", "--variant", "sc"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("out/link3_sc_b1.ckpt").exists());
    assert!(dir.path().join("out/link3_sc_b1_history.csv").exists());
}
