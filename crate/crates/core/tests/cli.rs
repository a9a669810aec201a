//! End-to-end runs of the `fairnav` binary.

use std::path::Path;
use std::process::{Command, Output};

fn fairnav(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fairnav"))
        .args(args)
        .env_remove("FAIRNAV_SEED")
        .output()
        .expect("spawn fairnav")
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

#[test]
fn usage_and_file_errors_exit_nonzero_with_a_message() {
    let out = fairnav(&["eval", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());

    let out = fairnav(&[
        "plot",
        "--trace",
        "/definitely/missing.log",
        "--out",
        "/tmp/never.svg",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.log"));

    let out = fairnav(&["rollout", "--scenario", "/nope", "--trace", "/tmp/t.log"]);
    assert_eq!(
        out.status.code(),
        Some(1),
        "ncf2 rollout without a checkpoint"
    );
}

#[test]
fn single_agent_rollout_plots_one_path() {
    let dir = tempfile::tempdir().unwrap();
    let (s, t, f) = (
        path(dir.path(), "s.txt"),
        path(dir.path(), "t.log"),
        path(dir.path(), "f.svg"),
    );
    let ok = |o: Output| assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    ok(fairnav(&[
        "scenario",
        "--agents",
        "1",
        "--obstacles",
        "0",
        "--seed",
        "4",
        "--out",
        &s,
    ]));
    ok(fairnav(&[
        "rollout",
        "--policy",
        "dwa",
        "--scenario",
        &s,
        "--trace",
        &t,
    ]));
    ok(fairnav(&["plot", "--trace", &t, "--out", &f]));
    let svg = std::fs::read_to_string(&f).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 1);
    assert_eq!(svg.matches("class=\"start\"").count(), 1);
    assert_eq!(svg.matches("class=\"goal\"").count(), 1);
    // plotting the same trace again gives the same bytes
    let g = path(dir.path(), "g.svg");
    ok(fairnav(&["plot", "--trace", &t, "--out", &g]));
    assert_eq!(std::fs::read(&f).unwrap(), std::fs::read(&g).unwrap());
}

#[test]
fn eval_without_successes_reports_null_efficiency_fields() {
    // bare DWA never gets eight robots through 25 obstacles
    let out = fairnav(&[
        "eval",
        "--policy",
        "dwa",
        "--agents",
        "8",
        "--obstacles",
        "25",
        "--episodes",
        "3",
        "--seed",
        "2",
    ]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["n_successes"], 0);
    assert_eq!(v["SR"], 0.0);
    for k in ["MS", "VD", "MAXD", "MEAND"] {
        assert!(v[k].is_null(), "{k} = {}", v[k]);
    }
}

#[test]
fn seed_comes_from_the_environment_when_not_given() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (path(dir.path(), "a.txt"), path(dir.path(), "b.txt"));
    let with_env = Command::new(env!("CARGO_BIN_EXE_fairnav"))
        .args(["scenario", "--agents", "3", "--obstacles", "5", "--out", &a])
        .env("FAIRNAV_SEED", "17")
        .status()
        .unwrap();
    assert!(with_env.success());
    assert!(fairnav(&[
        "scenario",
        "--agents",
        "3",
        "--obstacles",
        "5",
        "--seed",
        "17",
        "--out",
        &b
    ])
    .status
    .success());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn dumped_config_reads_back_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let first = fairnav(&["train", "--dump-config"]);
    assert!(first.status.success());
    let c = path(dir.path(), "c.cfg");
    std::fs::write(&c, &first.stdout).unwrap();
    let second = fairnav(&["train", "--config", &c, "--dump-config"]);
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn tiny_training_run_writes_a_usable_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, bundle, log) = (
        path(dir.path(), "t.cfg"),
        path(dir.path(), "b.bin"),
        path(dir.path(), "train.log"),
    );
    std::fs::write(
        &cfg,
        format!(
            "train.profile = desk\ntrain.phase0_iterations = 60\ntrain.phase1_iterations = 60\n\
             train.phase2_iterations = 60\nsac.critic_warmup = 20\nsac.batch_size = 16\nnet.hidden = 16\n\
             net.key_dim = 8\ntrain.out = {bundle}\ntrain.log = {log}\n"
        ),
    )
    .unwrap();
    let out = fairnav(&["train", "--config", &cfg]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(&log).unwrap();
    assert!(text.starts_with("# iteration counts gradient steps"));
    for stream in ["solitary", "nav", "filter"] {
        assert!(text.contains(&format!(",{stream},")), "no {stream} rows");
    }
    let out = fairnav(&[
        "eval",
        "--ckpt",
        &bundle,
        "--agents",
        "2",
        "--obstacles",
        "5",
        "--episodes",
        "2",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn selftest_passes() {
    let out = fairnav(&["selftest"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}");
    assert!(text.lines().all(|l| l.starts_with("PASS")));
}
