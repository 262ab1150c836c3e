use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
algorithm = "maddpg-stf"
episodes = 3
eval_episodes = 2

[env]
devices = 3
steps = 3
subchannels = 2
server_units = 2

[learner]
client_hidden = [8]
master_hidden = [16]
batch_size = 4
replay_capacity = 50
"#;

fn ccm_mec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ccm-mec")).args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn run_aggregate_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    std::fs::write(&cfg, CONFIG).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (out, seed) in [(&a, "1"), (&b, "2")] {
        let o = ccm_mec(&[
            "run",
            "--config",
            p(&cfg),
            "--seed",
            seed,
            "--out",
            p(out),
            "--dump-trajectories",
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let agg = dir.path().join("agg.csv");
    let o = ccm_mec(&["aggregate", p(&a), p(&b), "--out", p(&agg)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&agg).unwrap();
    assert!(text.starts_with("episode,runs,mean_eval_reward_mean,mean_eval_reward_ci95,"));
    assert_eq!(text.lines().count(), 4);

    let o = ccm_mec(&["replay", p(&a)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("0 mismatches"));

    // A run with another algorithm cannot be aggregated with these.
    let c = dir.path().join("c");
    let o = ccm_mec(&[
        "run",
        "--config",
        p(&cfg),
        "--algorithm",
        "random-master",
        "--out",
        p(&c),
    ]);
    assert!(o.status.success());
    let o = ccm_mec(&["aggregate", p(&a), p(&c), "--out", p(&agg)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn exit_codes_for_bad_input_and_truncation() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "episodes = 0\n").unwrap();
    let o = ccm_mec(&["run", "--config", p(&bad), "--out", p(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(2));

    std::fs::write(&bad, "bogus_key = 1\n").unwrap();
    let o = ccm_mec(&["run", "--config", p(&bad), "--out", p(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(2));

    let o = ccm_mec(&["run", "--algorithm", "nope", "--out", p(&dir.path().join("x"))]);
    assert!(!o.status.success());

    let cfg = dir.path().join("small.toml");
    std::fs::write(&cfg, CONFIG).unwrap();
    let o = ccm_mec(&[
        "run",
        "--config",
        p(&cfg),
        "--episodes",
        "40",
        "--budget-minutes",
        "0.000000001",
        "--out",
        p(&dir.path().join("t")),
    ]);
    assert_eq!(o.status.code(), Some(3));

    let o = ccm_mec(&["replay", p(&dir.path().join("missing"))]);
    assert_eq!(o.status.code(), Some(1));
}
