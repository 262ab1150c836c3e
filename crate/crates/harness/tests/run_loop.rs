use std::fs;
use std::path::Path;

use mec_harness::metrics::{read_metrics, EVAL_FILE, METRICS_FILE, TIMING_FILE};
use mec_harness::replay::replay_run;
use mec_harness::run::{RunSummary, CHECKPOINT_FILE, METADATA_FILE, SUMMARY_FILE};
use mec_harness::trajectory::{read_records, TRAJECTORY_FILE};
use mec_harness::{run, HarnessError, RunConfig, RunStatus};
use mec_learn::{Algorithm, LearnerConfig};

fn small(algorithm: Algorithm, seed: u64) -> RunConfig {
    let mut cfg = RunConfig::desk();
    cfg.algorithm = algorithm;
    cfg.seed = seed;
    cfg.episodes = 4;
    cfg.eval_episodes = 2;
    cfg.env.steps = 3;
    cfg.learner = LearnerConfig {
        client_hidden: vec![8],
        master_hidden: vec![16],
        batch_size: 4,
        replay_capacity: 50,
        ..LearnerConfig::default()
    };
    cfg
}

fn read_summary(dir: &Path) -> RunSummary {
    serde_json::from_str(&fs::read_to_string(dir.join(SUMMARY_FILE)).unwrap()).unwrap()
}

#[test]
fn smallest_loop_writes_one_row_and_every_file() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(Algorithm::Ccm, 1);
    cfg.episodes = 1;
    cfg.eval_episodes = 1;
    cfg.env.devices = 1;
    cfg.env.steps = 1;
    cfg.env.subchannels = 1;
    cfg.env.server_units = 1;
    let summary = run(&cfg, dir.path()).unwrap();
    assert_eq!(summary.status, RunStatus::Completed);
    assert_eq!(summary.episodes_completed, 1);
    assert_eq!(summary.training_calls, 0);
    for f in [METRICS_FILE, TIMING_FILE, EVAL_FILE, METADATA_FILE, SUMMARY_FILE] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    assert!(!dir.path().join(TRAJECTORY_FILE).exists());
    let rows = read_metrics(&dir.path().join(METRICS_FILE)).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].episode, 0);
    assert_eq!(rows[0].td_error, None);
    assert_eq!(rows[0].epsilon, 1.0);
    assert!(rows[0].mean_eval_reward.is_finite());
    assert_eq!(read_summary(dir.path()), summary);
}

#[test]
fn every_algorithm_runs_and_trains() {
    for alg in Algorithm::ALL {
        let dir = tempfile::tempdir().unwrap();
        let summary = run(&small(alg, 3), dir.path()).unwrap();
        assert_eq!(summary.status, RunStatus::Completed);
        // 3 steps per episode and a batch of 4: training starts in episode 1.
        assert_eq!(summary.training_calls, 3, "{alg}");
        let rows = read_metrics(&dir.path().join(METRICS_FILE)).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows[0].td_error.is_none() && rows[1..].iter().all(|r| r.td_error.is_some()));
        assert!(rows.windows(2).all(|w| w[0].epsilon >= w[1].epsilon));
    }
}

#[test]
fn eval_episodes_do_not_depend_on_the_run_seed() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for (dir, seed) in [(&a, 1), (&b, 2)] {
        let mut cfg = small(Algorithm::MaddpgDsf, seed);
        cfg.dump_trajectories = true;
        run(&cfg, dir.path()).unwrap();
    }
    let ra = read_records(&a.path().join(TRAJECTORY_FILE)).unwrap();
    let rb = read_records(&b.path().join(TRAJECTORY_FILE)).unwrap();
    assert_eq!(ra.len(), rb.len());
    for (x, y) in ra.iter().zip(&rb) {
        assert_eq!((x.episode, x.eval_index, x.step), (y.episode, y.eval_index, y.step));
        assert_eq!(x.tasks, y.tasks);
        assert_eq!(x.devices, y.devices);
    }
    // Different learners, same evaluation problems.
    assert!(ra.iter().zip(&rb).any(|(x, y)| x.actions != y.actions));
}

#[test]
fn replay_rescoring_and_tamper_detection() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(Algorithm::Maddpg, 5);
    cfg.dump_trajectories = true;
    run(&cfg, dir.path()).unwrap();
    let report = replay_run(dir.path()).unwrap();
    assert!(report.is_clean(), "{:?}", report.mismatches);
    assert_eq!(report.episodes, 4);
    assert_eq!(report.steps, 4 * 2 * 3);

    // A wrong pct_expired in metrics.csv is caught.
    let metrics = dir.path().join(METRICS_FILE);
    let original = fs::read_to_string(&metrics).unwrap();
    let mut lines: Vec<String> = original.lines().map(String::from).collect();
    let mut cells: Vec<String> = lines[1].split(',').map(String::from).collect();
    cells[2] = format!("{}", cells[2].parse::<f64>().unwrap() + 1.0);
    lines[1] = cells.join(",");
    fs::write(&metrics, lines.join("\n") + "\n").unwrap();
    assert!(!replay_run(dir.path()).unwrap().is_clean());
    fs::write(&metrics, original).unwrap();

    // So is a wrong reward in the dump.
    let traj = dir.path().join(TRAJECTORY_FILE);
    let mut records = read_records(&traj).unwrap();
    records[3].reward *= 1.001;
    let text: String = records
        .iter()
        .map(|r| serde_json::to_string(r).unwrap() + "\n")
        .collect();
    fs::write(&traj, text).unwrap();
    let report = replay_run(dir.path()).unwrap();
    assert_eq!(report.mismatches.len(), 1, "{:?}", report.mismatches);
}

#[test]
fn budget_truncates_between_episodes() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(Algorithm::Ccm, 1);
    cfg.episodes = 50;
    cfg.budget_minutes = Some(1e-9);
    let summary = run(&cfg, dir.path()).unwrap();
    assert_eq!(summary.status, RunStatus::Truncated);
    assert_eq!(summary.status.exit_code(), 3);
    assert_eq!(summary.episodes_completed, 1);
    assert_eq!(read_metrics(&dir.path().join(METRICS_FILE)).unwrap().len(), 1);
    assert_eq!(read_summary(dir.path()).status, RunStatus::Truncated);
}

#[test]
fn non_finite_loss_is_reported_as_divergence() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(Algorithm::Ccm, 1);
    cfg.learner.reward_scale = 1e300;
    let err = run(&cfg, dir.path()).unwrap_err();
    assert!(matches!(err, HarnessError::Divergence { episode: 1, .. }), "{err}");
    assert_eq!(err.exit_code(), 4);
    let summary = read_summary(dir.path());
    assert_eq!(summary.status, RunStatus::Diverged);
    assert_eq!(summary.episodes_completed, 1);
    assert!(summary.diagnostic.unwrap().contains("episode 1"));
}

#[test]
fn checkpoints_are_written_on_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(Algorithm::MaddpgStf, 1);
    cfg.checkpoint_every = 2;
    run(&cfg, dir.path()).unwrap();
    let learner = mec_learn::load_learner(Algorithm::MaddpgStf, &dir.path().join(CHECKPOINT_FILE)).unwrap();
    assert_eq!(learner.memory_len(), 12);
}

#[test]
fn invalid_configs_are_rejected_before_writing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let mut cfg = small(Algorithm::Ccm, 1);
    cfg.epsilon_min = 0.5;
    cfg.epsilon_max = 0.1;
    let err = run(&cfg, &out).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(!out.exists());
}
