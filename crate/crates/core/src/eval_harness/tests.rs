use super::*;
use crate::rigid_body::ArticulatedModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn robot() -> Arc<Robot> {
    Arc::new(Robot::new(ArticulatedModel::default_quadruped(), &EnvConfig::default()).unwrap())
}

/// Every foot on the ground for one second.
fn stand_task() -> Arc<MotionTask> {
    let text = r#"
name = "stand"
duration = 1.0
[plan]
kind = "intervals"
air = [[], [], [], []]
[swing]
mode = "flip_tuck"
mid = [0.0, 0.0, -0.2]
end = [0.0, 0.0, -0.3]
[[reward]]
name = "r_p"
sign = "neg"
form = "exp"
quantity = "base_position"
target = [0.0, 0.0, 0.28]
a = 0.1
b = 1.0
"#;
    Arc::new(crate::tasks::parse_task(text, "stand.toml").unwrap())
}

#[test]
fn converged_iteration_examples() {
    assert_eq!(converged_iteration(&[3.0; 50], 10), Some(0));
    let mut step = vec![0.0; 30];
    step[12..].fill(1.0);
    assert_eq!(converged_iteration(&step, 1), Some(12));
    assert_eq!(converged_iteration(&[1.0; 5], 5), None);
}

#[test]
fn converged_iteration_on_exponential_curve() {
    // smoothed(i) = 1 − C e^{−i/τ} with C = (1/w) Σ_{k<w} e^{k/τ} once the window is full
    for (tau, w) in [(40.0, 10usize), (150.0, 100), (300.0, 50)] {
        let n = 3000;
        let f: Vec<f64> = (0..n).map(|i| 1.0 - (-(i as f64) / tau).exp()).collect();
        let c = (0..w).map(|k| (k as f64 / tau).exp()).sum::<f64>() / w as f64;
        let final_mean = 1.0 - c * (-((n - 1) as f64) / tau).exp();
        let crossing = -tau * ((1.0 - 0.99 * final_mean) / c).ln();
        let got = converged_iteration(&f, w).unwrap() as f64;
        assert!((got - crossing.ceil()).abs() <= 1.0, "τ {tau}: {got} vs {crossing}");
    }
}

#[test]
fn converged_iteration_is_scale_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let f: Vec<f64> = (0..400).map(|i| (i as f64 / 80.0).tanh() + rng.random_range(-0.05..0.05)).collect();
    let base = converged_iteration(&f, 20);
    for c in [0.01, 3.0, 1e4] {
        let g: Vec<f64> = f.iter().map(|x| x * c).collect();
        assert_eq!(converged_iteration(&g, 20), base);
    }
}

#[test]
fn normalized_return_examples() {
    let runs = vec![("ours".to_string(), vec![9.0, 11.0]), ("dt".to_string(), vec![4.0, 6.0])];
    let out = normalized_return(&runs).unwrap();
    assert_eq!(out[0].mean, 1.0);
    assert_eq!(out[1].mean, 0.5);
    assert_eq!((out[1].min, out[1].max), (0.4, 0.6));
    assert!(normalized_return(&[("x".into(), vec![])]).is_err());
}

#[test]
fn balance_controller_holds_the_full_robot() {
    let task = stand_task();
    let mut env = MotionEnv::new(task, robot(), EnvConfig::default(), Dynamics::FullBody { lambda: 1.0 }, stream(0, "e", 0))
        .unwrap();
    let out = run_episode(&mut env, &BalanceController::default()).unwrap();
    assert!(out.success, "{out:?}");
    assert!((out.final_height - 0.2474).abs() < 0.02, "{out:?}");
}

#[test]
fn robustness_grid_properties() {
    let task = stand_task();
    let r = robot();
    let ctrl = BalanceController::default();
    let spec =
        GridSpec { force_norms: vec![0.0, 20.0, 40.0, 1200.0], torque_norms: vec![0.0, 5.0, 10.0, 200.0], n_directions: 16 };
    let g = robustness_grid(&ctrl, &task, &r, &spec, 4).unwrap();
    assert_eq!(g.success[0][0], nominal_success(&ctrl, &task, &r, 16, 4).unwrap());
    assert_eq!(g.success[0][0], 1.0);
    assert!(g.success[2][2] < 1.0, "{g:?}");
    // ten times the body weight together with a large torque always topples it;
    // the force alone can point straight down and only press the feet harder
    assert_eq!(g.success[3][3], 0.0);
    assert!(g.max_increase() <= 0.05, "{g:?}");
    assert_eq!(g, robustness_grid(&ctrl, &task, &r, &spec, 4).unwrap());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("grid.csv");
    g.write_csv(&path).unwrap();
    assert_eq!(RobustnessGrid::read_csv(&path, 16).unwrap(), g);
    g.write_long_csv(&dir.path().join("long.csv")).unwrap();
    let long = std::fs::read_to_string(dir.path().join("long.csv")).unwrap();
    assert_eq!(long.lines().count(), 1 + 16);
}

#[test]
fn trajectory_log_replays_and_round_trips() {
    let task = Arc::new(MotionTask::builtin("backflip"));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("traj.csv");
    let ctrl = BalanceController::default();
    let log = export_trajectory(&ctrl, task.clone(), robot(), Dynamics::Srb, 1, &path).unwrap();
    let last = log.rows.last().unwrap();
    if !last.fault {
        assert_eq!(log.rows.len(), 200 + 1);
    }
    for (row, re) in log.rows[1..].iter().zip(replay_rewards(&task, &log)) {
        assert!((row.reward - re.total).abs() < 1e-9);
        for (a, b) in row.terms.iter().zip(&re.values) {
            assert!((a - b).abs() < 1e-9);
        }
    }
    let back = TrajectoryLog::read_csv(&path, "backflip").unwrap();
    assert_eq!(back.rows.len(), log.rows.len());
    for (a, b) in back.rows.iter().zip(&log.rows) {
        assert_eq!(TrajectoryLog::record(a), TrajectoryLog::record(b));
    }
    log.write_long_csv(&dir.path().join("long.csv")).unwrap();
}

#[test]
fn unwrapped_pitch_passes_half_turn() {
    let mut prev = None;
    let mut last = Vec3::zeros();
    for k in 0..=40 {
        let r = Rot3::from_rpy(0.0, -(k as f64) * 0.15, 0.0);
        last = unwrapped_rpy(&r, prev);
        prev = Some(last);
    }
    assert!((last.y + 6.0).abs() < 1e-9, "{last:?}");
}

