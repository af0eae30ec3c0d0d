use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::env::{Dynamics, EnvConfig, MotionEnv, Robot};
use crate::nets::{gaussian_log_prob, Adam, GaussianPolicy, ValueNet};
use crate::rigid_body::ArticulatedModel;
use crate::rng::stream;
use crate::tasks::MotionTask;

fn robot() -> Arc<Robot> {
    Arc::new(Robot::new(ArticulatedModel::default_quadruped(), &EnvConfig::default()).unwrap())
}

fn batch(task: &str, n: usize, dynamics: Dynamics, seed: u64) -> EnvBatch {
    let task = Arc::new(MotionTask::builtin(task));
    let r = robot();
    let envs = (0..n)
        .map(|i| MotionEnv::new(task.clone(), r.clone(), EnvConfig::default(), dynamics, stream(seed, "env", i as u64)))
        .collect::<crate::Result<Vec<_>>>()
        .unwrap();
    EnvBatch::new(envs).unwrap()
}

fn nets(obs_dim: usize, seed: u64) -> (GaussianPolicy, ValueNet) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (GaussianPolicy::new(obs_dim, 24, &[32, 16], &mut rng), ValueNet::new(obs_dim, &[32, 16], &mut rng))
}

#[test]
fn surrogate_without_policy_change_is_mean_advantage() {
    let adv = [0.5, -1.0, 2.0, 0.25];
    assert_eq!(clipped_surrogate(&[1.0; 4], &adv, 0.2), -(0.5 - 1.0 + 2.0 + 0.25) / 4.0);
    // clipping caps the gain from a large ratio
    assert_eq!(clipped_surrogate(&[2.0], &[1.0], 0.2), -1.2);
}

fn random_minibatch(policy: &GaussianPolicy, rng: &mut ChaCha8Rng, n: usize, zero_adv: bool) -> Minibatch {
    let od = policy.obs_dim();
    let obs = DMatrix::from_fn(od, n, |_, _| rng.random_range(-1.0..1.0));
    let actions = DMatrix::from_fn(policy.act_dim(), n, |_, _| rng.random_range(-1.0..1.0));
    let old_log_probs = (0..n)
        .map(|k| {
            let mu = policy.mean.forward(obs.column(k).as_slice()).unwrap();
            gaussian_log_prob(&mu, &policy.log_std, actions.column(k).as_slice()) + rng.random_range(-0.05..0.05)
        })
        .collect();
    Minibatch {
        obs,
        actions,
        old_log_probs,
        advantages: (0..n).map(|_| if zero_adv { 0.0 } else { rng.random_range(-1.0..1.0) }).collect(),
        returns: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
    }
}

#[test]
fn zero_advantages_give_no_policy_gradient() {
    let (policy, value) = nets(5, 1);
    let mb = random_minibatch(&policy, &mut ChaCha8Rng::seed_from_u64(2), 16, true);
    let cfg = TrainConfig { entropy_coef: 0.0, ..Default::default() };
    let (_, _, grad) = ppo_loss_grad(&policy, &value, &mb, &cfg).unwrap();
    let n_policy = policy.mean.params.len() + policy.log_std.len();
    assert!(grad[..n_policy].iter().all(|g| *g == 0.0));
    assert!(grad[n_policy..].iter().any(|g| *g != 0.0));
}

#[test]
fn loss_gradient_matches_central_differences() {
    let (mut policy, mut value) = nets(4, 3);
    policy.log_std.iter_mut().enumerate().for_each(|(i, l)| *l += 0.01 * i as f64);
    let mb = random_minibatch(&policy, &mut ChaCha8Rng::seed_from_u64(4), 12, false);
    let cfg = TrainConfig::default();
    let (_, _, grad) = ppo_loss_grad(&policy, &value, &mb, &cfg).unwrap();
    let (na, nb) = (policy.mean.params.len(), policy.log_std.len());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut picks: Vec<usize> = (0..30).map(|_| rng.random_range(0..grad.len())).collect();
    picks.extend([na + 2, na + nb - 1, na + nb + 3]);
    for idx in picks {
        let mut eval = |delta: f64| {
            let slot = if idx < na {
                &mut policy.mean.params[idx]
            } else if idx < na + nb {
                &mut policy.log_std[idx - na]
            } else {
                &mut value.net.params[idx - na - nb]
            };
            *slot += delta;
            let l = ppo_loss_grad(&policy, &value, &mb, &cfg).unwrap().0;
            let slot = if idx < na {
                &mut policy.mean.params[idx]
            } else if idx < na + nb {
                &mut policy.log_std[idx - na]
            } else {
                &mut value.net.params[idx - na - nb]
            };
            *slot -= delta;
            l
        };
        let h = 1e-6;
        let fd = (eval(h) - eval(-h)) / (2.0 * h);
        let g = grad[idx];
        assert!((fd - g).abs() <= 1e-4 * g.abs().max(1e-3), "param {idx}: analytic {g}, numeric {fd}");
    }
}

/// One-step episodes of a bandit: positive actions pay 1, others 0.
fn bandit_buffer(policy: &GaussianPolicy, value: &ValueNet, rng: &mut ChaCha8Rng, n: usize) -> RolloutBuffer {
    let mut buf = RolloutBuffer::new(1, n, 1, 1, 0);
    for _ in 0..n {
        let (a, lp) = policy.sample(&[1.0], rng).unwrap();
        buf.obs.push(1.0);
        buf.actions.push(a[0]);
        buf.log_probs.push(lp);
        buf.rewards.push(if a[0] > 0.0 { 1.0 } else { 0.0 });
        buf.values.push(value.value(&[1.0]).unwrap());
        buf.dones.push(true);
    }
    buf.last_values = vec![0.0];
    buf
}

/// `mean / std` of the action; P(action > 0) grows with it.
fn better_arm_score(policy: &GaussianPolicy) -> f64 {
    policy.mean_action(&[1.0]).unwrap()[0] / policy.log_std[0].exp()
}

#[test]
fn bandit_update_prefers_better_arm() {
    let cfg = TrainConfig { learning_rate: 1e-3, ..Default::default() };
    let mut passed = 0;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut policy = GaussianPolicy::new(1, 1, &[8], &mut rng);
        let mut value = ValueNet::new(1, &[8], &mut rng);
        let buf = bandit_buffer(&policy, &value, &mut rng, 256);
        let before = better_arm_score(&policy);
        let mut opt = Adam::new(param_count(&policy, &value), cfg.learning_rate);
        ppo_update(&buf, &mut policy, &mut value, &mut opt, &cfg, &mut rng).unwrap();
        passed += (better_arm_score(&policy) > before) as usize;
    }
    assert!(passed >= 95, "{passed} of 100 seeds improved");
}

#[test]
fn zero_learning_rate_leaves_parameters_bitwise() {
    let mut b = batch("backflip", 2, Dynamics::Srb, 0);
    let (mut policy, mut value) = nets(27, 7);
    let (buf, _) = collect_rollouts(&mut b, &policy, &value, None, 20, false).unwrap();
    let (p0, v0) = (policy.clone(), value.clone());
    let cfg = TrainConfig { learning_rate: 0.0, ..Default::default() };
    let mut opt = Adam::new(param_count(&policy, &value), 0.0);
    let stats = ppo_update(&buf, &mut policy, &mut value, &mut opt, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert!(stats.is_finite());
    assert_eq!(policy, p0);
    assert_eq!(value, v0);
}

#[test]
fn default_rollout_size() {
    let cfg = TrainConfig::default();
    assert_eq!(cfg.steps_per_rollout(), 400);
    assert_eq!(cfg.n_envs * cfg.steps_per_rollout(), 40_000);
    assert_eq!(RolloutBuffer::new(cfg.n_envs, cfg.steps_per_rollout(), 30, 24, 0).capacity(), 40_000);
}

#[test]
fn rollouts_are_reproducible() {
    let run = |deterministic: bool, threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let mut b = batch("trot", 3, Dynamics::Srb, 9);
        let (policy, value) = nets(30, 1);
        pool.install(|| collect_rollouts(&mut b, &policy, &value, None, 30, deterministic)).unwrap().0
    };
    assert_eq!(run(true, 1), run(true, 1));
    // worker count never changes stochastic rollouts
    assert_eq!(run(false, 1), run(false, 3));
}

#[test]
fn done_flags_follow_episode_accounting() {
    for dynamics in [Dynamics::Srb, Dynamics::FullBody { lambda: 1.0 }] {
        let mut b = batch("backflip", 3, dynamics, 2);
        let (policy, value) = nets(27, 4);
        let steps = if dynamics == Dynamics::Srb { 450 } else { 230 };
        let (buf, stats) = collect_rollouts(&mut b, &policy, &value, None, steps, false).unwrap();
        let mut since_reset = [0usize; 3];
        let mut early = 0;
        for t in 0..steps {
            for e in 0..3 {
                since_reset[e] += 1;
                let done = buf.dones[t * 3 + e];
                assert!(since_reset[e] <= 200);
                if since_reset[e] == 200 {
                    assert!(done, "episode must end at the plan duration");
                }
                if done {
                    early += (since_reset[e] < 200) as usize;
                    since_reset[e] = 0;
                }
            }
        }
        assert_eq!(early, stats.faults, "{dynamics:?}");
    }
}

#[test]
fn estimator_replaces_privileged_entries() {
    let mut b = batch("trot", 2, Dynamics::FullBody { lambda: 0.5 }, 0);
    let task = MotionTask::builtin("trot");
    let (policy, value) = nets(30, 1);
    let est = crate::nets::Estimator::new(crate::env::estimator_input_dim(&task), &mut ChaCha8Rng::seed_from_u64(0));
    let (buf, _) = collect_rollouts(&mut b, &policy, &value, Some(&est), 5, true).unwrap();
    assert_eq!(buf.history_dim, crate::env::estimator_input_dim(&task));
    assert_eq!(buf.histories.len(), 10 * buf.history_dim);
    // contact entries are thresholded estimates, velocity labels stay privileged
    let contact = &buf.obs[21..25];
    assert!(contact.iter().all(|c| *c == 0.0 || *c == 1.0));
    assert_eq!(buf.vel_labels.len(), 30);

    let mut est2 = est.clone();
    let mut opt = Adam::new(est2.net.params.len(), 1e-3);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let first = estimator_epoch(&buf, &mut est2, &mut opt, 2, 1.0, &mut rng).unwrap().unwrap();
    let mut last = first;
    for _ in 0..30 {
        last = estimator_epoch(&buf, &mut est2, &mut opt, 2, 1.0, &mut rng).unwrap().unwrap();
    }
    assert!(last < first, "{last} !< {first}");
}

#[test]
fn schedules_per_baseline() {
    let ours = TrainConfig { stage: Stage::Homotopy, baseline: Baseline::Ours, ..Default::default() };
    assert_eq!(schedule(&ours, 0).1, Dynamics::FullBody { lambda: 0.01 });
    assert_eq!(schedule(&ours, 450), (Stage::Homotopy, Dynamics::FullBody { lambda: 0.505 }));
    assert_eq!(schedule(&ours, 1200), (Stage::Fullbody, Dynamics::FullBody { lambda: 1.0 }));
    assert_eq!(ours.total_iterations(), 1200);
    let dt = TrainConfig { baseline: Baseline::DirectTransfer, ..ours.clone() };
    assert_eq!(schedule(&dt, 0).1, Dynamics::FullBody { lambda: 1.0 });
    let pre = TrainConfig::default();
    assert_eq!(schedule(&pre, 10).1, Dynamics::Srb);
    assert_eq!("direct".parse::<Baseline>().unwrap(), Baseline::DirectTransfer);
    assert!(TrainConfig { baseline: Baseline::ImitationTransfer, ..pre }.validate().is_err());
}

fn tiny(stage: Stage, baseline: Baseline) -> TrainConfig {
    TrainConfig {
        n_envs: 2,
        rollout_seconds: 0.1,
        epochs: 2,
        minibatches: 2,
        pretrain_iterations: 2,
        homotopy_iterations: 2,
        finetune_iterations: 1,
        checkpoint_every: 1,
        stage,
        baseline,
        seed: 3,
        ..Default::default()
    }
}

#[test]
fn transfer_requires_checkpoint_except_vanilla() {
    let task = Arc::new(MotionTask::builtin("yawspin"));
    let e = Trainer::new(tiny(Stage::Homotopy, Baseline::Ours), task.clone(), robot(), None, 1).err().unwrap();
    assert!(e.to_string().contains("checkpoint is required"), "{e}");
    assert!(Trainer::new(tiny(Stage::Homotopy, Baseline::Vanilla), task.clone(), robot(), None, 1).is_ok());

    let trot = Arc::new(MotionTask::builtin("trot"));
    let ck = Trainer::new(tiny(Stage::Srb, Baseline::Ours), trot, robot(), None, 1).unwrap().checkpoint();
    let e = Trainer::new(tiny(Stage::Homotopy, Baseline::Ours), task, robot(), Some(ck), 1).err().unwrap();
    assert!(e.to_string().contains("observation size: checkpoint 30, task 27"), "{e}");
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let task = Arc::new(MotionTask::builtin("backflip"));
    let mut tr = Trainer::new(tiny(Stage::Srb, Baseline::Ours), task.clone(), robot(), None, 1).unwrap();
    tr.step().unwrap();
    let ck = tr.checkpoint();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.ckpt");
    ck.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(ck.to_bytes(), back.to_bytes());
    assert_eq!(back.policy, ck.policy);
    assert_eq!(back.optimizer, ck.optimizer);
    assert_eq!(back.rng, ck.rng);

    let actions = |p: &GaussianPolicy| {
        let mut b = batch("backflip", 2, Dynamics::Srb, 5);
        let value = ValueNet::new(27, &[4], &mut ChaCha8Rng::seed_from_u64(0));
        collect_rollouts(&mut b, p, &value, None, 40, false).unwrap().0.actions
    };
    assert_eq!(actions(&ck.policy), actions(&back.policy));

    let bytes = ck.to_bytes();
    assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    assert!(Checkpoint::from_bytes(b"nope").is_err());
    let mut bumped = bytes.clone();
    bumped[4] = 9;
    assert!(Checkpoint::from_bytes(&bumped).unwrap_err().to_string().contains("version 9"));
}

#[test]
fn training_run_writes_reproducible_outputs() {
    let task = Arc::new(MotionTask::builtin("yawspin"));
    let run = |dir: &std::path::Path, workers| {
        let mut tr = Trainer::new(tiny(Stage::Srb, Baseline::Ours), task.clone(), robot(), None, workers).unwrap();
        tr.run(Some(dir), |_| {}).unwrap()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let rows = run(a.path(), 1);
    run(b.path(), 2);
    let read = |d: &std::path::Path| std::fs::read(d.join("metrics.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.lambda.is_nan() && r.estimator_loss.is_nan()));
    for name in ["iter_00001.ckpt", "iter_00002.ckpt", "final.ckpt"] {
        assert!(a.path().join("checkpoints").join(name).exists(), "{name}");
    }

    let (terms, back) = read_metrics(&a.path().join("metrics.csv")).unwrap();
    assert_eq!(terms.len(), task.rewards.terms.len());
    // NaN-free fields compare directly; NaN columns compare by bits
    for (x, y) in rows.iter().zip(&back) {
        assert_eq!(x.record(), y.record());
    }

    // transfer from the pretrained checkpoint crosses the stage boundary
    let ck = Checkpoint::load(&a.path().join("checkpoints/final.ckpt")).unwrap();
    let mut tr = Trainer::new(tiny(Stage::Homotopy, Baseline::Ours), task.clone(), robot(), Some(ck), 1).unwrap();
    let c = tempfile::tempdir().unwrap();
    let rows = tr.run(Some(c.path()), |_| {}).unwrap();
    let stages: Vec<Stage> = rows.iter().map(|r| r.stage).collect();
    assert_eq!(stages, [Stage::Homotopy, Stage::Homotopy, Stage::Fullbody]);
    assert_eq!(rows[0].lambda, 0.01);
    assert!(rows.iter().all(|r| r.estimator_loss.is_finite()));
    assert!(c.path().join("checkpoints/iter_00002.ckpt").exists());
}
