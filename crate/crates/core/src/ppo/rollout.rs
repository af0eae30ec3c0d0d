use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::env::{substitute_estimate, MotionEnv, StepResult, ACTION_DIM};
use crate::error::{Error, Result};
use crate::nets::{gaussian_log_prob, Estimator, GaussianPolicy, ValueNet};

use super::gae::compute_gae;

/// Transitions of every environment, time-major: entry `t * n_envs + e`
/// belongs to environment `e` at step `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBuffer {
    pub n_envs: usize,
    pub steps: usize,
    pub obs_dim: usize,
    pub act_dim: usize,
    /// Flattened estimator input per transition, 0 when no history is kept.
    pub history_dim: usize,
    pub obs: Vec<f64>,
    pub actions: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    /// Privileged base-frame velocity (3 per transition).
    pub vel_labels: Vec<f64>,
    /// Privileged contacts as 0/1 (4 per transition).
    pub contact_labels: Vec<f64>,
    pub histories: Vec<f64>,
    /// Value of the observation following the last step, per environment.
    pub last_values: Vec<f64>,
}

impl RolloutBuffer {
    pub fn new(n_envs: usize, steps: usize, obs_dim: usize, act_dim: usize, history_dim: usize) -> Self {
        let n = n_envs * steps;
        RolloutBuffer {
            n_envs,
            steps,
            obs_dim,
            act_dim,
            history_dim,
            obs: Vec::with_capacity(n * obs_dim),
            actions: Vec::with_capacity(n * act_dim),
            log_probs: Vec::with_capacity(n),
            rewards: Vec::with_capacity(n),
            values: Vec::with_capacity(n),
            dones: Vec::with_capacity(n),
            vel_labels: Vec::with_capacity(n * 3),
            contact_labels: Vec::with_capacity(n * 4),
            histories: Vec::with_capacity(n * history_dim),
            last_values: Vec::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.n_envs * self.steps
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.len() == self.capacity() && self.last_values.len() == self.n_envs
    }

    /// Advantages and returns, computed per environment column.
    pub fn advantages(&self, gamma: f64, lam: f64) -> (Vec<f64>, Vec<f64>) {
        let (n, t_max) = (self.n_envs, self.steps);
        let mut adv = vec![0.0; n * t_max];
        let mut ret = vec![0.0; n * t_max];
        for e in 0..n {
            let col = |v: &[f64]| (0..t_max).map(|t| v[t * n + e]).collect::<Vec<_>>();
            let dones: Vec<bool> = (0..t_max).map(|t| self.dones[t * n + e]).collect();
            let (a, r) = compute_gae(&col(&self.rewards), &col(&self.values), &dones, self.last_values[e], gamma, lam);
            for t in 0..t_max {
                adv[t * n + e] = a[t];
                ret[t * n + e] = r[t];
            }
        }
        (adv, ret)
    }
}

/// Per-rollout summary used for logging.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutStats {
    /// Returns of episodes that ended during the rollout.
    pub episode_returns: Vec<f64>,
    /// Reward collected by each environment over the rollout.
    pub rollout_returns: Vec<f64>,
    /// Mean of each reward term over all transitions.
    pub term_means: Vec<f64>,
    pub episodes: usize,
    pub successes: usize,
    pub faults: usize,
}

/// A set of environments with their current observations and running
/// episode returns.
pub struct EnvBatch {
    pub envs: Vec<MotionEnv>,
    obs: Vec<Vec<f64>>,
    running: Vec<f64>,
}

impl EnvBatch {
    pub fn new(mut envs: Vec<MotionEnv>) -> Result<Self> {
        if envs.is_empty() {
            return Err(Error::invalid("environment batch", "needs at least one environment"));
        }
        let obs = envs.iter_mut().map(|e| e.reset()).collect();
        let running = vec![0.0; envs.len()];
        Ok(EnvBatch { envs, obs, running })
    }

    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }

    /// Moves every environment to `dynamics`; episodes continue when only λ changes.
    pub fn set_dynamics(&mut self, dynamics: crate::env::Dynamics) -> Result<()> {
        for (i, env) in self.envs.iter_mut().enumerate() {
            if env.dynamics() == dynamics {
                continue;
            }
            env.set_dynamics(dynamics)?;
            if env.steps() >= env.episode_steps() {
                self.obs[i] = env.reset();
                self.running[i] = 0.0;
            } else {
                self.obs[i] = env.observe();
            }
        }
        Ok(())
    }

    /// Observations as the policy sees them: estimator outputs replace the
    /// privileged entries when an estimator is given and the robot is articulated.
    fn policy_obs(&self, estimator: Option<&Estimator>) -> Result<Vec<Vec<f64>>> {
        let mut obs = self.obs.clone();
        let Some(est) = estimator else { return Ok(obs) };
        let idx: Vec<usize> = (0..self.len()).filter(|i| self.envs[*i].is_full()).collect();
        if idx.is_empty() {
            return Ok(obs);
        }
        let dim = est.net.input_dim();
        let mut h = DMatrix::zeros(dim, idx.len());
        for (k, i) in idx.iter().enumerate() {
            h.column_mut(k).copy_from_slice(&self.envs[*i].history().flatten());
        }
        let raw = est.net.forward_batch(h)?.output;
        for (k, i) in idx.iter().enumerate() {
            substitute_estimate(&mut obs[*i], &Estimator::decode(raw.column(k).as_slice()));
        }
        Ok(obs)
    }
}

fn columns(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let dim = rows[0].len();
    let mut m = DMatrix::zeros(dim, rows.len());
    for (k, r) in rows.iter().enumerate() {
        m.column_mut(k).copy_from_slice(r);
    }
    m
}

/// Runs every environment for `steps` control steps under `policy`.
///
/// Action noise comes from each environment's own random stream and the
/// environments step in parallel on the current rayon pool, so the buffer
/// depends only on the seeds. Finished or faulted episodes are reset in place.
pub fn collect_rollouts(
    batch: &mut EnvBatch,
    policy: &GaussianPolicy,
    value: &ValueNet,
    estimator: Option<&Estimator>,
    steps: usize,
    deterministic: bool,
) -> Result<(RolloutBuffer, RolloutStats)> {
    let n = batch.len();
    let act_dim = policy.act_dim();
    if act_dim != ACTION_DIM {
        return Err(Error::invalid("policy", format!("action size {act_dim}, environments expect {ACTION_DIM}")));
    }
    let history_dim = match estimator {
        Some(e) if batch.envs.iter().any(|env| env.is_full()) => e.net.input_dim(),
        _ => 0,
    };
    let mut buf = RolloutBuffer::new(n, steps, policy.obs_dim(), act_dim, history_dim);
    let mut stats = RolloutStats { rollout_returns: vec![0.0; n], ..Default::default() };
    let mut term_sums: Vec<f64> = Vec::new();

    for env_idx in 0..n {
        let env = &mut batch.envs[env_idx];
        if env.steps() >= env.episode_steps() {
            batch.obs[env_idx] = env.reset();
            batch.running[env_idx] = 0.0;
        }
    }

    for _ in 0..steps {
        let obs = batch.policy_obs(estimator)?;
        let x = columns(&obs);
        let mu = policy.mean.forward_batch(x.clone())?.output;
        let v = value.net.forward_batch(x)?.output;
        let mut actions = Vec::with_capacity(n);
        for (e, env) in batch.envs.iter_mut().enumerate() {
            let mean = mu.column(e);
            let a: Vec<f64> = if deterministic {
                mean.iter().copied().collect()
            } else {
                let rng = env.rng_mut();
                mean.iter()
                    .zip(&policy.log_std)
                    .map(|(m, ls)| m + ls.exp() * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
                    .collect()
            };
            buf.log_probs.push(gaussian_log_prob(mean.as_slice(), &policy.log_std, &a));
            buf.obs.extend_from_slice(&obs[e]);
            buf.actions.extend_from_slice(&a);
            buf.values.push(v[(0, e)]);
            let (vel, contact) = env.privileged_labels();
            buf.vel_labels.extend_from_slice(vel.as_slice());
            buf.contact_labels.extend_from_slice(&contact);
            if history_dim > 0 {
                if env.is_full() {
                    buf.histories.extend(env.history().flatten());
                } else {
                    buf.histories.extend(std::iter::repeat_n(0.0, history_dim));
                }
            }
            actions.push(a);
        }

        let results: Vec<Result<StepResult>> =
            batch.envs.par_iter_mut().zip(actions.par_iter()).map(|(env, a)| env.step(a)).collect();

        for (e, r) in results.into_iter().enumerate() {
            let r = r?;
            if !r.reward.is_finite() {
                return Err(Error::Fault(format!("non-finite reward in environment {e}")));
            }
            if term_sums.is_empty() {
                term_sums = vec![0.0; r.breakdown.values.len()];
            }
            for (s, x) in term_sums.iter_mut().zip(&r.breakdown.values) {
                *s += x;
            }
            buf.rewards.push(r.reward);
            buf.dones.push(r.done);
            batch.running[e] += r.reward;
            stats.rollout_returns[e] += r.reward;
            if r.done {
                let env = &mut batch.envs[e];
                let outcome = env.outcome();
                stats.episodes += 1;
                stats.successes += outcome.success as usize;
                stats.faults += outcome.fault as usize;
                stats.episode_returns.push(batch.running[e]);
                batch.running[e] = 0.0;
                batch.obs[e] = env.reset();
            } else {
                batch.obs[e] = r.obs;
            }
        }
    }

    let obs = batch.policy_obs(estimator)?;
    buf.last_values = value.net.forward_batch(columns(&obs))?.output.row(0).iter().copied().collect();
    let total = (n * steps).max(1) as f64;
    stats.term_means = term_sums.iter().map(|s| s / total).collect();
    Ok((buf, stats))
}
