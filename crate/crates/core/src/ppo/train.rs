use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand_chacha::ChaCha8Rng;

use crate::env::{estimator_input_dim, obs_dim, Dynamics, EnvConfig, MotionEnv, Robot, ACTION_DIM};
use crate::error::{Error, Result};
use crate::homotopy::lambda_schedule;
use crate::nets::{Adam, Estimator, GaussianPolicy, ValueNet, POLICY_HIDDEN};
use crate::rng::{stream, RngState};
use crate::tasks::MotionTask;

use super::checkpoint::Checkpoint;
use super::rollout::{collect_rollouts, EnvBatch};
use super::update::{estimator_epoch, param_count, ppo_update};
use super::{Baseline, Stage, TrainConfig};

/// Stage and dynamics of iteration `i` of a run.
///
/// Our method ramps λ linearly over the homotopy iterations and then holds
/// the full model; both baselines use the full model from the start.
pub fn schedule(cfg: &TrainConfig, i: usize) -> (Stage, Dynamics) {
    let full = (Stage::Fullbody, Dynamics::FullBody { lambda: 1.0 });
    match (cfg.stage, cfg.baseline) {
        (Stage::Srb, _) => (Stage::Srb, Dynamics::Srb),
        (Stage::Homotopy, Baseline::Ours) if i < cfg.homotopy_iterations => {
            (Stage::Homotopy, Dynamics::FullBody { lambda: lambda_schedule(i, cfg.homotopy_iterations) })
        }
        _ => full,
    }
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub iteration: usize,
    pub stage: Stage,
    /// NaN in the SRB world.
    pub lambda: f64,
    pub dt: f64,
    pub mean_return: f64,
    pub min_return: f64,
    pub max_return: f64,
    pub success_rate: f64,
    pub episodes: usize,
    /// Mean value of each reward term, in task order.
    pub terms: Vec<f64>,
    /// NaN when no estimator was trained.
    pub estimator_loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub kl: f64,
    pub clip_fraction: f64,
}

const LEADING: [&str; 9] =
    ["iteration", "stage", "lambda", "dt", "mean_return", "min_return", "max_return", "success_rate", "episodes"];
const TRAILING: [&str; 6] = ["estimator_loss", "policy_loss", "value_loss", "entropy", "kl", "clip_fraction"];

impl MetricsRow {
    pub fn header(term_names: &[String]) -> Vec<String> {
        let mut h: Vec<String> = LEADING.iter().map(|s| s.to_string()).collect();
        h.extend(term_names.iter().cloned());
        h.extend(TRAILING.iter().map(|s| s.to_string()));
        h
    }

    pub(crate) fn record(&self) -> Vec<String> {
        let mut r = vec![
            self.iteration.to_string(),
            self.stage.to_string(),
            self.lambda.to_string(),
            self.dt.to_string(),
            self.mean_return.to_string(),
            self.min_return.to_string(),
            self.max_return.to_string(),
            self.success_rate.to_string(),
            self.episodes.to_string(),
        ];
        r.extend(self.terms.iter().map(|x| x.to_string()));
        for x in [self.estimator_loss, self.policy_loss, self.value_loss, self.entropy, self.kl, self.clip_fraction] {
            r.push(x.to_string());
        }
        r
    }

    fn parse(rec: &csv::StringRecord, n_terms: usize) -> Result<Self> {
        let bad = |i: usize| Error::invalid("metrics row", format!("column {i}: {:?}", rec.get(i)));
        let f = |i: usize| rec.get(i).and_then(|s| s.parse::<f64>().ok()).ok_or_else(|| bad(i));
        let u = |i: usize| rec.get(i).and_then(|s| s.parse::<usize>().ok()).ok_or_else(|| bad(i));
        let t = LEADING.len() + n_terms;
        Ok(MetricsRow {
            iteration: u(0)?,
            stage: rec.get(1).ok_or_else(|| bad(1))?.parse()?,
            lambda: f(2)?,
            dt: f(3)?,
            mean_return: f(4)?,
            min_return: f(5)?,
            max_return: f(6)?,
            success_rate: f(7)?,
            episodes: u(8)?,
            terms: (LEADING.len()..t).map(f).collect::<Result<_>>()?,
            estimator_loss: f(t)?,
            policy_loss: f(t + 1)?,
            value_loss: f(t + 2)?,
            entropy: f(t + 3)?,
            kl: f(t + 4)?,
            clip_fraction: f(t + 5)?,
        })
    }
}

/// Reads a metrics CSV; returns the reward term names and the rows.
pub fn read_metrics(path: &Path) -> Result<(Vec<String>, Vec<MetricsRow>)> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header = rdr.headers()?.clone();
    let n = header.len();
    if n < LEADING.len() + TRAILING.len() || header.get(0) != Some("iteration") {
        return Err(Error::config(path.display().to_string(), "not a metrics file"));
    }
    let terms: Vec<String> = header.iter().skip(LEADING.len()).take(n - LEADING.len() - TRAILING.len()).map(String::from).collect();
    let rows = rdr.records().map(|r| MetricsRow::parse(&r?, terms.len())).collect::<Result<_>>()?;
    Ok((terms, rows))
}

pub struct Trainer {
    cfg: TrainConfig,
    task: Arc<MotionTask>,
    batch: EnvBatch,
    policy: GaussianPolicy,
    value: ValueNet,
    estimator: Estimator,
    opt: Adam,
    est_opt: Adam,
    rng: ChaCha8Rng,
    iteration: usize,
    pool: rayon::ThreadPool,
}

impl Trainer {
    /// `init` is required for transfer runs of our method and direct
    /// transfer, ignored by the vanilla baseline and optional for SRB runs.
    /// `workers` = 0 picks the rayon default; it never changes results.
    pub fn new(
        cfg: TrainConfig,
        task: Arc<MotionTask>,
        robot: Arc<Robot>,
        init: Option<Checkpoint>,
        workers: usize,
    ) -> Result<Self> {
        cfg.validate()?;
        let od = obs_dim(&task);
        let needs_init = cfg.stage != Stage::Srb && cfg.baseline != Baseline::Vanilla;
        let init = if cfg.baseline == Baseline::Vanilla && cfg.stage != Stage::Srb { None } else { init };
        if needs_init && init.is_none() {
            return Err(Error::config(
                "training config",
                format!("a pretrained checkpoint is required for the {} baseline", cfg.baseline),
            ));
        }
        let (policy, value, estimator, opt, est_opt) = match init {
            Some(ck) => {
                check_compatible(&ck, &task, cfg.stage)?;
                let n = param_count(&ck.policy, &ck.value);
                // a new stage starts with fresh optimizer moments
                let (opt, est_opt) = if ck.stage == cfg.stage {
                    (ck.optimizer, ck.estimator_optimizer)
                } else {
                    (Adam::new(n, cfg.learning_rate), Adam::new(ck.estimator.net.params.len(), cfg.learning_rate))
                };
                (ck.policy, ck.value, ck.estimator, opt, est_opt)
            }
            None => {
                let policy = GaussianPolicy::new(od, ACTION_DIM, &POLICY_HIDDEN, &mut stream(cfg.seed, "policy", 0));
                let value = ValueNet::new(od, &POLICY_HIDDEN, &mut stream(cfg.seed, "value", 0));
                let estimator = Estimator::new(estimator_input_dim(&task), &mut stream(cfg.seed, "estimator", 0));
                let opt = Adam::new(param_count(&policy, &value), cfg.learning_rate);
                let est_opt = Adam::new(estimator.net.params.len(), cfg.learning_rate);
                (policy, value, estimator, opt, est_opt)
            }
        };
        let (_, dynamics) = schedule(&cfg, 0);
        let envs = (0..cfg.n_envs)
            .map(|i| {
                MotionEnv::new(task.clone(), robot.clone(), EnvConfig::default(), dynamics, stream(cfg.seed, "env", i as u64))
            })
            .collect::<Result<Vec<_>>>()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::invalid("worker pool", e.to_string()))?;
        Ok(Trainer {
            rng: stream(cfg.seed, "update", 0),
            cfg,
            task,
            batch: EnvBatch::new(envs)?,
            policy,
            value,
            estimator,
            opt,
            est_opt,
            iteration: 0,
            pool,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn policy(&self) -> &GaussianPolicy {
        &self.policy
    }

    pub fn estimator(&self) -> &Estimator {
        &self.estimator
    }

    pub fn is_finished(&self) -> bool {
        self.iteration >= self.cfg.total_iterations()
    }

    pub fn term_names(&self) -> Vec<String> {
        self.task.rewards.terms.iter().map(|t| t.name.clone()).collect()
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let i = self.iteration.saturating_sub(1);
        let (stage, dynamics) = schedule(&self.cfg, i);
        Checkpoint {
            task: self.task.name.clone(),
            stage,
            baseline: self.cfg.baseline,
            iteration: self.iteration as u64,
            lambda: dynamics.lambda().unwrap_or(f64::NAN),
            policy: self.policy.clone(),
            value: self.value.clone(),
            estimator: self.estimator.clone(),
            optimizer: self.opt.clone(),
            estimator_optimizer: self.est_opt.clone(),
            rng: RngState::capture(&self.rng),
        }
    }

    /// Collects one rollout and updates all networks.
    pub fn step(&mut self) -> Result<MetricsRow> {
        let i = self.iteration;
        let (stage, dynamics) = schedule(&self.cfg, i);
        self.batch.set_dynamics(dynamics)?;
        let estimator = (stage != Stage::Srb).then_some(&self.estimator);
        let steps = self.cfg.steps_per_rollout();
        let (policy, value, batch) = (&self.policy, &self.value, &mut self.batch);
        let (buf, stats) = self.pool.install(|| collect_rollouts(batch, policy, value, estimator, steps, false))?;
        let est_loss = if stage == Stage::Srb {
            None
        } else {
            estimator_epoch(
                &buf,
                &mut self.estimator,
                &mut self.est_opt,
                self.cfg.minibatches,
                self.cfg.max_grad_norm,
                &mut self.rng,
            )?
        };
        let upd = ppo_update(&buf, &mut self.policy, &mut self.value, &mut self.opt, &self.cfg, &mut self.rng)?;
        if !upd.is_finite() {
            return Err(Error::Fault(format!("non-finite update statistics at iteration {i}")));
        }
        let returns = if stats.episode_returns.is_empty() { &stats.rollout_returns } else { &stats.episode_returns };
        let n = returns.len() as f64;
        self.iteration += 1;
        Ok(MetricsRow {
            iteration: i,
            stage,
            lambda: dynamics.lambda().unwrap_or(f64::NAN),
            dt: self.batch.envs[0].sim_dt(),
            mean_return: returns.iter().sum::<f64>() / n,
            min_return: returns.iter().copied().fold(f64::INFINITY, f64::min),
            max_return: returns.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            success_rate: if stats.episodes > 0 { stats.successes as f64 / stats.episodes as f64 } else { 0.0 },
            episodes: stats.episodes,
            terms: stats.term_means,
            estimator_loss: est_loss.unwrap_or(f64::NAN),
            policy_loss: upd.policy_loss,
            value_loss: upd.value_loss,
            entropy: upd.entropy,
            kl: upd.approx_kl,
            clip_fraction: upd.clip_fraction,
        })
    }

    /// Trains to the end of the configured budget. With an output directory,
    /// writes `metrics.csv`, `timing.csv` and checkpoints under
    /// `checkpoints/`: every `checkpoint_every` iterations, at the stage
    /// boundary and `final.ckpt` at the end. A failed update dumps
    /// `abort.ckpt` before returning the error.
    pub fn run(&mut self, out: Option<&Path>, mut progress: impl FnMut(&MetricsRow)) -> Result<Vec<MetricsRow>> {
        let mut sinks = match out {
            Some(dir) => {
                std::fs::create_dir_all(dir.join("checkpoints"))?;
                let mut metrics = csv::Writer::from_path(dir.join("metrics.csv"))?;
                metrics.write_record(MetricsRow::header(&self.term_names()))?;
                let mut timing = File::create(dir.join("timing.csv"))?;
                writeln!(timing, "iteration,seconds")?;
                Some((dir.to_path_buf(), metrics, timing))
            }
            None => None,
        };
        let mut rows = Vec::new();
        while !self.is_finished() {
            let started = Instant::now();
            let row = match self.step() {
                Ok(r) => r,
                Err(e) => {
                    if let Some((dir, ..)) = &sinks {
                        self.checkpoint().save(&dir.join("checkpoints").join("abort.ckpt"))?;
                    }
                    return Err(e);
                }
            };
            if let Some((dir, metrics, timing)) = &mut sinks {
                metrics.write_record(row.record())?;
                metrics.flush()?;
                writeln!(timing, "{},{}", row.iteration, started.elapsed().as_secs_f64())?;
                let next_stage = schedule(&self.cfg, self.iteration).0;
                let boundary = next_stage != row.stage && !self.is_finished();
                if boundary || (self.cfg.checkpoint_every > 0 && self.iteration.is_multiple_of(self.cfg.checkpoint_every)) {
                    self.checkpoint().save(&dir.join("checkpoints").join(format!("iter_{:05}.ckpt", self.iteration)))?;
                }
            }
            progress(&row);
            rows.push(row);
        }
        if let Some((dir, ..)) = &sinks {
            self.checkpoint().save(&dir.join("checkpoints").join("final.ckpt"))?;
        }
        Ok(rows)
    }
}

/// Refuses checkpoints whose networks do not fit `task`, listing every mismatch.
fn check_compatible(ck: &Checkpoint, task: &MotionTask, stage: Stage) -> Result<()> {
    let mut diffs = Vec::new();
    let od = obs_dim(task);
    if ck.policy.obs_dim() != od {
        diffs.push(format!("observation size: checkpoint {}, task {od}", ck.policy.obs_dim()));
    }
    if ck.policy.act_dim() != ACTION_DIM {
        diffs.push(format!("action size: checkpoint {}, expected {ACTION_DIM}", ck.policy.act_dim()));
    }
    if ck.value.net.input_dim() != od {
        diffs.push(format!("value input: checkpoint {}, task {od}", ck.value.net.input_dim()));
    }
    let ed = estimator_input_dim(task);
    if ck.estimator.net.input_dim() != ed {
        diffs.push(format!("estimator input: checkpoint {}, task {ed}", ck.estimator.net.input_dim()));
    }
    if ck.stage > stage {
        diffs.push(format!("stage: checkpoint is from {}, cannot go back to {stage}", ck.stage));
    }
    if diffs.is_empty() {
        Ok(())
    } else {
        Err(Error::config(
            format!("checkpoint for task '{}'", ck.task),
            format!("does not match task '{}':\n  {}", task.name, diffs.join("\n  ")),
        ))
    }
}
