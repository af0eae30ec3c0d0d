//! Evaluation: convergence and normalized-return summaries, the
//! disturbance-robustness grid and trajectory logs.

use std::f64::consts::TAU;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, UnitSphere};
use rayon::prelude::*;

use crate::env::{substitute_estimate, Dynamics, EnvConfig, EpisodeOutcome, MotionEnv, Robot, ACTION_DIM};
use crate::error::{Error, Result};
use crate::geom::{skew, so3_log, yaw_of, Mat3, Rot3, Vec3};
use crate::nets::{Estimator, GaussianPolicy};
use crate::rigid_body::{ExternalWrench, NJ};
use crate::rng::stream;
use crate::tasks::{reward_eval, MotionTask, RewardBreakdown, RewardInputs};

/// First iteration whose trailing-window mean reaches 99 % of the mean of
/// the last `window` iterations. Early iterations average what exists.
/// `None` when the series is not longer than the window.
pub fn converged_iteration(returns: &[f64], window: usize) -> Option<usize> {
    if window == 0 || returns.len() <= window {
        return None;
    }
    let n = returns.len();
    let final_mean = returns[n - window..].iter().sum::<f64>() / window as f64;
    let threshold = 0.99 * final_mean;
    let mut sum = 0.0;
    for i in 0..n {
        sum += returns[i];
        if i >= window {
            sum -= returns[i - window];
        }
        let smoothed = sum / (i + 1).min(window) as f64;
        if smoothed >= threshold {
            return Some(i);
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedReturn {
    pub method: String,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// Divides every run's final return by the best per-method mean of the task.
pub fn normalized_return(runs: &[(String, Vec<f64>)]) -> Result<Vec<NormalizedReturn>> {
    if runs.is_empty() || runs.iter().any(|(_, r)| r.is_empty()) {
        return Err(Error::invalid("normalized return", "every method needs at least one run"));
    }
    let mean = |r: &[f64]| r.iter().sum::<f64>() / r.len() as f64;
    let best = runs.iter().map(|(_, r)| mean(r)).fold(f64::NEG_INFINITY, f64::max);
    if !(best > 0.0) {
        return Err(Error::invalid("normalized return", format!("best method mean {best} is not positive")));
    }
    Ok(runs
        .iter()
        .map(|(m, r)| {
            let scaled: Vec<f64> = r.iter().map(|x| x / best).collect();
            NormalizedReturn {
                method: m.clone(),
                mean: mean(&scaled),
                min: scaled.iter().copied().fold(f64::INFINITY, f64::min),
                max: scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect())
}

/// Produces raw actions for an environment.
pub trait Controller: Sync {
    fn act(&self, env: &MotionEnv, obs: &[f64]) -> Result<Vec<f64>>;
}

/// Mean action of a trained policy. On the articulated robot the
/// estimator replaces the privileged entries, as during training.
pub struct PolicyController<'a> {
    pub policy: &'a GaussianPolicy,
    pub estimator: Option<&'a Estimator>,
}

impl Controller for PolicyController<'_> {
    fn act(&self, env: &MotionEnv, obs: &[f64]) -> Result<Vec<f64>> {
        match self.estimator {
            Some(est) if env.is_full() => {
                let mut o = obs.to_vec();
                substitute_estimate(&mut o, &est.predict(env.history())?);
                self.policy.mean_action(&o)
            }
            _ => self.policy.mean_action(obs),
        }
    }
}

/// Scripted reference controller: distributes a PD wrench that holds the
/// body at its reset pose over the feet in contact. It is used to exercise
/// the harness independently of any trained policy.
#[derive(Debug, Clone, Copy)]
pub struct BalanceController {
    pub kp: f64,
    pub kd: f64,
    pub kp_rot: f64,
    pub kd_rot: f64,
}

impl Default for BalanceController {
    fn default() -> Self {
        BalanceController { kp: 1500.0, kd: 150.0, kp_rot: 60.0, kd_rot: 6.0 }
    }
}

impl Controller for BalanceController {
    fn act(&self, env: &MotionEnv, _obs: &[f64]) -> Result<Vec<f64>> {
        let robot = env.robot();
        let b = env.body_state();
        let target = Vec3::new(0.0, 0.0, robot.full.nominal_base_height + robot.com_offset.z);
        let force = Vec3::new(0.0, 0.0, robot.weight()) + (target - b.p) * self.kp - b.v * self.kd;
        let torque = -so3_log(&b.rot) * self.kp_rot - b.w * self.kd_rot;
        let feet: Vec<usize> = (0..4).filter(|i| b.contact[*i]).collect();
        let mut a = vec![0.0; ACTION_DIM];
        if feet.is_empty() {
            return Ok(a);
        }
        // least-norm correction around an even split of the force
        let n = feet.len();
        let mut m = DMatrix::zeros(6, 3 * n);
        for (k, leg) in feet.iter().enumerate() {
            let r = b.feet[*leg] - b.p;
            m.view_mut((0, 3 * k), (3, 3)).copy_from(&Mat3::identity());
            m.view_mut((3, 3 * k), (3, 3)).copy_from(&skew(&r));
        }
        let even = DVector::from_fn(3 * n, |i, _| force[i % 3] / n as f64);
        let wrench = DVector::from_iterator(6, force.iter().chain(torque.iter()).copied());
        let gram = &m * m.transpose() + DMatrix::identity(6, 6) * 1e-9;
        let f = match gram.cholesky() {
            Some(ch) => &even + m.transpose() * ch.solve(&(wrench - &m * &even)),
            None => even,
        };
        let unit = 0.25 * robot.weight();
        for (k, leg) in feet.iter().enumerate() {
            a[3 * leg] = f[3 * k] / unit;
            a[3 * leg + 1] = f[3 * k + 1] / unit;
            a[3 * leg + 2] = f[3 * k + 2] / unit - 1.0;
        }
        Ok(a)
    }
}

/// Resets `env` and runs one episode to its end.
pub fn run_episode(env: &mut MotionEnv, ctrl: &dyn Controller) -> Result<EpisodeOutcome> {
    let mut obs = env.reset();
    loop {
        let a = ctrl.act(env, &obs)?;
        let r = env.step(&a)?;
        if r.done {
            return Ok(env.outcome());
        }
        obs = r.obs;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub force_norms: Vec<f64>,
    pub torque_norms: Vec<f64>,
    pub n_directions: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            force_norms: vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0],
            torque_norms: vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0],
            n_directions: 100,
        }
    }
}

/// Success fractions; `success[i][j]` belongs to force `i` and torque `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessGrid {
    pub force_norms: Vec<f64>,
    pub torque_norms: Vec<f64>,
    pub n_directions: usize,
    pub success: Vec<Vec<f64>>,
}

/// Force and torque directions of disturbance sample `d`.
fn directions(seed: u64, d: usize) -> (Vec3, Vec3) {
    let mut rng = stream(seed, "disturbance", d as u64);
    let f: [f64; 3] = UnitSphere.sample(&mut rng);
    let t: [f64; 3] = UnitSphere.sample(&mut rng);
    (Vec3::from(f), Vec3::from(t))
}

fn eval_env(task: &Arc<MotionTask>, robot: &Arc<Robot>, seed: u64, d: usize) -> Result<MotionEnv> {
    MotionEnv::new(
        task.clone(),
        robot.clone(),
        EnvConfig::default(),
        Dynamics::FullBody { lambda: 1.0 },
        stream(seed, "eval-env", d as u64),
    )
}

/// Success rate without disturbances over the episodes the grid uses.
pub fn nominal_success(
    ctrl: &dyn Controller,
    task: &Arc<MotionTask>,
    robot: &Arc<Robot>,
    n_episodes: usize,
    seed: u64,
) -> Result<f64> {
    let wins = (0..n_episodes)
        .into_par_iter()
        .map(|d| Ok(run_episode(&mut eval_env(task, robot, seed, d)?, ctrl)?.success))
        .collect::<Result<Vec<bool>>>()?;
    Ok(wins.iter().filter(|w| **w).count() as f64 / n_episodes.max(1) as f64)
}

/// Full-model success under constant trunk wrenches. Direction sample `d`
/// and its episode seed are shared by every cell, so cells differ only in
/// disturbance magnitude.
pub fn robustness_grid(
    ctrl: &dyn Controller,
    task: &Arc<MotionTask>,
    robot: &Arc<Robot>,
    spec: &GridSpec,
    seed: u64,
) -> Result<RobustnessGrid> {
    if spec.n_directions == 0 || spec.force_norms.is_empty() || spec.torque_norms.is_empty() {
        return Err(Error::invalid("robustness grid", "needs directions and at least one norm per axis"));
    }
    if spec.force_norms.iter().chain(&spec.torque_norms).any(|x| !(*x >= 0.0)) {
        return Err(Error::invalid("robustness grid", "norms must be non-negative"));
    }
    let (nf, nt, nd) = (spec.force_norms.len(), spec.torque_norms.len(), spec.n_directions);
    let dirs: Vec<(Vec3, Vec3)> = (0..nd).map(|d| directions(seed, d)).collect();
    let outcomes = (0..nf * nt * nd)
        .into_par_iter()
        .map(|k| {
            let (cell, d) = (k / nd, k % nd);
            let (i, j) = (cell / nt, cell % nt);
            let mut env = eval_env(task, robot, seed, d)?;
            env.set_wrench(ExternalWrench {
                force: dirs[d].0 * spec.force_norms[i],
                torque: dirs[d].1 * spec.torque_norms[j],
            });
            Ok(run_episode(&mut env, ctrl)?.success)
        })
        .collect::<Result<Vec<bool>>>()?;
    let success = (0..nf)
        .map(|i| {
            (0..nt)
                .map(|j| {
                    let cell = &outcomes[(i * nt + j) * nd..(i * nt + j + 1) * nd];
                    cell.iter().filter(|s| **s).count() as f64 / nd as f64
                })
                .collect()
        })
        .collect();
    Ok(RobustnessGrid {
        force_norms: spec.force_norms.clone(),
        torque_norms: spec.torque_norms.clone(),
        n_directions: nd,
        success,
    })
}

const GRID_CORNER: &str = "force\\torque";

impl RobustnessGrid {
    /// Header row of torque norms, then one row per force norm.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec![GRID_CORNER.to_string()];
        header.extend(self.torque_norms.iter().map(|t| t.to_string()));
        w.write_record(&header)?;
        for (f, row) in self.force_norms.iter().zip(&self.success) {
            let mut rec = vec![f.to_string()];
            rec.extend(row.iter().map(|s| s.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a grid CSV; the direction count is not stored in the file.
    pub fn read_csv(path: &Path, n_directions: usize) -> Result<Self> {
        let bad = |m: String| Error::config(path.display().to_string(), m);
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.clone();
        if header.get(0) != Some(GRID_CORNER) {
            return Err(bad("not a robustness grid".into()));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("not a number: {s:?}")));
        let torque_norms = header.iter().skip(1).map(num).collect::<Result<Vec<_>>>()?;
        let (mut force_norms, mut success) = (Vec::new(), Vec::new());
        for rec in r.records() {
            let rec = rec?;
            force_norms.push(num(&rec[0])?);
            success.push(rec.iter().skip(1).map(num).collect::<Result<Vec<_>>>()?);
        }
        Ok(RobustnessGrid { force_norms, torque_norms, n_directions, success })
    }

    /// Tidy long format: one `force,torque,success` row per cell.
    pub fn write_long_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["force", "torque", "success"])?;
        for (f, row) in self.force_norms.iter().zip(&self.success) {
            for (t, s) in self.torque_norms.iter().zip(row) {
                w.write_record([f.to_string(), t.to_string(), s.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Largest increase of success along any row or column.
    pub fn max_increase(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.success.len() {
            for j in 0..self.success[i].len() {
                if i + 1 < self.success.len() {
                    worst = worst.max(self.success[i + 1][j] - self.success[i][j]);
                }
                if j + 1 < self.success[i].len() {
                    worst = worst.max(self.success[i][j + 1] - self.success[i][j]);
                }
            }
        }
        worst
    }
}

/// One control-rate sample of a trajectory. Row 0 is the reset state with
/// zero action and reward.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub p: Vec3,
    pub v: Vec3,
    pub rot: Rot3,
    pub w: Vec3,
    /// Unwrapped roll, pitch and yaw of the body.
    pub rpy: Vec3,
    /// NaN in the SRB world.
    pub joints: [f64; NJ],
    pub contact: [bool; 4],
    pub action: Vec<f64>,
    pub grf: [Vec3; 4],
    pub residual: [Vec3; 4],
    pub v_cmd: Vec3,
    pub yaw_rate_cmd: f64,
    pub reward: f64,
    pub terms: Vec<f64>,
    pub fault: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub task: String,
    pub term_names: Vec<String>,
    pub rows: Vec<TrajectoryRow>,
}

/// Body angles that stay continuous through full turns.
fn unwrapped_rpy(rot: &Rot3, prev: Option<Vec3>) -> Vec3 {
    let (x, y) = (rot.axis(0), rot.axis(1));
    let raw = Vec3::new(y.z.atan2(y.y), (-x.z).atan2(x.x), yaw_of(rot));
    match prev {
        None => raw,
        Some(p) => raw.zip_map(&p, |r, p| r + TAU * ((p - r) / TAU).round()),
    }
}

/// Runs one episode with `ctrl` and records every control step.
pub fn record_trajectory(env: &mut MotionEnv, ctrl: &dyn Controller) -> Result<TrajectoryLog> {
    let task = env.task().clone();
    let n_terms = task.rewards.terms.len();
    let mut obs = env.reset();
    let joints_of = |env: &MotionEnv| -> [f64; NJ] {
        env.articulated_state().map_or([f64::NAN; NJ], |s| s.joints.as_slice().try_into().unwrap())
    };
    let b = env.body_state();
    let cmd = env.command();
    let mut rows = vec![TrajectoryRow {
        t: b.t,
        p: b.p,
        v: b.v,
        rot: b.rot,
        w: b.w,
        rpy: unwrapped_rpy(&b.rot, None),
        joints: joints_of(env),
        contact: b.contact,
        action: vec![0.0; ACTION_DIM],
        grf: [Vec3::zeros(); 4],
        residual: [Vec3::zeros(); 4],
        v_cmd: cmd.velocity(),
        yaw_rate_cmd: cmd.yaw_rate,
        reward: 0.0,
        terms: vec![0.0; n_terms],
        fault: false,
    }];
    loop {
        let action = ctrl.act(env, &obs)?;
        let r = env.step(&action)?;
        let b = env.body_state();
        let x = &r.inputs;
        rows.push(TrajectoryRow {
            t: x.t,
            p: x.p,
            v: x.v,
            rot: x.rot,
            w: x.w,
            rpy: unwrapped_rpy(&x.rot, rows.last().map(|p| p.rpy)),
            joints: joints_of(env),
            contact: b.contact,
            action,
            grf: x.grf,
            residual: x.residual,
            v_cmd: x.v_cmd,
            yaw_rate_cmd: x.yaw_rate_cmd,
            reward: r.reward,
            terms: r.breakdown.values.clone(),
            fault: r.fault.is_some(),
        });
        if r.done {
            break;
        }
        obs = r.obs;
    }
    Ok(TrajectoryLog {
        task: task.name.clone(),
        term_names: task.rewards.terms.iter().map(|t| t.name.clone()).collect(),
        rows,
    })
}

/// Loads the environment for `dynamics` and records one episode.
pub fn export_trajectory(
    ctrl: &dyn Controller,
    task: Arc<MotionTask>,
    robot: Arc<Robot>,
    dynamics: Dynamics,
    seed: u64,
    path: &Path,
) -> Result<TrajectoryLog> {
    let mut env = MotionEnv::new(task, robot, EnvConfig::default(), dynamics, stream(seed, "eval-env", 0))?;
    let log = record_trajectory(&mut env, ctrl)?;
    log.write_csv(path)?;
    Ok(log)
}

/// Re-evaluates the reward of every logged step after the first.
pub fn replay_rewards(task: &MotionTask, log: &TrajectoryLog) -> Vec<RewardBreakdown> {
    log.rows[1..]
        .iter()
        .map(|r| {
            let inputs = RewardInputs {
                t: r.t,
                p: r.p,
                v: r.v,
                rot: r.rot,
                w: r.w,
                grf: r.grf,
                residual: r.residual,
                v_cmd: r.v_cmd,
                yaw_rate_cmd: r.yaw_rate_cmd,
                keyframe: task.keyframe_at(r.t).map(|(_, k)| (k.p_target, k.orientation)),
            };
            reward_eval(&task.rewards, &inputs)
        })
        .collect()
}

const XYZ: [&str; 3] = ["x", "y", "z"];

fn vec_names(prefix: &str, out: &mut Vec<String>) {
    out.extend(XYZ.iter().map(|a| format!("{prefix}_{a}")));
}

impl TrajectoryLog {
    /// Column names; term columns are prefixed `term_`.
    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        for v in ["p", "v"] {
            vec_names(v, &mut h);
        }
        h.extend((0..9).map(|k| format!("rot_{}{}", k / 3, k % 3)));
        vec_names("w", &mut h);
        h.extend(["roll", "pitch", "yaw"].map(String::from));
        h.extend((0..NJ).map(|j| format!("q_{j}")));
        h.extend((0..4).map(|i| format!("contact_{i}")));
        h.extend((0..ACTION_DIM).map(|i| format!("a_{i}")));
        for i in 0..4 {
            vec_names(&format!("grf{i}"), &mut h);
        }
        for i in 0..4 {
            vec_names(&format!("res{i}"), &mut h);
        }
        vec_names("vcmd", &mut h);
        h.push("yaw_rate_cmd".into());
        h.push("reward".into());
        h.extend(self.term_names.iter().map(|n| format!("term_{n}")));
        h.push("fault".into());
        h
    }

    fn record(r: &TrajectoryRow) -> Vec<String> {
        let mut out = vec![r.t];
        out.extend(r.p.iter().chain(r.v.iter()));
        out.extend(r.rot.to_row_array());
        out.extend(r.w.iter().chain(r.rpy.iter()));
        out.extend(r.joints);
        out.extend(r.contact.map(|c| c as u8 as f64));
        out.extend(&r.action);
        out.extend(r.grf.iter().chain(&r.residual).flat_map(|v| v.iter().copied()));
        out.extend(r.v_cmd.iter());
        out.push(r.yaw_rate_cmd);
        out.push(r.reward);
        out.extend(&r.terms);
        out.push(r.fault as u8 as f64);
        out.iter().map(|x| x.to_string()).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(self.header())?;
        for r in &self.rows {
            w.write_record(Self::record(r))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Tidy long format: `t,variable,value` for every column.
    pub fn write_long_csv(&self, path: &Path) -> Result<()> {
        let header = self.header();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "variable", "value"])?;
        for r in &self.rows {
            let rec = Self::record(r);
            for (name, value) in header.iter().zip(&rec).skip(1) {
                w.write_record([rec[0].as_str(), name.as_str(), value.as_str()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path, task: &str) -> Result<Self> {
        let bad = |m: String| Error::config(path.display().to_string(), m);
        let mut rdr = csv::Reader::from_path(path)?;
        let header = rdr.headers()?.clone();
        let term_names: Vec<String> =
            header.iter().filter_map(|h| h.strip_prefix("term_")).map(String::from).collect();
        let mut log = TrajectoryLog { task: task.to_string(), term_names, rows: Vec::new() };
        if header.len() != log.header().len() {
            return Err(bad(format!("{} columns, expected {}", header.len(), log.header().len())));
        }
        for rec in rdr.records() {
            let rec = rec?;
            let x: Vec<f64> = rec
                .iter()
                .map(|s| s.parse::<f64>().map_err(|_| bad(format!("not a number: {s:?}"))))
                .collect::<Result<_>>()?;
            let mut it = x.into_iter();
            let mut take = |n: usize| it.by_ref().take(n).collect::<Vec<f64>>();
            let v3 = |s: &[f64]| Vec3::new(s[0], s[1], s[2]);
            let t = take(1)[0];
            let p = v3(&take(3));
            let v = v3(&take(3));
            let rot = Rot3::from_row_slice(&take(9).try_into().unwrap())?;
            let w = v3(&take(3));
            let rpy = v3(&take(3));
            let joints: [f64; NJ] = take(NJ).try_into().unwrap();
            let contact = <[f64; 4]>::try_from(take(4)).unwrap().map(|c| c != 0.0);
            let action = take(ACTION_DIM);
            let g = take(12);
            let grf: [Vec3; 4] = std::array::from_fn(|i| v3(&g[3 * i..]));
            let rs = take(12);
            let residual: [Vec3; 4] = std::array::from_fn(|i| v3(&rs[3 * i..]));
            let v_cmd = v3(&take(3));
            let yaw_rate_cmd = take(1)[0];
            let reward = take(1)[0];
            let terms = take(log.term_names.len());
            let fault = take(1)[0] != 0.0;
            log.rows.push(TrajectoryRow {
                t,
                p,
                v,
                rot,
                w,
                rpy,
                joints,
                contact,
                action,
                grf,
                residual,
                v_cmd,
                yaw_rate_cmd,
                reward,
                terms,
                fault,
            });
        }
        Ok(log)
    }
}

#[cfg(test)]
mod tests;
