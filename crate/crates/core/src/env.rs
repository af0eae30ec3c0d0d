//! Motion environments. One type drives either the single-rigid-body world
//! or the articulated robot at a homotopy parameter λ; both share the
//! observation layout, action decoding, swing targets and rewards so a
//! policy moves between them unchanged.

use std::ops::Range;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geom::{Inertia3, Rot3, Vec3, Z_AXIS};
use crate::homotopy::{interpolate_model, timestep_schedule, DEFAULT_DT_MIN_FRACTION};
use crate::nets::{Estimate, HistoryBuffer};
use crate::rigid_body::{
    convert_actions, fullbody_step, ArticulatedModel, ArticulatedState, ContactParams, ExternalWrench, Kinematics, NJ,
};
use crate::srb_env::{clip_friction_cone, clip_workspace, srb_step, SrbCommand, SrbModel, SrbState, Terrain};
use crate::tasks::{
    heading_velocity, nominal_swing, plan_query, reward_eval, Command, ContactPlan, MotionTask, PlanInfo,
    RewardBreakdown, RewardInputs, SwingContext,
};

pub const CONTROL_DT: f64 = 0.01;
pub const ACTION_DIM: usize = 24;
pub const OBS_CORE_DIM: usize = 27;
pub const COMMAND_DIM: usize = 3;
/// Joint angles, joint rates and the previous torque command.
pub const PROPRIO_DIM: usize = 3 * NJ;
pub const HISTORY_LEN: usize = 5;

/// Slices of the observation vector.
pub mod obs_layout {
    use std::ops::Range;
    pub const GRAVITY: Range<usize> = 0..3;
    pub const LIN_VEL: Range<usize> = 3..6;
    pub const ANG_VEL: Range<usize> = 6..9;
    pub const FEET: Range<usize> = 9..21;
    pub const CONTACT: Range<usize> = 21..25;
    pub const PHASE: Range<usize> = 25..27;
    pub const COMMAND: Range<usize> = 27..30;
}

pub fn obs_dim(task: &MotionTask) -> usize {
    OBS_CORE_DIM + if task.is_tracking() { COMMAND_DIM } else { 0 }
}

/// Length of one estimator history frame.
pub fn history_frame_dim(task: &MotionTask) -> usize {
    PROPRIO_DIM + obs_dim(task) - 7
}

pub fn estimator_input_dim(task: &MotionTask) -> usize {
    HISTORY_LEN * history_frame_dim(task)
}

/// Replaces the privileged velocity and contact entries with estimates.
pub fn substitute_estimate(obs: &mut [f64], est: &Estimate) {
    obs[obs_layout::LIN_VEL].copy_from_slice(est.velocity.as_slice());
    for (o, c) in obs[obs_layout::CONTACT].iter_mut().zip(est.contacts()) {
        *o = if c { 1.0 } else { 0.0 };
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub control_dt: f64,
    pub srb_dt: f64,
    pub fullbody_dt: f64,
    pub dt_min_fraction: f64,
    /// GRF per unit action, as a fraction of body weight.
    pub grf_scale: f64,
    /// Per-axis GRF bound, in body weights.
    pub grf_bound: f64,
    /// Residual per unit action (m).
    pub residual_scale: f64,
    pub residual_bound: f64,
    pub workspace_radius: f64,
    pub contact: ContactParams,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            control_dt: CONTROL_DT,
            srb_dt: 0.002,
            fullbody_dt: 0.002,
            dt_min_fraction: DEFAULT_DT_MIN_FRACTION,
            grf_scale: 0.25,
            grf_bound: 3.0,
            residual_scale: 0.05,
            residual_bound: 0.15,
            workspace_radius: 0.36,
            contact: ContactParams::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("control_dt", self.control_dt),
            ("srb_dt", self.srb_dt),
            ("fullbody_dt", self.fullbody_dt),
            ("grf_scale", self.grf_scale),
            ("grf_bound", self.grf_bound),
            ("residual_scale", self.residual_scale),
            ("residual_bound", self.residual_bound),
            ("workspace_radius", self.workspace_radius),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::invalid("environment config", format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.dt_min_fraction > 0.0 && self.dt_min_fraction <= 1.0) {
            return Err(Error::invalid("environment config", "dt_min_fraction must lie in (0, 1]"));
        }
        self.contact.validate()
    }
}

/// The full robot plus the rigid body it is lumped into.
#[derive(Debug, Clone)]
pub struct Robot {
    pub full: ArticulatedModel,
    pub srb: SrbModel,
    /// Composite COM at the nominal pose, base frame. Both worlds report
    /// position and velocity of this trunk-fixed point.
    pub com_offset: Vec3,
    /// Nominal foot soles relative to that point, base frame.
    pub nominal_feet: [Vec3; 4],
}

impl Robot {
    pub fn new(full: ArticulatedModel, cfg: &EnvConfig) -> Result<Self> {
        let comp = full.composite_nominal();
        let hips = full.hip_positions_nominal();
        let mut s = full.nominal_state();
        s.base_pos = Vec3::zeros();
        let kin = Kinematics::positions(&full, &s);
        let nominal_feet =
            std::array::from_fn(|leg| kin.foot_position(&full, leg) - Z_AXIS * full.foot_radius - comp.com);
        let srb = SrbModel {
            mass: comp.mass,
            inertia_body: Inertia3::new(comp.inertia)?,
            hip_offsets: hips.map(|h| h - comp.com),
            foot_radius: full.foot_radius,
            workspace_radius: cfg.workspace_radius,
            mu: cfg.contact.mu,
            gravity: full.gravity,
        };
        srb.validate()?;
        Ok(Robot { full, srb, com_offset: comp.com, nominal_feet })
    }

    pub fn weight(&self) -> f64 {
        self.srb.mass * self.srb.gravity.norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dynamics {
    Srb,
    /// Articulated robot at homotopy parameter λ (1 is the full model).
    FullBody { lambda: f64 },
}

impl Dynamics {
    pub fn lambda(&self) -> Option<f64> {
        match self {
            Dynamics::Srb => None,
            Dynamics::FullBody { lambda } => Some(*lambda),
        }
    }
}

#[derive(Debug, Clone)]
enum Sim {
    Srb(SrbState),
    Full { model: Box<ArticulatedModel>, state: ArticulatedState, dt: f64, substeps: usize },
}

/// Decoded action in physical units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalAction {
    pub grf: [Vec3; 4],
    pub residual: [Vec3; 4],
}

/// Body-level view of either world.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyState {
    pub t: f64,
    pub p: Vec3,
    pub v: Vec3,
    pub rot: Rot3,
    pub w: Vec3,
    /// Foot soles, world frame.
    pub feet: [Vec3; 4],
    pub contact: [bool; 4],
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub breakdown: RewardBreakdown,
    pub inputs: RewardInputs,
    pub done: bool,
    pub fault: Option<String>,
}

/// End-of-episode summary used by evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeOutcome {
    pub completed: bool,
    pub fault: bool,
    pub final_height: f64,
    pub uprightness: f64,
    pub mean_tracking_error: Option<f64>,
    pub success: bool,
}

pub struct MotionEnv {
    task: Arc<MotionTask>,
    robot: Arc<Robot>,
    cfg: EnvConfig,
    dynamics: Dynamics,
    terrain: Terrain,
    rng: ChaCha8Rng,
    sim: Sim,
    steps: usize,
    episode_steps: usize,
    command: Command,
    fixed_command: Option<Command>,
    wrench: ExternalWrench,
    liftoff: [Vec3; 4],
    prev_stance: [bool; 4],
    contact: [bool; 4],
    prev_torque: [f64; NJ],
    history: HistoryBuffer,
    tracking_error_sum: f64,
    fault: Option<String>,
}

impl MotionEnv {
    pub fn new(
        task: Arc<MotionTask>,
        robot: Arc<Robot>,
        cfg: EnvConfig,
        dynamics: Dynamics,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        let terrain = match task.wall_x {
            Some(x) => Terrain::with_wall(0.0, x),
            None => Terrain::flat(0.0),
        };
        let episode_steps = (task.duration / cfg.control_dt).round() as usize;
        let history = HistoryBuffer::new(HISTORY_LEN, history_frame_dim(&task));
        let sim = Sim::Srb(SrbState::standing(&robot.srb, 0.0, 0.0));
        let mut env = MotionEnv {
            task,
            robot,
            cfg,
            dynamics,
            terrain,
            rng,
            sim,
            steps: 0,
            episode_steps,
            command: Command::default(),
            fixed_command: None,
            wrench: ExternalWrench::default(),
            liftoff: [Vec3::zeros(); 4],
            prev_stance: [true; 4],
            contact: [false; 4],
            prev_torque: [0.0; NJ],
            history,
            tracking_error_sum: 0.0,
            fault: None,
        };
        env.set_dynamics(dynamics)?;
        env.reset();
        Ok(env)
    }

    pub fn task(&self) -> &MotionTask {
        &self.task
    }

    pub fn robot(&self) -> &Robot {
        &self.robot
    }

    pub fn dynamics(&self) -> Dynamics {
        self.dynamics
    }

    pub fn obs_dim(&self) -> usize {
        obs_dim(&self.task)
    }

    pub fn episode_steps(&self) -> usize {
        self.episode_steps
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn time(&self) -> f64 {
        self.steps as f64 * self.cfg.control_dt
    }

    pub fn command(&self) -> Command {
        self.command
    }

    /// Physics step used at the current λ (the SRB step in the SRB world).
    pub fn sim_dt(&self) -> f64 {
        match &self.sim {
            Sim::Srb(_) => self.cfg.srb_dt,
            Sim::Full { dt, .. } => *dt,
        }
    }

    pub fn history(&self) -> &HistoryBuffer {
        &self.history
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn rng(&self) -> &ChaCha8Rng {
        &self.rng
    }

    /// Uses `cmd` for every following episode instead of sampling.
    pub fn set_fixed_command(&mut self, cmd: Option<Command>) {
        self.fixed_command = cmd;
        if let Some(c) = cmd {
            self.command = c;
        }
    }

    /// Constant trunk wrench applied for the rest of the run (full body only).
    pub fn set_wrench(&mut self, wrench: ExternalWrench) {
        self.wrench = wrench;
    }

    /// Switches world or λ. An articulated state carries over, so λ can
    /// change between rollouts without ending episodes.
    pub fn set_dynamics(&mut self, dynamics: Dynamics) -> Result<()> {
        match dynamics {
            Dynamics::Srb => {
                if !matches!(self.sim, Sim::Srb(_)) {
                    self.sim = Sim::Srb(SrbState::standing(&self.robot.srb, 0.0, 0.0));
                    self.steps = self.episode_steps;
                }
            }
            Dynamics::FullBody { lambda } => {
                let model = Box::new(interpolate_model(&self.robot.full, lambda)?);
                let dt_target = timestep_schedule(lambda, self.cfg.fullbody_dt, self.cfg.dt_min_fraction);
                let substeps = (self.cfg.control_dt / dt_target - 1e-9).ceil().max(1.0) as usize;
                let dt = self.cfg.control_dt / substeps as f64;
                self.sim = match std::mem::replace(&mut self.sim, Sim::Srb(SrbState::standing(&self.robot.srb, 0.0, 0.0))) {
                    Sim::Full { state, .. } => Sim::Full { model, state, dt, substeps },
                    Sim::Srb(_) => {
                        self.steps = self.episode_steps;
                        Sim::Full { state: model.nominal_state(), model, dt, substeps }
                    }
                };
            }
        }
        self.dynamics = dynamics;
        Ok(())
    }

    pub fn reset(&mut self) -> Vec<f64> {
        self.steps = 0;
        self.fault = None;
        self.tracking_error_sum = 0.0;
        self.prev_torque = [0.0; NJ];
        self.history.clear();
        self.command = match (&self.fixed_command, &self.task.command) {
            (Some(c), _) => *c,
            (None, Some(ranges)) => ranges.sample(&mut self.rng),
            (None, None) => Command::default(),
        };
        let robot = self.robot.clone();
        match &mut self.sim {
            Sim::Srb(state) => {
                let p = Vec3::new(0.0, 0.0, robot.full.nominal_base_height + robot.com_offset.z);
                let feet = robot.nominal_feet.map(|f| self.terrain.project_outside(&(p + f)));
                *state = SrbState { p, v: Vec3::zeros(), rot: Rot3::identity(), w: Vec3::zeros(), feet, t: 0.0 };
            }
            Sim::Full { model, state, .. } => *state = model.nominal_state(),
        }
        let body = self.body_state();
        self.contact = body.contact;
        self.liftoff = body.feet;
        self.prev_stance = plan_query(&self.task.plan, 0.0).stance;
        if self.is_full() {
            let frame = self.history_frame(&body);
            self.history.push(&frame);
        }
        self.observe_body(&body)
    }

    pub fn is_full(&self) -> bool {
        matches!(self.sim, Sim::Full { .. })
    }

    /// Articulated state, when in the full-body world.
    pub fn articulated_state(&self) -> Option<&ArticulatedState> {
        match &self.sim {
            Sim::Full { state, .. } => Some(state),
            Sim::Srb(_) => None,
        }
    }

    pub fn articulated_model(&self) -> Option<&ArticulatedModel> {
        match &self.sim {
            Sim::Full { model, .. } => Some(model),
            Sim::Srb(_) => None,
        }
    }

    pub fn body_state(&self) -> BodyState {
        let t = self.time();
        match &self.sim {
            Sim::Srb(s) => BodyState {
                t,
                p: s.p,
                v: s.v,
                rot: s.rot,
                w: s.w,
                feet: s.feet,
                contact: std::array::from_fn(|i| {
                    crate::srb_env::detect_contact(&s.feet[i], self.robot.srb.foot_radius, &self.terrain)
                }),
            },
            Sim::Full { model, state, .. } => {
                let kin = Kinematics::positions(model, state);
                let arm = state.base_rot.rotate(&self.robot.com_offset);
                let w = state.base_ang_vel();
                let feet: [Vec3; 4] = std::array::from_fn(|leg| kin.foot_position(model, leg));
                BodyState {
                    t,
                    p: state.base_pos + arm,
                    v: state.base_lin_vel() + w.cross(&arm),
                    rot: state.base_rot,
                    w,
                    feet: feet.map(|f| f - Z_AXIS * model.foot_radius),
                    contact: feet.map(|f| self.terrain.nearest(&f).0 < model.foot_radius),
                }
            }
        }
    }

    /// Observation with simulator-true velocity and contacts.
    pub fn observe(&self) -> Vec<f64> {
        self.observe_body(&self.body_state())
    }

    fn observe_body(&self, b: &BodyState) -> Vec<f64> {
        let mut o = Vec::with_capacity(self.obs_dim());
        o.extend_from_slice(b.rot.inverse_rotate(&(-Z_AXIS)).as_slice());
        o.extend_from_slice(b.rot.inverse_rotate(&b.v).as_slice());
        o.extend_from_slice(b.rot.inverse_rotate(&b.w).as_slice());
        for f in &b.feet {
            o.extend_from_slice(b.rot.inverse_rotate(&(f - b.p)).as_slice());
        }
        o.extend(b.contact.iter().map(|c| if *c { 1.0 } else { 0.0 }));
        let phase = plan_query(&self.task.plan, b.t).phase * std::f64::consts::TAU;
        o.push(phase.sin());
        o.push(phase.cos());
        if self.task.is_tracking() {
            o.extend_from_slice(&self.command.as_array());
        }
        o
    }

    /// Estimator training labels: base-frame velocity and contacts.
    pub fn privileged_labels(&self) -> (Vec3, [f64; 4]) {
        let b = self.body_state();
        (b.rot.inverse_rotate(&b.v), b.contact.map(|c| if c { 1.0 } else { 0.0 }))
    }

    fn history_frame(&self, b: &BodyState) -> Vec<f64> {
        let mut f = Vec::with_capacity(self.history.frame_dim());
        if let Sim::Full { state, .. } = &self.sim {
            f.extend_from_slice(&state.joints);
            f.extend_from_slice(&state.joint_vel());
        } else {
            f.extend_from_slice(&[0.0; 2 * NJ]);
        }
        f.extend_from_slice(&self.prev_torque);
        let obs = self.observe_body(b);
        f.extend_from_slice(&obs[obs_layout::GRAVITY]);
        f.extend_from_slice(&obs[obs_layout::ANG_VEL]);
        f.extend_from_slice(&obs[obs_layout::FEET]);
        f.extend_from_slice(&obs[obs_layout::PHASE]);
        if self.task.is_tracking() {
            f.extend_from_slice(&obs[obs_layout::COMMAND]);
        }
        f
    }

    pub fn decode_action(&self, a: &[f64]) -> PhysicalAction {
        let weight = self.robot.weight();
        let gb = self.cfg.grf_bound * weight;
        let rb = self.cfg.residual_bound;
        PhysicalAction {
            grf: std::array::from_fn(|i| {
                let f = Vec3::new(a[3 * i], a[3 * i + 1], a[3 * i + 2] + 1.0) * (self.cfg.grf_scale * weight);
                f.map(|x| x.clamp(-gb, gb))
            }),
            residual: std::array::from_fn(|i| {
                let j = 12 + 3 * i;
                (Vec3::new(a[j], a[j + 1], a[j + 2]) * self.cfg.residual_scale).map(|x| x.clamp(-rb, rb))
            }),
        }
    }

    /// World velocity command (heading frame rotated by the current yaw).
    fn world_command(&self, rot: &Rot3) -> Vec3 {
        let (s, c) = crate::geom::yaw_of(rot).sin_cos();
        let v = self.command.velocity();
        Vec3::new(c * v.x - s * v.y, s * v.x + c * v.y, 0.0)
    }

    /// Nominal foot sole when entering keyframe `next` from the phase
    /// `current`: hip offsets of the `next` orientation placed at the
    /// `current` position target, pushed down the body z axis onto the
    /// first terrain surface.
    fn keyframe_foot(&self, current: usize, next: usize, leg: usize) -> Vec3 {
        let frames = &self.task.keyframes.frames;
        let rot = frames[next].orientation.representative();
        let hip = frames[current].p_target + rot.rotate(&self.robot.srb.hip_offsets[leg]);
        let dir = -rot.axis(2);
        let mut best: Option<f64> = None;
        for h in &self.terrain.planes {
            let dn = dir.dot(&h.normal);
            let sd = h.signed_distance(&hip);
            if dn < -1e-9 && sd >= 0.0 {
                let s = -sd / dn;
                best = Some(best.map_or(s, |b: f64| b.min(s)));
            }
        }
        let reach = self.robot.nominal_feet[leg].z.abs();
        hip + dir * best.unwrap_or(reach).min(self.cfg.workspace_radius)
    }

    fn swing_targets(&self, b: &BodyState, plan: &PlanInfo, act: &PhysicalAction) -> [Vec3; 4] {
        let stance_duration = match self.task.plan {
            ContactPlan::Periodic { stance, .. } => stance,
            ContactPlan::Intervals { .. } => 0.0,
        };
        let v_cmd = self.world_command(&b.rot);
        let keys = self.task.keyframe_at(b.t).map(|(i, _)| (i, (i + 1).min(self.task.keyframes.len() - 1)));
        std::array::from_fn(|leg| {
            let hip = b.p + b.rot.rotate(&self.robot.srb.hip_offsets[leg]);
            if plan.stance[leg] {
                return b.feet[leg];
            }
            let ctx = SwingContext {
                s: plan.swing_phase[leg],
                liftoff: self.liftoff[leg],
                rot: b.rot,
                hip_world: hip,
                v: b.v,
                v_cmd,
                stance_duration,
                ground_height: self.terrain.ground_height,
                upcoming_foot: keys.map(|(k, next)| self.keyframe_foot(k, next, leg)),
            };
            let target = nominal_swing(&self.task.swing, &ctx) + b.rot.rotate(&act.residual[leg]);
            let clipped = clip_workspace(&target, &hip, self.cfg.workspace_radius, self.terrain.ground_height);
            self.terrain.project_outside(&clipped)
        })
    }

    /// Advances one control step. Faults end the episode rather than
    /// erroring; only invalid inputs return `Err`.
    pub fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if action.len() != ACTION_DIM {
            return Err(Error::invalid("action", format!("expected {ACTION_DIM} values, got {}", action.len())));
        }
        if self.steps >= self.episode_steps || self.fault.is_some() {
            return Err(Error::invalid("step", "episode is over; call reset"));
        }
        let b0 = self.body_state();
        let plan = plan_query(&self.task.plan, b0.t);
        for leg in 0..4 {
            if self.prev_stance[leg] && !plan.stance[leg] {
                self.liftoff[leg] = b0.feet[leg];
            }
        }
        self.prev_stance = plan.stance;

        let mut act = self.decode_action(action);
        for leg in 0..4 {
            let (_, normal) = self.terrain.nearest(&b0.feet[leg]);
            act.grf[leg] = if plan.stance[leg] && b0.contact[leg] {
                clip_friction_cone(&act.grf[leg], self.cfg.contact.mu, &normal)
            } else {
                Vec3::zeros()
            };
            if plan.stance[leg] {
                act.residual[leg] = Vec3::zeros();
            }
        }
        let targets = self.swing_targets(&b0, &plan, &act);

        let fault = match self.simulate(&act, &targets, &plan.stance) {
            Ok(()) => None,
            Err(Error::Fault(msg)) => Some(msg),
            Err(e) => return Err(e),
        };
        self.steps += 1;
        let b1 = self.body_state();
        self.contact = b1.contact;
        let v_head = heading_velocity(&b1.rot, &b1.v);
        let cmd_v = self.command.velocity();
        self.tracking_error_sum += ((v_head - cmd_v).xy()).norm();

        let inputs = RewardInputs {
            t: b1.t,
            p: b1.p,
            v: b1.v,
            rot: b1.rot,
            w: b1.w,
            grf: act.grf,
            residual: act.residual,
            v_cmd: cmd_v,
            yaw_rate_cmd: self.command.yaw_rate,
            keyframe: self.task.keyframe_at(b1.t).map(|(_, k)| (k.p_target, k.orientation)),
        };
        let breakdown = reward_eval(&self.task.rewards, &inputs);
        if self.is_full() {
            let frame = self.history_frame(&b1);
            self.history.push(&frame);
        }
        self.fault = fault.clone();
        let done = fault.is_some() || self.steps >= self.episode_steps;
        Ok(StepResult { obs: self.observe_body(&b1), reward: breakdown.total, breakdown, inputs, done, fault })
    }

    fn simulate(&mut self, act: &PhysicalAction, targets: &[Vec3; 4], stance: &[bool; 4]) -> Result<()> {
        match &mut self.sim {
            Sim::Srb(state) => {
                let n = (self.cfg.control_dt / self.cfg.srb_dt).round().max(1.0) as usize;
                let dt = self.cfg.control_dt / n as f64;
                let cmd = SrbCommand { grf: act.grf, foot_targets: *targets };
                for _ in 0..n {
                    let (next, _) = srb_step(state, &self.robot.srb, &self.terrain, &cmd, stance, dt)?;
                    *state = next;
                    srb_collision(&self.robot, state, &self.terrain)?;
                }
                Ok(())
            }
            Sim::Full { model, state, dt, substeps } => {
                let centres = targets.map(|t| t + Z_AXIS * model.foot_radius);
                for _ in 0..*substeps {
                    let kin = Kinematics::compute(model, state);
                    let contact: [bool; 4] = std::array::from_fn(|leg| {
                        self.terrain.nearest(&kin.foot_position(model, leg)).0 < model.foot_radius
                    });
                    let actuation = convert_actions(model, state, &kin, &act.grf, stance, &contact, &centres);
                    self.prev_torque = actuation.torques;
                    let (next, _) =
                        fullbody_step(model, state, &actuation, &self.wrench, &self.terrain, &self.cfg.contact, *dt)?;
                    *state = next;
                }
                Ok(())
            }
        }
    }

    pub fn outcome(&self) -> EpisodeOutcome {
        let b = self.body_state();
        let completed = self.steps >= self.episode_steps && self.fault.is_none();
        let uprightness = b.rot.axis(2).dot(&Z_AXIS);
        let spec = &self.task.success;
        let mean_tracking_error =
            self.task.is_tracking().then(|| self.tracking_error_sum / self.steps.max(1) as f64);
        let success = completed
            && b.p.z > spec.min_height
            && uprightness > spec.min_uprightness
            && mean_tracking_error.is_none_or(|e| e < spec.max_tracking_error);
        EpisodeOutcome {
            completed,
            fault: self.fault.is_some(),
            final_height: b.p.z,
            uprightness,
            mean_tracking_error,
            success,
        }
    }
}

/// Faults when a trunk box corner enters the terrain.
fn srb_collision(robot: &Robot, s: &SrbState, terrain: &Terrain) -> Result<()> {
    let base = s.p - s.rot.rotate(&robot.com_offset);
    let h = robot.full.trunk_half_extents;
    for k in 0..8 {
        let corner = Vec3::new(
            if k & 1 == 0 { h.x } else { -h.x },
            if k & 2 == 0 { h.y } else { -h.y },
            if k & 4 == 0 { h.z } else { -h.z },
        );
        if terrain.nearest(&(base + s.rot.rotate(&corner))).0 < 0.0 {
            return Err(Error::Fault(format!("trunk hit the terrain at t = {:.3}", s.t)));
        }
    }
    Ok(())
}

/// Observation dimension and its slices, for diagnostics.
pub fn describe_obs(task: &MotionTask) -> Vec<(&'static str, Range<usize>)> {
    let mut out = vec![
        ("gravity", obs_layout::GRAVITY),
        ("lin_vel", obs_layout::LIN_VEL),
        ("ang_vel", obs_layout::ANG_VEL),
        ("feet", obs_layout::FEET),
        ("contact", obs_layout::CONTACT),
        ("phase", obs_layout::PHASE),
    ];
    if task.is_tracking() {
        out.push(("command", obs_layout::COMMAND));
    }
    out
}

#[cfg(test)]
mod tests;
