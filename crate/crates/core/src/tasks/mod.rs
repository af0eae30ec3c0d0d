//! Motion tasks: contact plans, nominal swing paths, keyframes, commands and
//! reward terms, loaded from TOML task files.

mod keyframe;
mod plan;
mod reward;
mod swing;

pub use keyframe::{keyframe_query, Keyframe, KeyframeTable, OrientationTarget};
pub use plan::{plan_query, ContactPlan, PlanInfo};
pub use reward::{
    compose_total, exp_reward, heading_velocity, linear_reward, reward_eval, Form, PhaseFilter, Quantity,
    RewardBreakdown, RewardInputs, RewardSpec, RewardTerm, Sign,
};
pub use swing::{nominal_swing, raibert_target, wall_eta, SwingContext, SwingSpec};

use std::path::Path;

use rand::Rng;
use serde::Deserialize;
use toml::Spanned;

use crate::error::{Error, Result};
use crate::geom::Vec3;

/// Leg order used everywhere: front-left, front-right, rear-left, rear-right.
pub const LEG_NAMES: [&str; 4] = ["FL", "FR", "RL", "RR"];

pub const BUILTIN_TASKS: [(&str, &str); 6] = [
    ("trot", include_str!("../../assets/tasks/trot.toml")),
    ("backflip", include_str!("../../assets/tasks/backflip.toml")),
    ("sideflip", include_str!("../../assets/tasks/sideflip.toml")),
    ("yawspin", include_str!("../../assets/tasks/yawspin.toml")),
    ("wall_turn", include_str!("../../assets/tasks/wall_turn.toml")),
    ("wall_backflip", include_str!("../../assets/tasks/wall_backflip.toml")),
];

/// Uniform ranges for velocity commands of tracking tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandRanges {
    pub vx: (f64, f64),
    pub vy: (f64, f64),
    pub yaw_rate: (f64, f64),
    /// Fixed commands used for evaluation, `[vx, vy, yaw_rate]`.
    pub eval: Vec<[f64; 3]>,
}

/// Heading-frame velocity command.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Command {
    pub vx: f64,
    pub vy: f64,
    pub yaw_rate: f64,
}

impl Command {
    pub fn velocity(&self) -> Vec3 {
        Vec3::new(self.vx, self.vy, 0.0)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.vx, self.vy, self.yaw_rate]
    }
}

impl CommandRanges {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Command {
        let pick = |rng: &mut R, (lo, hi): (f64, f64)| if hi > lo { rng.random_range(lo..=hi) } else { lo };
        Command { vx: pick(rng, self.vx), vy: pick(rng, self.vy), yaw_rate: pick(rng, self.yaw_rate) }
    }
}

/// Episode success test used by evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuccessSpec {
    pub min_height: f64,
    /// Minimum of `R_z · ẑ` at the end of the episode.
    pub min_uprightness: f64,
    /// Mean velocity-tracking error bound, tracking tasks only.
    pub max_tracking_error: f64,
}

impl Default for SuccessSpec {
    fn default() -> Self {
        SuccessSpec { min_height: 0.15, min_uprightness: 0.7, max_tracking_error: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionTask {
    pub name: String,
    /// Episode length (s).
    pub duration: f64,
    pub plan: ContactPlan,
    /// Named phases used by phase-filtered reward terms. Keyframe names
    /// are phases too.
    pub phases: Vec<PhaseFilter>,
    pub swing: SwingSpec,
    pub keyframes: KeyframeTable,
    pub rewards: RewardSpec,
    pub command: Option<CommandRanges>,
    pub success: SuccessSpec,
    pub wall_x: Option<f64>,
}

impl MotionTask {
    /// Loads a bundled task by name, or a task file by path.
    pub fn load(name_or_path: &str) -> Result<Self> {
        if let Some((_, text)) = BUILTIN_TASKS.iter().find(|(n, _)| *n == name_or_path) {
            return parse_task(text, name_or_path);
        }
        let path = Path::new(name_or_path);
        if !path.exists() {
            let names: Vec<&str> = BUILTIN_TASKS.iter().map(|(n, _)| *n).collect();
            return Err(Error::config(
                name_or_path,
                format!("no such file, and not a bundled task (bundled: {})", names.join(", ")),
            ));
        }
        let text = std::fs::read_to_string(path)?;
        parse_task(&text, name_or_path)
    }

    pub fn builtin(name: &str) -> Self {
        parse_task(Self::builtin_text(name), name).expect("bundled task is valid")
    }

    /// Source text of a bundled task. Panics on unknown names.
    pub fn builtin_text(name: &str) -> &'static str {
        BUILTIN_TASKS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t).expect("unknown bundled task")
    }

    pub fn is_tracking(&self) -> bool {
        self.command.is_some()
    }

    pub fn keyframe_at(&self, t: f64) -> Option<(usize, &Keyframe)> {
        if self.keyframes.is_empty() {
            None
        } else {
            let i = self.keyframes.index_at(t);
            Some((i, &self.keyframes.frames[i]))
        }
    }

    pub fn phase(&self, name: &str) -> Option<&PhaseFilter> {
        self.phases.iter().find(|p| p.name == name)
    }
}

// ---- file format ----

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskFile {
    name: String,
    duration: f64,
    plan: PlanEntry,
    #[serde(default)]
    phase: Vec<PhaseEntry>,
    swing: SwingEntry,
    #[serde(default)]
    keyframe: Vec<Spanned<KeyframeEntry>>,
    reward: Vec<Spanned<RewardEntry>>,
    command: Option<CommandEntry>,
    #[serde(default)]
    success: Option<SuccessEntry>,
    #[serde(default)]
    terrain: Option<TerrainEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum PlanEntry {
    Periodic { stance: f64, swing: f64, offsets: [f64; 4] },
    Intervals { air: [Vec<[f64; 2]>; 4] },
    Keyframes,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PhaseEntry {
    name: String,
    start: f64,
    end: f64,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
enum SwingEntry {
    GaitRaibert {
        clearance: f64,
        #[serde(default = "default_raibert_gain")]
        raibert_gain: f64,
    },
    FlipTuck {
        mid: [f64; 3],
        end: [f64; 3],
    },
    WallBlend {
        local: [[f64; 3]; 3],
    },
}

fn default_raibert_gain() -> f64 {
    0.03
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct KeyframeEntry {
    name: String,
    duration: f64,
    p: [f64; 3],
    rx: Option<[f64; 3]>,
    rz: Option<[f64; 3]>,
    #[serde(default = "all_stance")]
    stance: [bool; 4],
}

fn all_stance() -> [bool; 4] {
    [true; 4]
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RewardEntry {
    name: String,
    sign: String,
    form: String,
    quantity: String,
    a: Option<f64>,
    b: Option<f64>,
    u: Option<f64>,
    l: Option<f64>,
    target: Option<toml::Value>,
    axis: Option<[f64; 3]>,
    body_axis: Option<String>,
    phase: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CommandEntry {
    vx: [f64; 2],
    vy: [f64; 2],
    yaw_rate: [f64; 2],
    #[serde(default)]
    eval: Vec<[f64; 3]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SuccessEntry {
    min_height: Option<f64>,
    min_uprightness: Option<f64>,
    max_tracking_error: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TerrainEntry {
    wall_x: Option<f64>,
}

fn v3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|b| *b == b'\n').count() + 1
}

/// Parses and validates a task file. Errors name the offending table and
/// field together with its line.
pub fn parse_task(text: &str, source_name: &str) -> Result<MotionTask> {
    let file: TaskFile = toml::from_str(text).map_err(|e| Error::config(source_name, e.to_string()))?;
    let cfg = |msg: String| Error::config(source_name, msg);

    if !(file.duration > 0.0) {
        return Err(cfg(format!("duration: must be positive, got {}", file.duration)));
    }

    let mut frames = Vec::with_capacity(file.keyframe.len());
    for entry in &file.keyframe {
        let line = line_of(text, entry.span().start);
        let k = entry.get_ref();
        if !(k.duration > 0.0) {
            return Err(cfg(format!("keyframe '{}' (line {line}): duration must be positive", k.name)));
        }
        let unit = |field: &str, a: Option<[f64; 3]>| -> Result<Option<Vec3>> {
            match a {
                None => Ok(None),
                Some(a) => {
                    let v = v3(a);
                    if (v.norm() - 1.0).abs() > 1e-9 {
                        Err(cfg(format!("keyframe '{}' (line {line}): {field} must be a unit vector", k.name)))
                    } else {
                        Ok(Some(v))
                    }
                }
            }
        };
        let orientation = OrientationTarget { x: unit("rx", k.rx)?, z: unit("rz", k.rz)? };
        if let (Some(x), Some(z)) = (orientation.x, orientation.z) {
            if x.dot(&z).abs() > 1e-9 {
                return Err(cfg(format!("keyframe '{}' (line {line}): rx and rz must be orthogonal", k.name)));
            }
        }
        frames.push(Keyframe { name: k.name.clone(), duration: k.duration, p_target: v3(k.p), orientation, stance: k.stance });
    }
    let keyframes = KeyframeTable { frames };

    let plan = match file.plan {
        PlanEntry::Periodic { stance, swing, offsets } => ContactPlan::Periodic { stance, swing, offsets },
        PlanEntry::Intervals { air } => ContactPlan::Intervals {
            duration: file.duration,
            air: air.map(|list| list.into_iter().map(|[a, b]| (a, b)).collect()),
        },
        PlanEntry::Keyframes => {
            if keyframes.is_empty() {
                return Err(cfg("plan: kind = \"keyframes\" needs [[keyframe]] entries".into()));
            }
            if (keyframes.total_duration() - file.duration).abs() > 1e-9 {
                return Err(cfg(format!(
                    "plan: keyframe durations sum to {} but duration is {}",
                    keyframes.total_duration(),
                    file.duration
                )));
            }
            ContactPlan::Intervals { duration: file.duration, air: keyframes.air_intervals() }
        }
    };
    plan.validate().map_err(|e| cfg(format!("plan: {e}")))?;

    let mut phases: Vec<PhaseFilter> = Vec::new();
    let mut add_window = |name: &str, a: f64, b: f64| match phases.iter_mut().find(|p| p.name == name) {
        Some(p) => p.windows.push((a, b)),
        None => phases.push(PhaseFilter { name: name.to_string(), windows: vec![(a, b)] }),
    };
    for p in &file.phase {
        if !(p.start < p.end) {
            return Err(cfg(format!("phase '{}': start must precede end", p.name)));
        }
        add_window(&p.name, p.start, p.end);
    }
    let mut t = 0.0;
    for k in &keyframes.frames {
        add_window(&k.name, t, t + k.duration);
        t += k.duration;
    }

    let swing = match file.swing {
        SwingEntry::GaitRaibert { clearance, raibert_gain } => SwingSpec::GaitRaibert { clearance, raibert_gain },
        SwingEntry::FlipTuck { mid, end } => SwingSpec::FlipTuck { mid: v3(mid), end: v3(end) },
        SwingEntry::WallBlend { local } => SwingSpec::WallBlend { local: local.map(v3) },
    };
    if matches!(swing, SwingSpec::WallBlend { .. }) && keyframes.is_empty() {
        return Err(cfg("swing: mode = \"wall_blend\" needs [[keyframe]] entries".into()));
    }

    let mut terms = Vec::with_capacity(file.reward.len());
    for entry in &file.reward {
        let line = line_of(text, entry.span().start);
        terms.push(parse_reward(entry.get_ref(), &phases, !keyframes.is_empty()).map_err(|m| {
            cfg(format!("reward '{}' (line {line}): {m}", entry.get_ref().name))
        })?);
    }
    if terms.iter().all(|t| t.sign != Sign::Neg) {
        return Err(cfg("reward: at least one negative term is required (the total is proportional to their sum)".into()));
    }

    let command = match file.command {
        None => None,
        Some(c) => {
            for (field, r) in [("vx", c.vx), ("vy", c.vy), ("yaw_rate", c.yaw_rate)] {
                if !(r[0] <= r[1]) {
                    return Err(cfg(format!("command.{field}: lower bound exceeds upper bound")));
                }
            }
            let eval = if c.eval.is_empty() { default_eval_commands(&c) } else { c.eval };
            Some(CommandRanges {
                vx: (c.vx[0], c.vx[1]),
                vy: (c.vy[0], c.vy[1]),
                yaw_rate: (c.yaw_rate[0], c.yaw_rate[1]),
                eval,
            })
        }
    };

    let mut success = SuccessSpec::default();
    if let Some(s) = file.success {
        success.min_height = s.min_height.unwrap_or(success.min_height);
        success.min_uprightness = s.min_uprightness.unwrap_or(success.min_uprightness);
        success.max_tracking_error = s.max_tracking_error.unwrap_or(success.max_tracking_error);
    }

    Ok(MotionTask {
        name: file.name,
        duration: file.duration,
        plan,
        phases,
        swing,
        keyframes,
        rewards: RewardSpec { terms },
        command,
        success,
        wall_x: file.terrain.and_then(|t| t.wall_x),
    })
}

fn default_eval_commands(c: &CommandEntry) -> Vec<[f64; 3]> {
    // midpoints between the range centre and each bound, off the usual
    // training sample lattice
    let mid = |r: [f64; 2], f: f64| r[0] + (r[1] - r[0]) * f;
    vec![
        [mid(c.vx, 0.7), mid(c.vy, 0.5), mid(c.yaw_rate, 0.5)],
        [mid(c.vx, 0.3), mid(c.vy, 0.5), mid(c.yaw_rate, 0.5)],
        [mid(c.vx, 0.55), mid(c.vy, 0.75), mid(c.yaw_rate, 0.5)],
        [mid(c.vx, 0.55), mid(c.vy, 0.25), mid(c.yaw_rate, 0.5)],
        [mid(c.vx, 0.55), mid(c.vy, 0.5), mid(c.yaw_rate, 0.8)],
        [mid(c.vx, 0.55), mid(c.vy, 0.5), mid(c.yaw_rate, 0.2)],
    ]
}

fn parse_reward(
    e: &RewardEntry,
    phases: &[PhaseFilter],
    has_keyframes: bool,
) -> std::result::Result<RewardTerm, String> {
    let sign = match e.sign.as_str() {
        "pos" => Sign::Pos,
        "neg" => Sign::Neg,
        other => return Err(format!("sign: expected \"pos\" or \"neg\", got \"{other}\"")),
    };
    let need = |field: &str, v: Option<f64>| v.ok_or_else(|| format!("{field}: missing"));
    let a = need("a", e.a)?;
    if !(a > 0.0) {
        return Err(format!("a: must be positive, got {a}"));
    }
    let form = match e.form.as_str() {
        "exp" => {
            let b = need("b", e.b)?;
            if !(b > 0.0) {
                return Err(format!("b: must be positive, got {b}"));
            }
            Form::Exp { a, b }
        }
        "linear" => {
            let (u, l) = (need("u", e.u)?, need("l", e.l)?);
            if !(u > l) {
                return Err(format!("u, l: need u > l, got u = {u}, l = {l}"));
            }
            Form::Linear { a, u, l }
        }
        other => return Err(format!("form: expected \"exp\" or \"linear\", got \"{other}\"")),
    };
    let scalar_target = || -> std::result::Result<f64, String> {
        match &e.target {
            Some(toml::Value::Float(x)) => Ok(*x),
            Some(toml::Value::Integer(x)) => Ok(*x as f64),
            _ => Err("target: expected a number".into()),
        }
    };
    let vector_target = || -> std::result::Result<Vec3, String> {
        match &e.target {
            Some(toml::Value::Array(items)) if items.len() == 3 => {
                let mut v = Vec3::zeros();
                for (k, item) in items.iter().enumerate() {
                    v[k] = match item {
                        toml::Value::Float(x) => *x,
                        toml::Value::Integer(x) => *x as f64,
                        _ => return Err("target: expected three numbers".into()),
                    };
                }
                Ok(v)
            }
            _ => Err("target: expected three numbers".into()),
        }
    };
    let axis = || e.axis.map(v3).ok_or_else(|| "axis: missing".to_string());
    let quantity = match e.quantity.as_str() {
        "base_height" => Quantity::BaseHeight { target: scalar_target()? },
        "base_position" => Quantity::BasePosition { target: vector_target()? },
        "keyframe_position" | "keyframe_orientation" if !has_keyframes => {
            return Err(format!("quantity: \"{}\" needs [[keyframe]] entries", e.quantity))
        }
        "keyframe_position" => Quantity::KeyframePosition,
        "keyframe_orientation" => Quantity::KeyframeOrientation,
        "body_axis" => {
            let index = match e.body_axis.as_deref() {
                Some("x") => 0,
                Some("y") => 1,
                Some("z") => 2,
                other => return Err(format!("body_axis: expected \"x\", \"y\" or \"z\", got {other:?}")),
            };
            Quantity::BodyAxis { axis: index, target: vector_target()? }
        }
        "lin_vel_error" => Quantity::LinVelError,
        "ang_vel_error" => Quantity::AngVelError,
        "ang_vel" => Quantity::AngVel,
        "ang_vel_off_axis" => Quantity::AngVelOffAxis { axis: axis()? },
        "ang_vel_along_axis" => Quantity::AngVelAlongAxis { axis: axis()? },
        "grf" => Quantity::Grf,
        "residual" => Quantity::Residual,
        other => return Err(format!("quantity: unknown selector \"{other}\"")),
    };
    if matches!(form, Form::Linear { .. }) && !quantity.is_scalar() {
        return Err(format!("form: \"linear\" needs a scalar quantity, \"{}\" is a vector", e.quantity));
    }
    let phase = match &e.phase {
        None => None,
        Some(name) => Some(
            phases
                .iter()
                .find(|p| &p.name == name)
                .cloned()
                .ok_or_else(|| format!("phase: no [[phase]] or [[keyframe]] named \"{name}\""))?,
        ),
    };
    Ok(RewardTerm { name: e.name.clone(), sign, form, quantity, phase })
}
