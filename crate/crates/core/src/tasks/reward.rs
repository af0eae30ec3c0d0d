use super::keyframe::OrientationTarget;
use crate::geom::{yaw_of, Rot3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Pos,
    Neg,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Form {
    /// `a·exp(−b‖x‖²)`
    Exp { a: f64, b: f64 },
    /// `a·max(min(x, u), l)` on a scalar `x`
    Linear { a: f64, u: f64, l: f64 },
}

/// What a reward term measures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Quantity {
    /// `p_z − target`
    BaseHeight { target: f64 },
    /// `p − target`
    BasePosition { target: Vec3 },
    /// `p − p_target` of the active keyframe
    KeyframePosition,
    /// `R_axis − target` for body axis 0, 1 or 2
    BodyAxis { axis: usize, target: Vec3 },
    /// Constrained axes of the active keyframe
    KeyframeOrientation,
    /// Heading-frame velocity minus the commanded velocity
    LinVelError,
    /// `w − (0, 0, yaw-rate command)`
    AngVelError,
    AngVel,
    /// `w − (αᵀw)α`
    AngVelOffAxis { axis: Vec3 },
    /// `αᵀw`
    AngVelAlongAxis { axis: Vec3 },
    /// Applied stance forces, all feet stacked
    Grf,
    /// Swing residuals, all feet stacked
    Residual,
}

impl Quantity {
    pub fn is_scalar(&self) -> bool {
        matches!(self, Quantity::BaseHeight { .. } | Quantity::AngVelAlongAxis { .. })
    }

    fn scalar(&self, x: &RewardInputs) -> f64 {
        match self {
            Quantity::BaseHeight { target } => x.p.z - target,
            Quantity::AngVelAlongAxis { axis } => axis.dot(&x.w),
            _ => self.norm_sq(x).sqrt(),
        }
    }

    fn norm_sq(&self, x: &RewardInputs) -> f64 {
        match self {
            Quantity::BaseHeight { target } => (x.p.z - target).powi(2),
            Quantity::BasePosition { target } => (x.p - target).norm_squared(),
            Quantity::KeyframePosition => x.keyframe.map_or(0.0, |(p, _)| (x.p - p).norm_squared()),
            Quantity::BodyAxis { axis, target } => (x.rot.axis(*axis) - target).norm_squared(),
            Quantity::KeyframeOrientation => x.keyframe.map_or(0.0, |(_, o)| o.error_sq(&x.rot)),
            Quantity::LinVelError => (heading_velocity(&x.rot, &x.v) - x.v_cmd).norm_squared(),
            Quantity::AngVelError => (x.w - Vec3::new(0.0, 0.0, x.yaw_rate_cmd)).norm_squared(),
            Quantity::AngVel => x.w.norm_squared(),
            Quantity::AngVelOffAxis { axis } => (x.w - axis * axis.dot(&x.w)).norm_squared(),
            Quantity::AngVelAlongAxis { axis } => axis.dot(&x.w).powi(2),
            Quantity::Grf => x.grf.iter().map(|f| f.norm_squared()).sum(),
            Quantity::Residual => x.residual.iter().map(|r| r.norm_squared()).sum(),
        }
    }
}

/// Velocity expressed in the yaw-only heading frame.
pub fn heading_velocity(rot: &Rot3, v: &Vec3) -> Vec3 {
    let (s, c) = yaw_of(rot).sin_cos();
    Vec3::new(c * v.x + s * v.y, -s * v.x + c * v.y, v.z)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardTerm {
    pub name: String,
    pub sign: Sign,
    pub form: Form,
    pub quantity: Quantity,
    /// The term is zero outside this phase.
    pub phase: Option<PhaseFilter>,
}

/// Named set of time windows `[start, end)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseFilter {
    pub name: String,
    pub windows: Vec<(f64, f64)>,
}

impl PhaseFilter {
    pub fn contains(&self, t: f64) -> bool {
        self.windows.iter().any(|(a, b)| *a <= t && t < *b)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RewardSpec {
    pub terms: Vec<RewardTerm>,
}

/// Body state, action and targets a reward is computed from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardInputs {
    pub t: f64,
    pub p: Vec3,
    pub v: Vec3,
    pub rot: Rot3,
    pub w: Vec3,
    /// Applied ground reaction forces; zero for feet that did not push.
    pub grf: [Vec3; 4],
    /// Swing residuals; zero for stance feet.
    pub residual: [Vec3; 4],
    /// Commanded velocity in the heading frame.
    pub v_cmd: Vec3,
    pub yaw_rate_cmd: f64,
    pub keyframe: Option<(Vec3, OrientationTarget)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardBreakdown {
    /// One value per term, in spec order; zero when phase-filtered.
    pub values: Vec<f64>,
    pub pos_sum: f64,
    pub neg_sum: f64,
    pub total: f64,
}

pub fn exp_reward(x_norm_sq: f64, a: f64, b: f64) -> f64 {
    a * (-b * x_norm_sq).exp()
}

pub fn linear_reward(x: f64, a: f64, u: f64, l: f64) -> f64 {
    a * x.min(u).max(l)
}

/// `(1 + Σ positive) · Σ negative`
pub fn compose_total(pos_sum: f64, neg_sum: f64) -> f64 {
    (1.0 + pos_sum) * neg_sum
}

impl RewardTerm {
    pub fn is_active(&self, t: f64) -> bool {
        self.phase.as_ref().is_none_or(|p| p.contains(t))
    }

    pub fn value(&self, x: &RewardInputs) -> f64 {
        if !self.is_active(x.t) {
            return 0.0;
        }
        match self.form {
            Form::Exp { a, b } => exp_reward(self.quantity.norm_sq(x), a, b),
            Form::Linear { a, u, l } => linear_reward(self.quantity.scalar(x), a, u, l),
        }
    }
}

pub fn reward_eval(spec: &RewardSpec, x: &RewardInputs) -> RewardBreakdown {
    let mut values = Vec::with_capacity(spec.terms.len());
    let (mut pos_sum, mut neg_sum) = (0.0, 0.0);
    for term in &spec.terms {
        let r = term.value(x);
        match term.sign {
            Sign::Pos => pos_sum += r,
            Sign::Neg => neg_sum += r,
        }
        values.push(r);
    }
    RewardBreakdown { values, pos_sum, neg_sum, total: compose_total(pos_sum, neg_sum) }
}
