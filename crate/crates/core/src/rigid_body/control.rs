use super::{ArticulatedModel, ArticulatedState, FootJacobian, Kinematics, NJ};
use crate::geom::Vec3;

/// Task-space swing gains.
pub const KP_SWING: f64 = 500.0;
pub const KD_SWING: f64 = 5.0;

/// Joint-space PD servo evaluated by the integrator itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointPd {
    pub kp: f64,
    pub kd: f64,
    pub target: [f64; NJ],
}

/// Joint torques plus what the integrator needs to treat the swing PD
/// implicitly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Actuation {
    pub torques: [f64; NJ],
    /// Legs whose torque came from an unsaturated swing PD law.
    pub pd_legs: [bool; 4],
    pub swing_targets: [Vec3; 4],
    /// Added on top of `torques`, clamped per joint.
    pub joint_pd: Option<JointPd>,
}

impl Actuation {
    pub fn passive() -> Self {
        Actuation { torques: [0.0; NJ], pd_legs: [false; 4], swing_targets: [Vec3::zeros(); 4], joint_pd: None }
    }

    pub fn joint_servo(kp: f64, kd: f64, target: [f64; NJ]) -> Self {
        Actuation { joint_pd: Some(JointPd { kp, kd, target }), ..Self::passive() }
    }

    pub fn from_torques(torques: [f64; NJ]) -> Self {
        Actuation { torques, ..Self::passive() }
    }
}

/// Leg joint torques `J_legᵀ f` for a force `f` applied by the foot.
pub fn jacobian_transpose_torque(jacobian: &FootJacobian, dofs: [usize; 3], f: &Vec3) -> [f64; 3] {
    std::array::from_fn(|k| jacobian.column(dofs[k]).dot(f))
}

/// Maps a hybrid action to joint torques.
///
/// `grf` are the forces the ground should exert on the robot. A stance leg
/// in contact produces them by pushing with `−grf`; a stance leg without
/// contact is left limp; a swing leg tracks its world target with
/// task-space PD. Torques are clamped to the model limits.
pub fn convert_actions(
    model: &ArticulatedModel,
    state: &ArticulatedState,
    kin: &Kinematics,
    grf: &[Vec3; 4],
    stance: &[bool; 4],
    contact: &[bool; 4],
    swing_targets: &[Vec3; 4],
) -> Actuation {
    let mut out = Actuation { swing_targets: *swing_targets, ..Actuation::passive() };
    for leg in 0..4 {
        let dofs = model.leg_dofs(leg);
        let j = kin.foot_jacobian(model, leg);
        let tau = if stance[leg] {
            if !contact[leg] {
                continue;
            }
            jacobian_transpose_torque(&j, dofs, &(-grf[leg]))
        } else {
            let r = kin.foot_position(model, leg);
            let s = j * state.qd;
            let f = (swing_targets[leg] - r) * KP_SWING - s * KD_SWING;
            out.pd_legs[leg] = true;
            jacobian_transpose_torque(&j, dofs, &f)
        };
        for k in 0..3 {
            let lim = model.torque_limit[dofs[k] - 6];
            let clamped = tau[k].clamp(-lim, lim);
            if clamped != tau[k] {
                out.pd_legs[leg] = false;
            }
            out.torques[dofs[k] - 6] = clamped;
        }
    }
    out
}
