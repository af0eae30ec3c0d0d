//! Articulated floating-base quadruped: kinematic tree, mass matrix and bias
//! forces, compliant foot contact, and conversion of hybrid GRF/foot-target
//! actions into joint torques.

mod contact;
mod control;
mod dynamics;
mod kinematics;
mod model_file;

pub use contact::{contact_force, ContactParams};
pub use control::{convert_actions, jacobian_transpose_torque, Actuation, JointPd, KD_SWING, KP_SWING};
pub use dynamics::{
    angular_momentum_about_com, bias_forces, check_collisions, forward_dynamics, forward_dynamics_locked,
    fullbody_step, kinetic_energy, mass_matrix, potential_energy, ExternalWrench, StepInfo,
};
pub use kinematics::Kinematics;
pub use model_file::{parse_model, DEFAULT_MODEL_TOML};

use nalgebra::{SMatrix, SVector};

use crate::error::{Error, Result};
use crate::geom::{composite_inertia, Composite, Inertia3, MassElement, Rot3, Vec3};

/// Number of generalized velocity coordinates: 6 base + 12 joints.
pub const NV: usize = 18;
pub const NJ: usize = 12;

pub type GenVec = SVector<f64, NV>;
pub type GenMat = SMatrix<f64, NV, NV>;
pub type FootJacobian = SMatrix<f64, 3, NV>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JointType {
    Floating,
    Revolute,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub name: String,
    pub parent: Option<usize>,
    pub joint: JointType,
    /// Joint axis in the joint frame (unit).
    pub axis: Vec3,
    /// Joint frame relative to the parent link frame.
    pub origin_xyz: Vec3,
    pub origin_rot: Rot3,
    pub mass: f64,
    /// Inertia about the link COM, link frame.
    pub inertia: Inertia3,
    /// COM in the link frame.
    pub com: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FootSpec {
    pub link: usize,
    pub offset: Vec3,
}

/// Floating-base quadruped with three revolute joints per leg.
#[derive(Debug, Clone, PartialEq)]
pub struct ArticulatedModel {
    pub name: String,
    pub links: Vec<Link>,
    pub feet: [FootSpec; 4],
    pub foot_radius: f64,
    pub torque_limit: [f64; NJ],
    pub gravity: Vec3,
    /// Half extents of the trunk collision box, base frame.
    pub trunk_half_extents: Vec3,
    pub nominal_base_height: f64,
    pub nominal_joints: [f64; NJ],
    /// Generalized velocity index of each link's joint (0 for the root).
    dof: Vec<usize>,
    /// Revolute links from the root down to each link, inclusive.
    support: Vec<Vec<usize>>,
    /// Joint dofs of each leg, proximal first.
    leg_dofs: [[usize; 3]; 4],
    /// Leg index of each link; `None` for the trunk.
    leg_of_link: Vec<Option<usize>>,
}

impl ArticulatedModel {
    /// Builds a model from parts, checking tree structure and physical invariants.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: String,
        links: Vec<Link>,
        feet: [FootSpec; 4],
        foot_radius: f64,
        torque_limit: [f64; NJ],
        gravity: Vec3,
        trunk_half_extents: Vec3,
        nominal_base_height: f64,
        nominal_joints: [f64; NJ],
    ) -> Result<Self> {
        let bad = |msg: String| Err(Error::invalid("articulated model", msg));
        if links.is_empty() || links[0].parent.is_some() || links[0].joint != JointType::Floating {
            return bad("link 0 must be the floating root".into());
        }
        let mut dof = vec![0usize; links.len()];
        let mut next = 6;
        for (i, l) in links.iter().enumerate().skip(1) {
            match l.parent {
                Some(p) if p < i => {}
                _ => return bad(format!("link '{}' must have a parent listed before it", l.name)),
            }
            if l.joint != JointType::Revolute {
                return bad(format!("link '{}': only the root may be floating", l.name));
            }
            if (l.axis.norm() - 1.0).abs() > 1e-9 {
                return bad(format!("link '{}': joint axis is not unit length", l.name));
            }
            dof[i] = next;
            next += 1;
        }
        if next != NV {
            return bad(format!("expected {NJ} revolute joints, found {}", next - 6));
        }
        for l in &links {
            if !(l.mass > 0.0) {
                return bad(format!("link '{}': mass must be positive", l.name));
            }
            Inertia3::new(*l.inertia.matrix())
                .map_err(|e| Error::invalid("articulated model", format!("link '{}': {e}", l.name)))?;
        }
        let mut support: Vec<Vec<usize>> = Vec::with_capacity(links.len());
        for (i, l) in links.iter().enumerate() {
            let mut s = match l.parent {
                Some(p) => support[p].clone(),
                None => Vec::new(),
            };
            if l.joint == JointType::Revolute {
                s.push(i);
            }
            support.push(s);
        }
        let mut leg_dofs = [[0usize; 3]; 4];
        let mut leg_of_link = vec![None; links.len()];
        for (leg, f) in feet.iter().enumerate() {
            if f.link >= links.len() {
                return bad(format!("foot {leg} references a missing link"));
            }
            let chain = &support[f.link];
            if chain.len() != 3 {
                return bad(format!("foot {leg}: leg must have exactly 3 revolute joints"));
            }
            for (k, &l) in chain.iter().enumerate() {
                if leg_of_link[l].is_some() {
                    return bad(format!("link '{}' shared between legs", links[l].name));
                }
                leg_of_link[l] = Some(leg);
                leg_dofs[leg][k] = dof[l];
            }
        }
        if leg_of_link.iter().skip(1).any(|l| l.is_none()) {
            return bad("every non-root link must belong to a leg".into());
        }
        if !(foot_radius > 0.0) || torque_limit.iter().any(|&t| !(t > 0.0)) {
            return bad("foot radius and torque limits must be positive".into());
        }
        Ok(ArticulatedModel {
            name,
            links,
            feet,
            foot_radius,
            torque_limit,
            gravity,
            trunk_half_extents,
            nominal_base_height,
            nominal_joints,
            dof,
            support,
            leg_dofs,
            leg_of_link,
        })
    }

    /// The bundled small-quadruped description.
    pub fn default_quadruped() -> Self {
        parse_model(DEFAULT_MODEL_TOML, "bundled quadruped").expect("bundled model is valid")
    }

    pub fn dof(&self, link: usize) -> usize {
        self.dof[link]
    }

    pub fn support(&self, link: usize) -> &[usize] {
        &self.support[link]
    }

    pub fn leg_dofs(&self, leg: usize) -> [usize; 3] {
        self.leg_dofs[leg]
    }

    pub fn leg_of_link(&self, link: usize) -> Option<usize> {
        self.leg_of_link[link]
    }

    pub fn is_leg_link(&self, link: usize) -> bool {
        self.leg_of_link[link].is_some()
    }

    pub fn total_mass(&self) -> f64 {
        self.links.iter().map(|l| l.mass).sum()
    }

    /// State at the nominal standing pose with the base at `nominal_base_height`.
    pub fn nominal_state(&self) -> ArticulatedState {
        ArticulatedState {
            base_pos: Vec3::new(0.0, 0.0, self.nominal_base_height),
            base_rot: Rot3::identity(),
            joints: self.nominal_joints,
            qd: GenVec::zeros(),
            t: 0.0,
        }
    }

    /// Composite mass, inertia and COM at the nominal pose, in the base frame.
    pub fn composite_nominal(&self) -> Composite {
        let mut s = self.nominal_state();
        s.base_pos = Vec3::zeros();
        self.composite_at(&s)
    }

    /// Composite properties in world coordinates for an arbitrary state.
    pub fn composite_at(&self, state: &ArticulatedState) -> Composite {
        let kin = Kinematics::positions(self, state);
        let elems: Vec<MassElement> = self
            .links
            .iter()
            .enumerate()
            .map(|(i, l)| MassElement {
                mass: l.mass,
                inertia: kin.rot[i] * l.inertia.matrix() * kin.rot[i].transpose(),
                com: kin.com[i],
            })
            .collect();
        composite_inertia(&elems).expect("validated masses are positive")
    }

    /// Hip workspace centres (first pitch joint of each leg) relative to the
    /// base origin at the nominal pose, base frame.
    pub fn hip_positions_nominal(&self) -> [Vec3; 4] {
        let mut s = self.nominal_state();
        s.base_pos = Vec3::zeros();
        let kin = Kinematics::positions(self, &s);
        std::array::from_fn(|leg| kin.origin[self.support[self.feet[leg].link][1]])
    }
}

/// Generalized state: base pose, 12 joint angles, and velocities
/// `qd = [v_base (world), w_base (world), joint rates]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArticulatedState {
    pub base_pos: Vec3,
    pub base_rot: Rot3,
    pub joints: [f64; NJ],
    pub qd: GenVec,
    pub t: f64,
}

impl ArticulatedState {
    pub fn base_lin_vel(&self) -> Vec3 {
        self.qd.fixed_rows::<3>(0).into_owned()
    }

    pub fn base_ang_vel(&self) -> Vec3 {
        self.qd.fixed_rows::<3>(3).into_owned()
    }

    pub fn joint_vel(&self) -> [f64; NJ] {
        std::array::from_fn(|j| self.qd[6 + j])
    }

    pub fn is_finite(&self) -> bool {
        self.base_pos.iter().all(|x| x.is_finite())
            && self.base_rot.matrix().iter().all(|x| x.is_finite())
            && self.joints.iter().all(|x| x.is_finite())
            && self.qd.iter().all(|x| x.is_finite())
    }
}
