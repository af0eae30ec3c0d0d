use super::{ArticulatedModel, ArticulatedState, FootJacobian, GenVec, JointType};
use crate::geom::{skew, Mat3, Rot3, Vec3};

/// World-frame link quantities from one pass down the tree.
///
/// The `bias_*` fields are accelerations produced by the current velocity
/// with zero generalized acceleration, i.e. `J̇·qd`.
#[derive(Debug, Clone)]
pub struct Kinematics {
    pub rot: Vec<Mat3>,
    pub origin: Vec<Vec3>,
    /// World joint axis; zero for the floating root.
    pub axis: Vec<Vec3>,
    pub com: Vec<Vec3>,
    pub omega: Vec<Vec3>,
    pub bias_alpha: Vec<Vec3>,
    pub bias_acc_origin: Vec<Vec3>,
    has_velocity: bool,
}

impl Kinematics {
    /// Positions only; velocity fields are zero.
    pub fn positions(model: &ArticulatedModel, state: &ArticulatedState) -> Self {
        Self::pass(model, state, None)
    }

    pub fn compute(model: &ArticulatedModel, state: &ArticulatedState) -> Self {
        Self::pass(model, state, Some(&state.qd))
    }

    fn pass(model: &ArticulatedModel, state: &ArticulatedState, qd: Option<&GenVec>) -> Self {
        let n = model.links.len();
        let mut k = Kinematics {
            rot: Vec::with_capacity(n),
            origin: Vec::with_capacity(n),
            axis: Vec::with_capacity(n),
            com: Vec::with_capacity(n),
            omega: Vec::with_capacity(n),
            bias_alpha: Vec::with_capacity(n),
            bias_acc_origin: Vec::with_capacity(n),
            has_velocity: qd.is_some(),
        };
        for (i, link) in model.links.iter().enumerate() {
            match (link.parent, link.joint) {
                (None, _) | (_, JointType::Floating) => {
                    k.rot.push(*state.base_rot.matrix());
                    k.origin.push(state.base_pos);
                    k.axis.push(Vec3::zeros());
                    k.omega.push(qd.map_or(Vec3::zeros(), |v| v.fixed_rows::<3>(3).into_owned()));
                    k.bias_alpha.push(Vec3::zeros());
                    k.bias_acc_origin.push(Vec3::zeros());
                }
                (Some(p), JointType::Revolute) => {
                    let dof = model.dof(i);
                    let angle = state.joints[dof - 6];
                    let frame = k.rot[p] * link.origin_rot.matrix();
                    let axis = frame * link.axis;
                    let rot = frame * Rot3::from_axis_angle(&link.axis, angle).matrix();
                    let origin = k.origin[p] + k.rot[p] * link.origin_xyz;
                    k.rot.push(rot);
                    k.origin.push(origin);
                    k.axis.push(axis);
                    match qd {
                        Some(v) => {
                            let rate = v[dof];
                            let wp = k.omega[p];
                            let r = origin - k.origin[p];
                            k.omega.push(wp + axis * rate);
                            k.bias_alpha.push(k.bias_alpha[p] + wp.cross(&(axis * rate)));
                            k.bias_acc_origin.push(
                                k.bias_acc_origin[p] + k.bias_alpha[p].cross(&r) + wp.cross(&wp.cross(&r)),
                            );
                        }
                        None => {
                            k.omega.push(Vec3::zeros());
                            k.bias_alpha.push(Vec3::zeros());
                            k.bias_acc_origin.push(Vec3::zeros());
                        }
                    }
                }
            }
            let com = k.origin[i] + k.rot[i] * link.com;
            k.com.push(com);
        }
        k
    }

    /// World position of a point fixed in link `link`, given in link coordinates.
    pub fn point(&self, link: usize, local: &Vec3) -> Vec3 {
        self.origin[link] + self.rot[link] * local
    }

    pub fn foot_position(&self, model: &ArticulatedModel, leg: usize) -> Vec3 {
        let f = &model.feet[leg];
        self.point(f.link, &f.offset)
    }

    /// Linear-velocity Jacobian of a world point rigidly attached to `link`.
    pub fn point_jacobian(&self, model: &ArticulatedModel, link: usize, x: &Vec3) -> FootJacobian {
        let mut j = FootJacobian::zeros();
        j.fixed_view_mut::<3, 3>(0, 0).copy_from(&Mat3::identity());
        j.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-skew(&(x - self.origin[0]))));
        for &s in model.support(link) {
            let col = self.axis[s].cross(&(x - self.origin[s]));
            j.fixed_view_mut::<3, 1>(0, model.dof(s)).copy_from(&col);
        }
        j
    }

    /// Angular-velocity Jacobian of `link`.
    pub fn angular_jacobian(&self, model: &ArticulatedModel, link: usize) -> FootJacobian {
        let mut j = FootJacobian::zeros();
        j.fixed_view_mut::<3, 3>(0, 3).copy_from(&Mat3::identity());
        for &s in model.support(link) {
            j.fixed_view_mut::<3, 1>(0, model.dof(s)).copy_from(&self.axis[s]);
        }
        j
    }

    pub fn foot_jacobian(&self, model: &ArticulatedModel, leg: usize) -> FootJacobian {
        let x = self.foot_position(model, leg);
        self.point_jacobian(model, model.feet[leg].link, &x)
    }

    /// World velocity of a point attached to `link`; requires a velocity pass.
    pub fn point_velocity(&self, model: &ArticulatedModel, link: usize, x: &Vec3, qd: &GenVec) -> Vec3 {
        debug_assert!(self.has_velocity || qd.iter().all(|v| *v == 0.0));
        self.point_jacobian(model, link, x) * qd
    }

    /// `J̇·qd` for a point attached to `link`.
    pub fn point_bias_acceleration(&self, link: usize, x: &Vec3) -> Vec3 {
        let r = x - self.origin[link];
        let w = self.omega[link];
        self.bias_acc_origin[link] + self.bias_alpha[link].cross(&r) + w.cross(&w.cross(&r))
    }
}
