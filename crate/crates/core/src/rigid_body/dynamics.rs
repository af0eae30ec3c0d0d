use nalgebra::SMatrix;

use super::contact::contact_force_linearized;
use super::{
    ArticulatedModel, ArticulatedState, Actuation, ContactParams, GenMat, GenVec, Kinematics, KD_SWING,
    KP_SWING, NJ, NV,
};
use crate::error::{Error, Result};
use crate::geom::{parallel_axis, so3_exp, Mat3, Vec3};
use crate::srb_env::Terrain;

/// Constant force and torque applied at the trunk COM, world frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ExternalWrench {
    pub force: Vec3,
    pub torque: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepInfo {
    /// Contact force on each foot, world frame.
    pub contact_forces: [Vec3; 4],
    pub contact: [bool; 4],
}

fn world_inertia(model: &ArticulatedModel, kin: &Kinematics, link: usize) -> Mat3 {
    kin.rot[link] * model.links[link].inertia.matrix() * kin.rot[link].transpose()
}

/// Joint-space inertia `Σ m Jvᵀ Jv + Jwᵀ I Jw` over all links.
pub fn mass_matrix(model: &ArticulatedModel, kin: &Kinematics) -> GenMat {
    let mut m = GenMat::zeros();
    for (i, link) in model.links.iter().enumerate() {
        let jv = kin.point_jacobian(model, i, &kin.com[i]);
        let jw = kin.angular_jacobian(model, i);
        m += jv.transpose() * jv * link.mass + jw.transpose() * world_inertia(model, kin, i) * jw;
    }
    (m + m.transpose()) * 0.5
}

/// Coriolis, centrifugal and gravity terms `h(q, qd)`; `kin` must come from
/// a velocity pass.
pub fn bias_forces(model: &ArticulatedModel, kin: &Kinematics) -> GenVec {
    let mut h = GenVec::zeros();
    for (i, link) in model.links.iter().enumerate() {
        let jv = kin.point_jacobian(model, i, &kin.com[i]);
        let jw = kin.angular_jacobian(model, i);
        let iw = world_inertia(model, kin, i);
        let w = kin.omega[i];
        let a = kin.point_bias_acceleration(i, &kin.com[i]) - model.gravity;
        h += jv.transpose() * (a * link.mass) + jw.transpose() * (iw * kin.bias_alpha[i] + w.cross(&(iw * w)));
    }
    h
}

fn actuated(tau: &[f64; 12]) -> GenVec {
    let mut g = GenVec::zeros();
    g.fixed_rows_mut::<12>(6).copy_from_slice(tau);
    g
}

/// Solves `M qdd + h = S τ + Σ Jᵢᵀ fᵢ` with the forces `fᵢ` applied at the feet.
pub fn forward_dynamics(
    model: &ArticulatedModel,
    state: &ArticulatedState,
    tau: &[f64; 12],
    foot_forces: &[Vec3; 4],
) -> Result<GenVec> {
    let kin = Kinematics::compute(model, state);
    let mut rhs = actuated(tau) - bias_forces(model, &kin);
    for (leg, f) in foot_forces.iter().enumerate() {
        rhs += kin.foot_jacobian(model, leg).transpose() * f;
    }
    mass_matrix(model, &kin)
        .cholesky()
        .map(|c| c.solve(&rhs))
        .ok_or_else(|| Error::Fault("mass matrix is not positive definite".into()))
}

/// Forward dynamics with every coordinate outside `free` held fixed
/// (zero acceleration, constraint forces absorbed).
pub fn forward_dynamics_locked(
    model: &ArticulatedModel,
    state: &ArticulatedState,
    tau: &[f64; 12],
    free: &[usize],
) -> Result<GenVec> {
    let kin = Kinematics::compute(model, state);
    let m = mass_matrix(model, &kin);
    let rhs = actuated(tau) - bias_forces(model, &kin);
    let n = free.len();
    let sub = nalgebra::DMatrix::from_fn(n, n, |r, c| m[(free[r], free[c])]);
    let b = nalgebra::DVector::from_fn(n, |r, _| rhs[free[r]]);
    let x = sub
        .cholesky()
        .map(|c| c.solve(&b))
        .ok_or_else(|| Error::Fault("locked mass matrix is not positive definite".into()))?;
    let mut qdd = GenVec::zeros();
    for (r, &i) in free.iter().enumerate() {
        qdd[i] = x[r];
    }
    Ok(qdd)
}

pub fn kinetic_energy(model: &ArticulatedModel, state: &ArticulatedState) -> f64 {
    let kin = Kinematics::positions(model, state);
    0.5 * state.qd.dot(&(mass_matrix(model, &kin) * state.qd))
}

pub fn potential_energy(model: &ArticulatedModel, state: &ArticulatedState) -> f64 {
    let kin = Kinematics::positions(model, state);
    model.links.iter().enumerate().map(|(i, l)| -l.mass * model.gravity.dot(&kin.com[i])).sum()
}

/// Total angular momentum about the whole-body COM, world frame.
pub fn angular_momentum_about_com(model: &ArticulatedModel, state: &ArticulatedState) -> Vec3 {
    centroidal(model, &Kinematics::positions(model, state), &state.qd).momentum
}

struct Centroidal {
    com: Vec3,
    momentum: Vec3,
    inertia: Mat3,
}

fn centroidal(model: &ArticulatedModel, kin: &Kinematics, qd: &GenVec) -> Centroidal {
    let total = model.total_mass();
    let com = model.links.iter().enumerate().fold(Vec3::zeros(), |a, (i, l)| a + kin.com[i] * l.mass) / total;
    let mut momentum = Vec3::zeros();
    let mut inertia = Mat3::zeros();
    for (i, link) in model.links.iter().enumerate() {
        let v = kin.point_jacobian(model, i, &kin.com[i]) * qd;
        let w = kin.angular_jacobian(model, i) * qd;
        let iw = world_inertia(model, kin, i);
        let r = kin.com[i] - com;
        momentum += r.cross(&v) * link.mass + iw * w;
        inertia += iw + parallel_axis(link.mass, &r);
    }
    Centroidal { com, momentum, inertia }
}

/// Advances the articulated robot one step.
///
/// Velocities are updated first and positions follow with the new
/// velocities. Contact spring-dampers and the swing PD legs of `act` are
/// linearized around the current state and treated implicitly, so stiff
/// contact stays stable on very light legs. Trunk or knee contact with the
/// terrain, or a non-finite state, is reported as a fault.
pub fn fullbody_step(
    model: &ArticulatedModel,
    state: &ArticulatedState,
    act: &Actuation,
    wrench: &ExternalWrench,
    terrain: &Terrain,
    params: &ContactParams,
    dt: f64,
) -> Result<(ArticulatedState, StepInfo)> {
    if !(dt > 0.0) {
        return Err(Error::invalid("dt", format!("must be positive, got {dt}")));
    }
    let kin = Kinematics::compute(model, state);
    let m = mass_matrix(model, &kin);
    let mut tau = act.torques;
    let mut damping = GenMat::zeros();
    let mut stiffness = GenMat::zeros();
    if let Some(pd) = &act.joint_pd {
        for j in 0..NJ {
            let raw = tau[j] + pd.kp * (pd.target[j] - state.joints[j]) - pd.kd * state.qd[6 + j];
            let lim = model.torque_limit[j];
            tau[j] = raw.clamp(-lim, lim);
            if tau[j] == raw {
                damping[(6 + j, 6 + j)] += pd.kd;
                stiffness[(6 + j, 6 + j)] += pd.kp;
            }
        }
    }
    let mut force = actuated(&tau) - bias_forces(model, &kin);

    let jv = kin.point_jacobian(model, 0, &kin.com[0]);
    let jw = kin.angular_jacobian(model, 0);
    force += jv.transpose() * wrench.force + jw.transpose() * wrench.torque;

    let mut info = StepInfo::default();
    for leg in 0..4 {
        let x = kin.foot_position(model, leg);
        let j = kin.foot_jacobian(model, leg);
        let (dist, normal) = terrain.nearest(&x);
        let pen = model.foot_radius - dist;
        if pen > 0.0 {
            info.contact[leg] = true;
            let lin = contact_force_linearized(pen, &normal, &(j * state.qd), params);
            info.contact_forces[leg] = lin.force;
            force += j.transpose() * lin.force;
            damping += j.transpose() * lin.damping * j;
            stiffness += j.transpose() * lin.stiffness * j;
        }
        if act.pd_legs[leg] {
            let mut leg_jt = SMatrix::<f64, NV, 3>::zeros();
            for d in model.leg_dofs(leg) {
                leg_jt.row_mut(d).copy_from(&j.column(d).transpose());
            }
            damping += leg_jt * j * KD_SWING;
            stiffness += leg_jt * j * KP_SWING;
        }
    }

    let lhs_base = m + damping * dt;
    let lhs = lhs_base + stiffness * (dt * dt);
    let rhs = lhs_base * state.qd + force * dt;
    let qd = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Fault(format!("singular step matrix at t = {}", state.t)))?;

    let mut next = state.clone();
    next.qd = qd;
    next.base_pos += next.base_lin_vel() * dt;
    next.base_rot = so3_exp(&(next.base_ang_vel() * dt)).compose(&state.base_rot).renormalized();
    for j in 0..12 {
        next.joints[j] += qd[6 + j] * dt;
    }
    next.t += dt;
    if !next.is_finite() {
        return Err(Error::Fault(format!("non-finite articulated state at t = {}", state.t)));
    }
    let next_kin = Kinematics::positions(model, &next);
    if !info.contact.iter().any(|c| *c) {
        // In flight only the wrench changes the centroidal momentum; remove
        // the integrator's drift with a rigid spin about the COM.
        let before = centroidal(model, &kin, &state.qd);
        let after = centroidal(model, &next_kin, &next.qd);
        let arm = kin.com[0] - before.com;
        let target = before.momentum + (wrench.torque + arm.cross(&wrench.force)) * dt;
        if let Some(chol) = after.inertia.cholesky() {
            let dw = chol.solve(&(target - after.momentum));
            let dv = dw.cross(&(next.base_pos - after.com));
            for k in 0..3 {
                next.qd[k] += dv[k];
                next.qd[3 + k] += dw[k];
            }
        }
    }
    check_collisions_with(model, &next, &next_kin, terrain)?;
    Ok((next, info))
}

/// Faults when a trunk box corner or a knee lies inside the terrain.
pub fn check_collisions(model: &ArticulatedModel, state: &ArticulatedState, terrain: &Terrain) -> Result<()> {
    check_collisions_with(model, state, &Kinematics::positions(model, state), terrain)
}

fn check_collisions_with(
    model: &ArticulatedModel,
    state: &ArticulatedState,
    kin: &Kinematics,
    terrain: &Terrain,
) -> Result<()> {
    let e = model.trunk_half_extents;
    for corner in 0..8 {
        let local = Vec3::new(
            if corner & 1 == 0 { e.x } else { -e.x },
            if corner & 2 == 0 { e.y } else { -e.y },
            if corner & 4 == 0 { e.z } else { -e.z },
        );
        let x = state.base_pos + state.base_rot.rotate(&local);
        if terrain.nearest(&x).0 < 0.0 {
            return Err(Error::Fault(format!("trunk collision at t = {:.3}", state.t)));
        }
    }
    for leg in 0..4 {
        let knee = model.support(model.feet[leg].link)[2];
        if terrain.nearest(&kin.origin[knee]).0 < 0.0 {
            return Err(Error::Fault(format!("knee collision on leg {leg} at t = {:.3}", state.t)));
        }
    }
    Ok(())
}
