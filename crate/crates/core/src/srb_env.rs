//! Single-rigid-body dynamics: a floating body with lumped mass and inertia,
//! four massless virtual feet, kinematic contact and ideal point-contact
//! forces.

use crate::error::{Error, Result};
use crate::geom::{so3_exp, Inertia3, Mat3, Rot3, Vec3, Z_AXIS};

/// Maximum speed of a kinematically driven foot (m/s).
pub const FOOT_RATE_LIMIT: f64 = 5.0;

/// A solid half-space bounded by a plane. Points with negative signed
/// distance lie inside the solid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfSpace {
    pub point: Vec3,
    /// Unit normal pointing out of the solid.
    pub normal: Vec3,
}

impl HalfSpace {
    pub fn signed_distance(&self, x: &Vec3) -> f64 {
        self.normal.dot(&(x - self.point))
    }
}

/// Terrain as a set of half-spaces: flat ground plus an optional wall.
#[derive(Debug, Clone, PartialEq)]
pub struct Terrain {
    pub ground_height: f64,
    pub planes: Vec<HalfSpace>,
}

impl Terrain {
    pub fn flat(ground_height: f64) -> Self {
        Terrain {
            ground_height,
            planes: vec![HalfSpace { point: Vec3::new(0.0, 0.0, ground_height), normal: Z_AXIS }],
        }
    }

    /// Flat ground plus a vertical wall at `x = wall_x` whose solid side is `x > wall_x`.
    pub fn with_wall(ground_height: f64, wall_x: f64) -> Self {
        let mut t = Self::flat(ground_height);
        t.planes.push(HalfSpace {
            point: Vec3::new(wall_x, 0.0, 0.0),
            normal: Vec3::new(-1.0, 0.0, 0.0),
        });
        t
    }

    /// Nearest surface: `(signed distance, outward normal)`.
    pub fn nearest(&self, x: &Vec3) -> (f64, Vec3) {
        self.planes
            .iter()
            .map(|h| (h.signed_distance(x), h.normal))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap_or((f64::INFINITY, Z_AXIS))
    }

    /// Pushes a point out of every solid half-space.
    pub fn project_outside(&self, x: &Vec3) -> Vec3 {
        let mut p = *x;
        for h in &self.planes {
            let d = h.signed_distance(&p);
            if d < 0.0 {
                p -= h.normal * d;
            }
        }
        p
    }
}

/// Clips a ground reaction force into the friction cone about `normal`.
///
/// A pulling normal component clamps the whole force to zero; otherwise the
/// tangential part is scaled down to `mu · f_n`, keeping its direction.
pub fn clip_friction_cone(f: &Vec3, mu: f64, normal: &Vec3) -> Vec3 {
    let f_n = f.dot(normal);
    if f_n <= 0.0 {
        return Vec3::zeros();
    }
    let f_t = f - normal * f_n;
    let t = f_t.norm();
    let bound = mu * f_n;
    if t > bound {
        normal * f_n + f_t * (bound / t)
    } else {
        *f
    }
}

/// Projects a foot target into the hip-centred workspace sphere, then clamps
/// it to lie on or above the ground.
pub fn clip_workspace(target: &Vec3, hip: &Vec3, radius: f64, ground_height: f64) -> Vec3 {
    let d = target - hip;
    let n = d.norm();
    let mut out = if n > radius { hip + d * (radius / n) } else { *target };
    if out.z < ground_height {
        out.z = ground_height;
    }
    out
}

/// A foot touches terrain when its centre is closer than its radius.
pub fn detect_contact(foot: &Vec3, foot_radius: f64, terrain: &Terrain) -> bool {
    terrain.nearest(foot).0 < foot_radius
}

#[derive(Debug, Clone)]
pub struct SrbModel {
    pub mass: f64,
    pub inertia_body: Inertia3,
    /// Hip (workspace centre) positions relative to the COM, base frame.
    pub hip_offsets: [Vec3; 4],
    pub foot_radius: f64,
    pub workspace_radius: f64,
    pub mu: f64,
    pub gravity: Vec3,
}

impl SrbModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) {
            return Err(Error::invalid("srb model", "mass must be positive"));
        }
        if !(self.foot_radius > 0.0 && self.workspace_radius > self.foot_radius) {
            return Err(Error::invalid("srb model", "need workspace_radius > foot_radius > 0"));
        }
        if !(self.mu > 0.0) {
            return Err(Error::invalid("srb model", "friction coefficient must be positive"));
        }
        Inertia3::new(*self.inertia_body.matrix())?;
        Ok(())
    }

    pub fn hip_world(&self, state: &SrbState, leg: usize) -> Vec3 {
        state.p + state.rot.rotate(&self.hip_offsets[leg])
    }

    pub fn inertia_world(&self, rot: &Rot3) -> Mat3 {
        rot.conjugate(self.inertia_body.matrix())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SrbState {
    /// COM position (m).
    pub p: Vec3,
    /// COM velocity (m/s).
    pub v: Vec3,
    pub rot: Rot3,
    /// Angular velocity, world frame (rad/s).
    pub w: Vec3,
    /// World foot positions (m).
    pub feet: [Vec3; 4],
    pub t: f64,
}

impl SrbState {
    pub fn is_finite(&self) -> bool {
        let vecs = [self.p, self.v, self.w, self.feet[0], self.feet[1], self.feet[2], self.feet[3]];
        vecs.iter().all(|v| v.iter().all(|x| x.is_finite()))
            && self.rot.matrix().iter().all(|x| x.is_finite())
            && self.t.is_finite()
    }

    /// Standing at rest with feet directly below the hips on the ground.
    pub fn standing(model: &SrbModel, com_height: f64, ground_height: f64) -> Self {
        let p = Vec3::new(0.0, 0.0, com_height);
        let feet = std::array::from_fn(|i| {
            let h = p + model.hip_offsets[i];
            Vec3::new(h.x, h.y, ground_height)
        });
        SrbState { p, v: Vec3::zeros(), rot: Rot3::identity(), w: Vec3::zeros(), feet, t: 0.0 }
    }

    /// World-frame angular momentum about the COM.
    pub fn angular_momentum(&self, model: &SrbModel) -> Vec3 {
        model.inertia_world(&self.rot) * self.w
    }
}

/// Hybrid action of the policy after scaling to physical units.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SrbAction {
    /// Ground reaction forces on the body (N), used only by stance feet.
    pub grf: [Vec3; 4],
    /// Foot target residuals (m), used only by swing feet.
    pub residual: [Vec3; 4],
}

/// Inputs to one integration step once the task layer has resolved the
/// action: raw GRF commands and world-frame targets for swing feet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SrbCommand {
    pub grf: [Vec3; 4],
    pub foot_targets: [Vec3; 4],
}

/// What a step actually applied.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SrbStepInfo {
    pub applied_grf: [Vec3; 4],
    pub contact: [bool; 4],
}

/// Advances the SRB one step with semi-implicit Euler.
///
/// Only feet flagged stance and in contact transmit their (cone-clipped)
/// force. Linear and angular velocity are updated first; the angular update
/// integrates world-frame angular momentum, which keeps `I·w` exactly
/// constant in flight. Swing feet and stance feet without contact move
/// kinematically toward their targets, rate-limited; feet in stance contact
/// stay pinned unless the workspace forces them to slide.
pub fn srb_step(
    state: &SrbState,
    model: &SrbModel,
    terrain: &Terrain,
    cmd: &SrbCommand,
    stance: &[bool; 4],
    dt: f64,
) -> Result<(SrbState, SrbStepInfo)> {
    let mut info = SrbStepInfo::default();
    let mut force = Vec3::zeros();
    let mut torque = Vec3::zeros();
    for i in 0..4 {
        let (dist, normal) = terrain.nearest(&state.feet[i]);
        info.contact[i] = dist < model.foot_radius;
        if stance[i] && info.contact[i] {
            let f = clip_friction_cone(&cmd.grf[i], model.mu, &normal);
            info.applied_grf[i] = f;
            force += f;
            torque += (state.feet[i] - state.p).cross(&f);
        }
    }

    let v = state.v + (force / model.mass + model.gravity) * dt;
    let inertia = model.inertia_world(&state.rot);
    let momentum = inertia * state.w + torque * dt;
    let w_mid = solve3(&inertia, &momentum)?;
    let p = state.p + v * dt;
    let rot = so3_exp(&(w_mid * dt)).compose(&state.rot).renormalized();
    let w = solve3(&model.inertia_world(&rot), &momentum)?;

    let max_step = FOOT_RATE_LIMIT * dt;
    let mut feet = state.feet;
    for i in 0..4 {
        let hip = p + rot.rotate(&model.hip_offsets[i]);
        let pinned = stance[i] && info.contact[i];
        let target = if pinned {
            state.feet[i]
        } else if stance[i] {
            // stance scheduled but airborne: drop onto the nearest surface
            let (d, n) = terrain.nearest(&state.feet[i]);
            state.feet[i] - n * d
        } else {
            cmd.foot_targets[i]
        };
        let mut next = if pinned { target } else { move_toward(&state.feet[i], &target, max_step) };
        let reach = next - hip;
        if reach.norm() > model.workspace_radius {
            next = clip_workspace(&next, &hip, model.workspace_radius, terrain.ground_height);
        }
        feet[i] = terrain.project_outside(&next);
    }

    let next = SrbState { p, v, rot, w, feet, t: state.t + dt };
    if !next.is_finite() {
        return Err(Error::Fault(format!("non-finite SRB state at t = {}", state.t)));
    }
    Ok((next, info))
}

fn move_toward(from: &Vec3, to: &Vec3, max_step: f64) -> Vec3 {
    let d = to - from;
    let n = d.norm();
    if n <= max_step {
        *to
    } else {
        from + d * (max_step / n)
    }
}

fn solve3(m: &Mat3, b: &Vec3) -> Result<Vec3> {
    m.cholesky()
        .map(|c| c.solve(b))
        .ok_or_else(|| Error::Fault("inertia lost positive definiteness".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    pub(crate) fn test_model() -> SrbModel {
        SrbModel {
            mass: 12.0,
            inertia_body: Inertia3::diagonal(0.06, 0.16, 0.19).unwrap(),
            hip_offsets: [
                Vec3::new(0.18, 0.13, 0.03),
                Vec3::new(0.18, -0.13, 0.03),
                Vec3::new(-0.18, 0.13, 0.03),
                Vec3::new(-0.18, -0.13, 0.03),
            ],
            foot_radius: 0.02,
            workspace_radius: 0.38,
            mu: 0.6,
            gravity: Vec3::new(0.0, 0.0, -9.81),
        }
    }

    fn no_cmd(state: &SrbState) -> SrbCommand {
        SrbCommand { grf: [Vec3::zeros(); 4], foot_targets: state.feet }
    }

    #[test]
    fn cone_inside_unchanged() {
        let f = Vec3::new(0.1, 0.0, 10.0);
        assert_eq!(clip_friction_cone(&f, 0.6, &Z_AXIS), f);
    }

    #[test]
    fn cone_scales_tangential() {
        let f = clip_friction_cone(&Vec3::new(12.0, 0.0, 10.0), 0.6, &Z_AXIS);
        assert_relative_eq!(f, Vec3::new(6.0, 0.0, 10.0), epsilon = 1e-14);
    }

    #[test]
    fn cone_pulling_force_is_zero() {
        assert_eq!(clip_friction_cone(&Vec3::new(3.0, 0.0, -5.0), 0.6, &Z_AXIS), Vec3::zeros());
    }

    #[test]
    fn workspace_inside_unchanged() {
        let hip = Vec3::new(0.2, 0.1, 0.3);
        assert_eq!(clip_workspace(&hip, &hip, 0.35, 0.0), hip);
    }

    #[test]
    fn workspace_far_below_projects_then_clamps() {
        let hip = Vec3::new(0.2, 0.1, 0.3);
        let r = 0.35;
        let out = clip_workspace(&(hip - Vec3::new(0.0, 0.0, 2.0 * r)), &hip, r, 0.0);
        // radial projection gives z = 0.3 − 0.35 = −0.05, then the ground clamp
        assert_relative_eq!(out, Vec3::new(0.2, 0.1, 0.0), epsilon = 1e-15);
        let out_high = clip_workspace(&(hip - Vec3::new(0.0, 0.0, 2.0 * r)), &hip, r, -1.0);
        assert_relative_eq!(out_high, hip - Vec3::new(0.0, 0.0, r), epsilon = 1e-15);
    }

    #[test]
    fn workspace_ground_clamp() {
        let hip = Vec3::new(0.0, 0.0, 0.28);
        let out = clip_workspace(&Vec3::new(0.05, 0.0, -0.05), &hip, 0.38, 0.0);
        assert_eq!(out, Vec3::new(0.05, 0.0, 0.0));
    }

    #[test]
    fn contact_detection() {
        let t = Terrain::flat(0.0);
        assert!(detect_contact(&Vec3::new(0.0, 0.0, 0.01), 0.02, &t));
        assert!(!detect_contact(&Vec3::new(0.0, 0.0, 0.05), 0.02, &t));
        let w = Terrain::with_wall(0.0, 1.0);
        // plane signed distance: 1.0 − 0.985 = 0.015 < 0.02
        let foot = Vec3::new(0.985, 0.0, 0.5);
        assert_relative_eq!(w.nearest(&foot).0, 0.015, epsilon = 1e-12);
        assert!(detect_contact(&foot, 0.02, &w));
        assert!(!detect_contact(&Vec3::new(0.975, 0.0, 0.5), 0.02, &w));
    }

    #[test]
    fn ballistic_velocity_gain() {
        let m = test_model();
        let mut s = SrbState::standing(&m, 2.0, -10.0);
        s.feet = std::array::from_fn(|i| s.p + m.hip_offsets[i] - Vec3::new(0.0, 0.0, 0.25));
        let v0 = Vec3::new(0.3, -0.2, 1.0);
        s.v = v0;
        let dt = 0.002;
        let n = 500;
        let terrain = Terrain::flat(-10.0);
        for _ in 0..n {
            let c = no_cmd(&s);
            s = srb_step(&s, &m, &terrain, &c, &[false; 4], dt).unwrap().0;
        }
        assert_relative_eq!(s.v, v0 + m.gravity * (n as f64 * dt), epsilon = 1e-12);
        assert_eq!(s.w, Vec3::zeros());
    }

    #[test]
    fn hover_equilibrium() {
        let mut m = test_model();
        m.hip_offsets.iter_mut().for_each(|h| h.z = 0.0);
        let s0 = SrbState::standing(&m, 0.28, 0.0);
        let f = -m.gravity * m.mass / 4.0;
        let cmd = SrbCommand { grf: [f; 4], foot_targets: s0.feet };
        let mut s = s0.clone();
        for _ in 0..100 {
            s = srb_step(&s, &m, &Terrain::flat(0.0), &cmd, &[true; 4], 0.002).unwrap().0;
        }
        assert!(s.v.norm() < 1e-12);
        assert!(s.w.norm() < 1e-12);
        assert_eq!(s.feet, s0.feet);
    }

    #[test]
    fn pure_couple_single_step() {
        let m = test_model();
        let d = 0.2;
        let mut s = SrbState::standing(&m, 0.0, 0.0);
        s.feet = [
            Vec3::new(d, 0.0, 0.0),
            Vec3::new(-d, 0.0, 0.0),
            Vec3::new(0.1, 0.1, 0.5),
            Vec3::new(-0.1, -0.1, 0.5),
        ];
        // vertical parts cancel gravity, tangential parts form a yaw couple
        let half_weight = -m.gravity.z * m.mass / 2.0;
        let t = 2.0;
        let cmd = SrbCommand {
            grf: [
                Vec3::new(0.0, t, half_weight),
                Vec3::new(0.0, -t, half_weight),
                Vec3::zeros(),
                Vec3::zeros(),
            ],
            foot_targets: s.feet,
        };
        let dt = 1e-3;
        let stance = [true, true, false, false];
        let (next, info) = srb_step(&s, &m, &Terrain::flat(0.0), &cmd, &stance, dt).unwrap();
        assert_eq!(info.applied_grf[0], cmd.grf[0]);
        let tau = Vec3::new(0.0, 0.0, 2.0 * d * t);
        let expect = m.inertia_body.matrix().try_inverse().unwrap() * tau * dt;
        // the momentum form differs from the explicit update only at O(dt²)
        assert_relative_eq!(next.w, expect, max_relative = 1e-9);
        assert!(next.v.norm() < 1e-14);
        assert!((next.p - s.p).norm() < 1e-16);
    }

    #[test]
    fn stance_without_contact_ignores_grf() {
        let m = test_model();
        let mut s = SrbState::standing(&m, 1.0, 0.0);
        s.feet = std::array::from_fn(|i| s.p + m.hip_offsets[i] - Vec3::new(0.0, 0.0, 0.3));
        let cmd = SrbCommand { grf: [Vec3::new(0.0, 0.0, 100.0); 4], foot_targets: s.feet };
        let (next, info) = srb_step(&s, &m, &Terrain::flat(0.0), &cmd, &[true; 4], 0.002).unwrap();
        assert_eq!(info.contact, [false; 4]);
        assert_eq!(next.v, m.gravity * 0.002);
    }

    #[test]
    fn swing_foot_rate_limited() {
        let m = test_model();
        let s = SrbState::standing(&m, 0.3, 0.0);
        let mut targets = s.feet;
        targets[0] += Vec3::new(0.1, 0.0, 0.1);
        let cmd = SrbCommand { grf: [Vec3::zeros(); 4], foot_targets: targets };
        let dt = 0.002;
        let (next, _) = srb_step(&s, &m, &Terrain::flat(0.0), &cmd, &[false, true, true, true], dt).unwrap();
        assert_relative_eq!((next.feet[0] - s.feet[0]).norm(), FOOT_RATE_LIMIT * dt, epsilon = 1e-12);
    }

    #[test]
    fn nan_state_faults() {
        let m = test_model();
        let mut s = SrbState::standing(&m, 0.3, 0.0);
        s.v.x = f64::NAN;
        let c = no_cmd(&s);
        assert!(matches!(srb_step(&s, &m, &Terrain::flat(0.0), &c, &[false; 4], 0.002), Err(Error::Fault(_))));
    }

    #[test]
    fn step_is_deterministic() {
        let m = test_model();
        let mut s = SrbState::standing(&m, 0.3, 0.0);
        s.w = Vec3::new(0.3, -1.0, 0.7);
        let cmd = SrbCommand { grf: [Vec3::new(3.0, -2.0, 40.0); 4], foot_targets: s.feet };
        let a = srb_step(&s, &m, &Terrain::flat(0.0), &cmd, &[true, false, true, false], 0.002).unwrap();
        let b = srb_step(&s, &m, &Terrain::flat(0.0), &cmd, &[true, false, true, false], 0.002).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn clipped_force_in_cone(fx in -500.0..500.0f64, fy in -500.0..500.0f64, fz in -500.0..500.0f64, mu in 0.05..1.5f64) {
            let f = clip_friction_cone(&Vec3::new(fx, fy, fz), mu, &Z_AXIS);
            prop_assert!(f.z >= 0.0);
            prop_assert!(f.xy().norm() <= mu * f.z + 1e-12);
        }
    }
}
