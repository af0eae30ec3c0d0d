use crate::geom::{BezierQuad, Rot3, Vec3, Z_AXIS};

/// Nominal swing-foot path family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SwingSpec {
    /// Lift-off foot → raised midpoint → Raibert foothold, world frame.
    GaitRaibert { clearance: f64, raibert_gain: f64 },
    /// Lift-off foot → `mid` → `end`, hip-relative in the base frame.
    FlipTuck { mid: Vec3, end: Vec3 },
    /// Blend of a hip-relative local path and a world target.
    WallBlend { local: [Vec3; 3] },
}

/// Everything the nominal path may depend on at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwingContext {
    /// Position inside the current air interval, [0, 1].
    pub s: f64,
    /// Foot position at lift-off, world frame.
    pub liftoff: Vec3,
    pub rot: Rot3,
    pub hip_world: Vec3,
    pub v: Vec3,
    /// Commanded horizontal velocity, world frame.
    pub v_cmd: Vec3,
    pub stance_duration: f64,
    pub ground_height: f64,
    /// Nominal foot position for the next keyframe, world frame.
    pub upcoming_foot: Option<Vec3>,
}

/// Foothold under the hip shifted by half a stance of travel plus a
/// velocity-error capture term.
pub fn raibert_target(hip_ground: &Vec3, v: &Vec3, v_cmd: &Vec3, stance_duration: f64, gain: f64) -> Vec3 {
    let vxy = Vec3::new(v.x, v.y, 0.0);
    let cxy = Vec3::new(v_cmd.x, v_cmd.y, 0.0);
    hip_ground + vxy * (0.5 * stance_duration) + (vxy - cxy) * gain
}

/// Blend weight of the local path: 1 at both ends of the swing, 0 halfway.
pub fn wall_eta(phi: f64) -> f64 {
    16.0 * (phi - 0.5).powi(4)
}

pub fn nominal_swing(spec: &SwingSpec, ctx: &SwingContext) -> Vec3 {
    let s = ctx.s.clamp(0.0, 1.0);
    match spec {
        SwingSpec::GaitRaibert { clearance, raibert_gain } => {
            let mut hip_ground = ctx.hip_world;
            hip_ground.z = ctx.ground_height;
            let land = raibert_target(&hip_ground, &ctx.v, &ctx.v_cmd, ctx.stance_duration, *raibert_gain);
            let mid = (ctx.liftoff + land) * 0.5 + Z_AXIS * *clearance;
            BezierQuad::new(ctx.liftoff, mid, land).eval(s)
        }
        SwingSpec::FlipTuck { mid, end } => {
            let start = ctx.rot.inverse_rotate(&(ctx.liftoff - ctx.hip_world));
            ctx.hip_world + ctx.rot.rotate(&BezierQuad::new(start, *mid, *end).eval(s))
        }
        SwingSpec::WallBlend { local } => {
            let r_b = ctx.hip_world + ctx.rot.rotate(&BezierQuad::new(local[0], local[1], local[2]).eval(s));
            let r_w = match ctx.upcoming_foot {
                Some(target) if s >= 0.5 => target,
                _ => ctx.liftoff,
            };
            let eta = wall_eta(s);
            r_b * eta + r_w * (1.0 - eta)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ctx(s: f64) -> SwingContext {
        SwingContext {
            s,
            liftoff: Vec3::new(0.2, 0.15, 0.0),
            rot: Rot3::from_rpy(0.1, -0.3, 0.7),
            hip_world: Vec3::new(0.25, 0.1, 0.3),
            v: Vec3::zeros(),
            v_cmd: Vec3::zeros(),
            stance_duration: 0.2,
            ground_height: 0.0,
            upcoming_foot: Some(Vec3::new(0.9, 0.1, 0.5)),
        }
    }

    #[test]
    fn raibert_cases() {
        let hip = Vec3::new(0.3, 0.1, 0.0);
        assert_eq!(raibert_target(&hip, &Vec3::zeros(), &Vec3::zeros(), 0.2, 0.03), hip);
        let x = Vec3::new(1.0, 0.0, 0.0);
        assert_relative_eq!(raibert_target(&hip, &x, &x, 0.2, 0.03), hip + Vec3::new(0.1, 0.0, 0.0), epsilon = 1e-15);
        assert_relative_eq!(
            raibert_target(&hip, &x, &Vec3::zeros(), 0.2, 0.03),
            hip + Vec3::new(0.13, 0.0, 0.0),
            epsilon = 1e-15
        );
    }

    #[test]
    fn eta_endpoints_exact() {
        assert_eq!(wall_eta(0.5), 0.0);
        assert_eq!(wall_eta(0.0), 1.0);
        assert_eq!(wall_eta(1.0), 1.0);
    }

    #[test]
    fn wall_blend_cases() {
        let spec = SwingSpec::WallBlend {
            local: [Vec3::new(-0.1, 0.0, -0.2), Vec3::new(0.0, 0.0, -0.1), Vec3::new(0.1, 0.0, -0.2)],
        };
        let c = ctx(0.5);
        assert_eq!(nominal_swing(&spec, &c), c.upcoming_foot.unwrap());
        let c = ctx(0.0);
        assert_relative_eq!(nominal_swing(&spec, &c), c.hip_world + c.rot.rotate(&Vec3::new(-0.1, 0.0, -0.2)), epsilon = 1e-15);
        let c = ctx(1.0);
        assert_relative_eq!(nominal_swing(&spec, &c), c.hip_world + c.rot.rotate(&Vec3::new(0.1, 0.0, -0.2)), epsilon = 1e-15);
        let mut c = ctx(0.3);
        c.upcoming_foot = None;
        let eta = wall_eta(0.3);
        let r_b = c.hip_world + c.rot.rotate(&BezierQuad::new(Vec3::new(-0.1, 0.0, -0.2), Vec3::new(0.0, 0.0, -0.1), Vec3::new(0.1, 0.0, -0.2)).eval(0.3));
        assert_relative_eq!(nominal_swing(&spec, &c), r_b * eta + c.liftoff * (1.0 - eta), epsilon = 1e-15);
    }

    #[test]
    fn flip_end_point_is_local() {
        let spec = SwingSpec::FlipTuck { mid: Vec3::new(0.0, 0.0, -0.2), end: Vec3::new(0.0, 0.0, -0.3) };
        let c = ctx(1.0);
        let r = nominal_swing(&spec, &c);
        assert_relative_eq!(c.rot.inverse_rotate(&(r - c.hip_world)), Vec3::new(0.0, 0.0, -0.3), epsilon = 1e-15);
        assert_relative_eq!(nominal_swing(&spec, &ctx(0.0)), c.liftoff, epsilon = 1e-15);
    }

    #[test]
    fn gait_path_shape() {
        let spec = SwingSpec::GaitRaibert { clearance: 0.1, raibert_gain: 0.03 };
        let mut c = ctx(0.0);
        c.v = Vec3::new(0.5, 0.0, 0.0);
        c.v_cmd = c.v;
        assert_eq!(nominal_swing(&spec, &c), c.liftoff);
        c.s = 1.0;
        let end = nominal_swing(&spec, &c);
        assert_relative_eq!(end, Vec3::new(0.25 + 0.05, 0.1, 0.0), epsilon = 1e-15);
        c.s = 0.5;
        let mid = nominal_swing(&spec, &c);
        // apex of the Bezier: half the control-point lift
        assert_relative_eq!(mid.z, 0.5 * (0.5 * (c.liftoff.z + end.z) + 0.1) + 0.25 * (c.liftoff.z + end.z), epsilon = 1e-15);
    }
}
