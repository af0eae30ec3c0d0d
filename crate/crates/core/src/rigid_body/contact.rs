use crate::error::{Error, Result};
use crate::geom::{Mat3, Vec3};

/// Regularized compliant contact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactParams {
    /// Normal stiffness (N/m).
    pub k_n: f64,
    /// Normal damping (N·s/m).
    pub d_n: f64,
    pub mu: f64,
    /// Tangential regularization velocity (m/s).
    pub v_slip: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        ContactParams { k_n: 3.0e4, d_n: 300.0, mu: 0.6, v_slip: 0.01 }
    }
}

impl ContactParams {
    pub fn validate(&self) -> Result<()> {
        if [self.k_n, self.d_n, self.mu, self.v_slip].iter().all(|v| *v > 0.0) {
            Ok(())
        } else {
            Err(Error::invalid("contact params", "all parameters must be positive"))
        }
    }
}

/// Spring-damper normal force with regularized Coulomb friction.
///
/// `normal_velocity` is positive when separating. Returns the world force
/// on the foot; zero when `penetration < 0`.
pub fn contact_force(
    penetration: f64,
    normal: &Vec3,
    normal_velocity: f64,
    tangential_velocity: &Vec3,
    params: &ContactParams,
) -> Vec3 {
    if penetration < 0.0 {
        return Vec3::zeros();
    }
    let f_n = (params.k_n * penetration - params.d_n * normal_velocity).max(0.0);
    let speed = tangential_velocity.norm().max(params.v_slip);
    normal * f_n - tangential_velocity * (params.mu * f_n / speed)
}

/// Force together with its derivatives with respect to foot velocity
/// (damping) and foot position (stiffness), both as positive semidefinite
/// 3×3 matrices such that `∂f/∂s = −damping`, `∂f/∂x = −stiffness`.
pub(crate) struct ContactLinearization {
    pub force: Vec3,
    pub damping: Mat3,
    pub stiffness: Mat3,
}

pub(crate) fn contact_force_linearized(
    penetration: f64,
    normal: &Vec3,
    foot_velocity: &Vec3,
    params: &ContactParams,
) -> ContactLinearization {
    let v_n = normal.dot(foot_velocity);
    let v_t = foot_velocity - normal * v_n;
    let force = contact_force(penetration, normal, v_n, &v_t, params);
    let f_n = force.dot(normal);
    if f_n <= 0.0 {
        return ContactLinearization { force, damping: Mat3::zeros(), stiffness: Mat3::zeros() };
    }
    let nn = normal * normal.transpose();
    let tangent_proj = Mat3::identity() - nn;
    let speed = v_t.norm();
    let friction = if speed <= params.v_slip {
        tangent_proj * (params.mu * f_n / params.v_slip)
    } else {
        let dir = v_t / speed;
        (tangent_proj - dir * dir.transpose()) * (params.mu * f_n / speed)
    };
    ContactLinearization {
        force,
        damping: nn * params.d_n + friction,
        stiffness: nn * params.k_n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Z_AXIS;
    use proptest::prelude::*;

    #[test]
    fn separated_is_zero() {
        let p = ContactParams::default();
        assert_eq!(contact_force(-1e-3, &Z_AXIS, -1.0, &Vec3::new(1.0, 0.0, 0.0), &p), Vec3::zeros());
    }

    #[test]
    fn static_penetration() {
        let p = ContactParams::default();
        let f = contact_force(0.004, &Z_AXIS, 0.0, &Vec3::zeros(), &p);
        assert_eq!(f, Vec3::new(0.0, 0.0, p.k_n * 0.004));
    }

    #[test]
    fn fast_separation_never_pulls() {
        let p = ContactParams::default();
        let f = contact_force(0.001, &Z_AXIS, 5.0, &Vec3::zeros(), &p);
        assert_eq!(f, Vec3::zeros());
    }

    proptest! {
        #[test]
        fn sliding_force_in_cone(
            pen in 0.0..0.02f64,
            vn in -2.0..2.0f64,
            vx in -3.0..3.0f64,
            vy in -3.0..3.0f64,
        ) {
            let p = ContactParams::default();
            let f = contact_force(pen, &Z_AXIS, vn, &Vec3::new(vx, vy, 0.0), &p);
            prop_assert!(f.z >= 0.0);
            prop_assert!(f.xy().norm() <= p.mu * f.z + 1e-12);
        }

        #[test]
        fn linearization_matches_finite_difference(
            pen in 0.001..0.01f64,
            vx in -0.5..0.5f64,
            vy in -0.5..0.5f64,
            vz in -0.05..0.05f64,
        ) {
            let p = ContactParams::default();
            let s = Vec3::new(vx, vy, vz);
            let lin = contact_force_linearized(pen, &Z_AXIS, &s, &p);
            prop_assume!(lin.force.z > 1.0);
            let h = 1e-7;
            for k in 0..2 {
                // tangential derivative only; the friction magnitude also
                // depends on v_n through f_n, which the linearization drops
                let mut sp = s;
                sp[k] += h;
                let mut sm = s;
                sm[k] -= h;
                let fd = (contact_force_linearized(pen, &Z_AXIS, &sp, &p).force
                    - contact_force_linearized(pen, &Z_AXIS, &sm, &p).force) / (2.0 * h);
                let analytic = -lin.damping.column(k);
                prop_assert!((fd - analytic).norm() <= 1e-4 * (1.0 + analytic.norm()));
            }
        }
    }
}
