//! Shared 3-D math: rotation matrices on SO(3), skew maps, quadratic Bezier
//! curves and composite mass/inertia aggregation.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Unit axes of the world frame.
pub const X_AXIS: Vec3 = Vec3::new(1.0, 0.0, 0.0);
pub const Y_AXIS: Vec3 = Vec3::new(0.0, 1.0, 0.0);
pub const Z_AXIS: Vec3 = Vec3::new(0.0, 0.0, 1.0);

/// Drift threshold on `‖RᵀR − I‖_F` above which a rotation is re-orthonormalized.
pub const REORTHO_THRESHOLD: f64 = 1e-9;

const SMALL_ANGLE: f64 = 1e-8;

/// Skew-symmetric cross-product matrix, `skew(a) * b == a × b`.
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// A 3×3 rotation matrix. Columns are the body axes expressed in the world
/// frame, so `r.axis(2)` is the body z axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rot3(Mat3);

impl Default for Rot3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rot3 {
    pub fn identity() -> Self {
        Rot3(Mat3::identity())
    }

    /// Wraps a matrix after checking orthonormality and handedness.
    pub fn from_matrix(m: Mat3) -> Result<Self> {
        if !m.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("rotation", "non-finite entry"));
        }
        let err = (m.transpose() * m - Mat3::identity()).norm();
        if err >= 1e-8 || (m.determinant() - 1.0).abs() >= 1e-8 {
            return Err(Error::invalid(
                "rotation",
                format!("not in SO(3): orthonormality error {err:e}"),
            ));
        }
        Ok(Rot3(m))
    }

    /// Wraps a matrix without validation. Callers guarantee membership in SO(3).
    #[cfg(test)]
    pub(crate) fn from_matrix_unchecked(m: Mat3) -> Self {
        Rot3(m)
    }

    /// Row-major construction, convenient for logs and tests.
    pub fn from_row_slice(rows: &[f64; 9]) -> Result<Self> {
        Self::from_matrix(Mat3::from_row_slice(rows))
    }

    pub fn to_row_array(&self) -> [f64; 9] {
        let m = &self.0;
        [
            m[(0, 0)], m[(0, 1)], m[(0, 2)],
            m[(1, 0)], m[(1, 1)], m[(1, 2)],
            m[(2, 0)], m[(2, 1)], m[(2, 2)],
        ]
    }

    /// Fixed-axis roll-pitch-yaw, `Rz(yaw) * Ry(pitch) * Rx(roll)`.
    pub fn from_rpy(roll: f64, pitch: f64, yaw: f64) -> Self {
        let (sr, cr) = roll.sin_cos();
        let (sp, cp) = pitch.sin_cos();
        let (sy, cy) = yaw.sin_cos();
        Rot3(Mat3::new(
            cy * cp,
            cy * sp * sr - sy * cr,
            cy * sp * cr + sy * sr,
            sy * cp,
            sy * sp * sr + cy * cr,
            sy * sp * cr - cy * sr,
            -sp,
            cp * sr,
            cp * cr,
        ))
    }

    /// Rotation by `angle` about a unit `axis`.
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        so3_exp(&(axis * angle))
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    /// Column `i` of the matrix: the body axis `i` in world coordinates.
    pub fn axis(&self, i: usize) -> Vec3 {
        self.0.column(i).into_owned()
    }

    pub fn transpose(&self) -> Rot3 {
        Rot3(self.0.transpose())
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    pub fn inverse_rotate(&self, v: &Vec3) -> Vec3 {
        self.0.tr_mul(v)
    }

    pub fn compose(&self, other: &Rot3) -> Rot3 {
        Rot3(self.0 * other.0)
    }

    /// Frobenius norm of `RᵀR − I`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.0.transpose() * self.0 - Mat3::identity()).norm()
    }

    /// Gram-Schmidt on the columns, applied only when drift exceeds
    /// [`REORTHO_THRESHOLD`].
    pub fn renormalized(self) -> Rot3 {
        if self.orthonormality_error() <= REORTHO_THRESHOLD {
            return self;
        }
        let c0 = self.axis(0).normalize();
        let c1 = self.axis(1) - c0 * c0.dot(&self.axis(1));
        let c1 = c1.normalize();
        let c2 = c0.cross(&c1);
        Rot3(Mat3::from_columns(&[c0, c1, c2]))
    }

    /// Rotates `inertia` from body to world coordinates: `R I Rᵀ`.
    pub fn conjugate(&self, inertia: &Mat3) -> Mat3 {
        self.0 * inertia * self.0.transpose()
    }
}

/// Exponential map from an axis-angle vector to a rotation (Rodrigues).
pub fn so3_exp(w: &Vec3) -> Rot3 {
    let theta2 = w.norm_squared();
    let theta = theta2.sqrt();
    let k = skew(w);
    if theta < SMALL_ANGLE {
        // second-order Taylor expansion
        return Rot3(Mat3::identity() + k + 0.5 * k * k);
    }
    let a = theta.sin() / theta;
    let b = (1.0 - theta.cos()) / theta2;
    Rot3(Mat3::identity() + a * k + b * k * k)
}

/// Logarithm map, inverse of [`so3_exp`] for angles in `[0, π)`.
pub fn so3_log(r: &Rot3) -> Vec3 {
    let m = r.matrix();
    let cos = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = cos.acos();
    let v = Vec3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
    if theta < 1e-7 {
        return 0.5 * v;
    }
    if std::f64::consts::PI - theta < 1e-6 {
        // near a half turn: use the diagonal for the axis
        let d = (m.diagonal() + Vec3::repeat(1.0)) * 0.5;
        let i = d.imax();
        let mut axis = m.column(i).into_owned() + Vec3::ith(i, 1.0);
        axis /= axis.norm();
        if axis.dot(&v) < 0.0 {
            axis = -axis;
        }
        return axis * theta;
    }
    v * (theta / (2.0 * theta.sin()))
}

/// A symmetric positive-definite rotational inertia (kg·m²).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inertia3(Mat3);

impl Inertia3 {
    pub fn new(m: Mat3) -> Result<Self> {
        if !m.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("inertia", "non-finite entry"));
        }
        if (m - m.transpose()).amax() > 1e-12 {
            return Err(Error::invalid("inertia", "not symmetric"));
        }
        let eig = SymmetricEigen::new(m).eigenvalues;
        if eig.iter().any(|&e| e <= 0.0) {
            return Err(Error::invalid("inertia", format!("not positive definite: {eig:?}")));
        }
        Ok(Inertia3(m))
    }

    /// From the six unique entries `ixx, ixy, ixz, iyy, iyz, izz`.
    pub fn from_six(v: [f64; 6]) -> Result<Self> {
        let [ixx, ixy, ixz, iyy, iyz, izz] = v;
        Self::new(Mat3::new(ixx, ixy, ixz, ixy, iyy, iyz, ixz, iyz, izz))
    }

    pub fn diagonal(ixx: f64, iyy: f64, izz: f64) -> Result<Self> {
        Self::new(Mat3::from_diagonal(&Vec3::new(ixx, iyy, izz)))
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn to_six(&self) -> [f64; 6] {
        let m = &self.0;
        [m[(0, 0)], m[(0, 1)], m[(0, 2)], m[(1, 1)], m[(1, 2)], m[(2, 2)]]
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.0).eigenvalues.min()
    }

    pub fn scaled(&self, s: f64) -> Inertia3 {
        Inertia3(self.0 * s)
    }
}

/// Quadratic Bezier curve through three control points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BezierQuad {
    pub p0: Vec3,
    pub p1: Vec3,
    pub p2: Vec3,
}

impl BezierQuad {
    pub fn new(p0: Vec3, p1: Vec3, p2: Vec3) -> Self {
        Self { p0, p1, p2 }
    }

    /// Evaluates the curve; `s` is clamped to `[0, 1]`. Endpoints are exact.
    pub fn eval(&self, s: f64) -> Vec3 {
        let s = s.clamp(0.0, 1.0);
        if s == 0.0 {
            return self.p0;
        }
        if s == 1.0 {
            return self.p2;
        }
        let u = 1.0 - s;
        self.p0 * (u * u) + self.p1 * (2.0 * s * u) + self.p2 * (s * s)
    }
}

/// Mass properties of one body for aggregation: inertia about its own COM,
/// already expressed in the aggregation frame.
#[derive(Debug, Clone, Copy)]
pub struct MassElement {
    pub mass: f64,
    pub inertia: Mat3,
    pub com: Vec3,
}

/// Aggregated mass, inertia about the composite COM, and the composite COM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Composite {
    pub mass: f64,
    pub inertia: Mat3,
    pub com: Vec3,
}

/// Inertia of a point mass `m` displaced by `d`: `m (|d|² I − d dᵀ)`.
pub fn parallel_axis(mass: f64, d: &Vec3) -> Mat3 {
    mass * (Mat3::identity() * d.norm_squared() - d * d.transpose())
}

/// Total mass, mass-weighted COM, and inertia about that COM via the
/// parallel-axis theorem.
pub fn composite_inertia(links: &[MassElement]) -> Result<Composite> {
    if links.is_empty() {
        return Err(Error::invalid("composite_inertia", "no links"));
    }
    if let Some(bad) = links.iter().find(|l| !(l.mass > 0.0)) {
        return Err(Error::invalid(
            "composite_inertia",
            format!("non-positive mass {}", bad.mass),
        ));
    }
    let mass: f64 = links.iter().map(|l| l.mass).sum();
    let com = links.iter().fold(Vec3::zeros(), |acc, l| acc + l.com * l.mass) / mass;
    let inertia = links.iter().fold(Mat3::zeros(), |acc, l| {
        acc + l.inertia + parallel_axis(l.mass, &(l.com - com))
    });
    // symmetrize against round-off
    let inertia = (inertia + inertia.transpose()) * 0.5;
    Ok(Composite { mass, inertia, com })
}

/// Yaw angle of the body x axis projected on the ground plane.
pub fn yaw_of(r: &Rot3) -> f64 {
    let x = r.axis(0);
    x.y.atan2(x.x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn exp_of_zero_is_identity() {
        assert_eq!(*so3_exp(&Vec3::zeros()).matrix(), Mat3::identity());
    }

    #[test]
    fn exp_quarter_turn_yaw() {
        let r = so3_exp(&Vec3::new(0.0, 0.0, PI / 2.0));
        let expect = Mat3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!((r.matrix() - expect).amax() < 1e-15);
    }

    #[test]
    fn exp_half_turn_about_x() {
        let r = so3_exp(&Vec3::new(PI, 0.0, 0.0));
        let expect = Mat3::from_diagonal(&Vec3::new(1.0, -1.0, -1.0));
        assert!((r.matrix() - expect).amax() < 1e-15);
    }

    #[test]
    fn small_angle_branch_is_continuous() {
        let w = Vec3::new(3e-9, -2e-9, 1e-9);
        let a = so3_exp(&w);
        let b = so3_exp(&(w * 10.0));
        assert!(a.orthonormality_error() < 1e-15);
        assert!((a.matrix() - Mat3::identity() - skew(&w)).amax() < 1e-16);
        assert!((b.matrix() - Mat3::identity()).amax() < 1e-7);
    }

    #[test]
    fn log_inverts_exp() {
        for w in [Vec3::new(0.3, -0.2, 0.9), Vec3::new(0.0, 3.1, 0.0), Vec3::new(1e-9, 0.0, 0.0)] {
            assert_relative_eq!(so3_log(&so3_exp(&w)), w, epsilon = 1e-6);
        }
    }

    #[test]
    fn renormalize_repairs_drift() {
        let mut m = *so3_exp(&Vec3::new(0.4, 0.1, -0.3)).matrix();
        m[(0, 0)] += 1e-6;
        let r = Rot3::from_matrix_unchecked(m).renormalized();
        assert!(r.orthonormality_error() < 1e-14);
        assert_relative_eq!(r.matrix().determinant(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn rejects_non_rotation() {
        assert!(Rot3::from_matrix(Mat3::identity() * 2.0).is_err());
        assert!(Rot3::from_matrix(Mat3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0))).is_err());
    }

    #[test]
    fn rpy_matches_axis_composition() {
        let r = Rot3::from_rpy(0.1, -0.4, 1.2);
        let c = Rot3::from_axis_angle(&Z_AXIS, 1.2)
            .compose(&Rot3::from_axis_angle(&Y_AXIS, -0.4))
            .compose(&Rot3::from_axis_angle(&X_AXIS, 0.1));
        assert!((r.matrix() - c.matrix()).amax() < 1e-14);
    }

    #[test]
    fn bezier_endpoints_and_midpoint() {
        let b = BezierQuad::new(
            Vec3::new(0.1, 0.2, 0.3),
            Vec3::new(-1.0, 4.0, 2.0),
            Vec3::new(0.7, -0.3, 0.11),
        );
        assert_eq!(b.eval(0.0), b.p0);
        assert_eq!(b.eval(1.0), b.p2);
        assert_eq!(b.eval(-3.0), b.p0);
        assert_eq!(b.eval(7.0), b.p2);
        assert_relative_eq!(b.eval(0.5), b.p0 * 0.25 + b.p1 * 0.5 + b.p2 * 0.25, epsilon = 1e-15);
    }

    #[test]
    fn inertia_validation() {
        assert!(Inertia3::diagonal(1.0, 2.0, 3.0).is_ok());
        assert!(Inertia3::diagonal(1.0, 0.0, 3.0).is_err());
        assert!(Inertia3::new(Mat3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0)).is_err());
    }

    #[test]
    fn composite_single_link_is_identity() {
        let l = MassElement {
            mass: 2.5,
            inertia: Mat3::new(0.1, 0.01, 0.0, 0.01, 0.2, 0.0, 0.0, 0.0, 0.3),
            com: Vec3::new(0.3, -0.1, 0.2),
        };
        let c = composite_inertia(&[l]).unwrap();
        assert_eq!(c.mass, 2.5);
        assert_relative_eq!(c.com, l.com, epsilon = 1e-15);
        assert_relative_eq!(c.inertia, l.inertia, epsilon = 1e-15);
    }

    #[test]
    fn composite_dumbbell() {
        let d = 0.35;
        let point = |x: f64| MassElement { mass: 1.0, inertia: Mat3::zeros(), com: Vec3::new(x, 0.0, 0.0) };
        let c = composite_inertia(&[point(d), point(-d)]).unwrap();
        assert_eq!(c.mass, 2.0);
        assert_eq!(c.com, Vec3::zeros());
        assert_relative_eq!(c.inertia[(0, 0)], 0.0);
        assert_relative_eq!(c.inertia[(1, 1)], 2.0 * d * d, epsilon = 1e-15);
        assert_relative_eq!(c.inertia[(2, 2)], 2.0 * d * d, epsilon = 1e-15);
    }

    #[test]
    fn composite_rejects_bad_mass() {
        let l = MassElement { mass: 0.0, inertia: Mat3::identity(), com: Vec3::zeros() };
        assert!(composite_inertia(&[l]).is_err());
        assert!(composite_inertia(&[]).is_err());
    }

    fn arb_vec(r: f64) -> impl Strategy<Value = Vec3> {
        (-r..r, -r..r, -r..r).prop_map(|(a, b, c)| Vec3::new(a, b, c))
    }

    fn arb_axis_angle() -> impl Strategy<Value = Vec3> {
        (arb_vec(1.0), 0.0..PI).prop_filter_map("zero axis", |(a, t)| {
            (a.norm() > 1e-3).then(|| a.normalize() * t)
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn exp_inverse_pair(w in arb_axis_angle()) {
            let p = so3_exp(&w).compose(&so3_exp(&-w));
            prop_assert!((p.matrix() - Mat3::identity()).amax() < 1e-10);
        }

        #[test]
        fn rotation_preserves_norm(w in arb_axis_angle(), v in arb_vec(10.0)) {
            let r = so3_exp(&w);
            prop_assert!((r.rotate(&v).norm() - v.norm()).abs() < 1e-12);
        }

        #[test]
        fn bezier_stays_in_hull(p0 in arb_vec(1.0), p1 in arb_vec(1.0), p2 in arb_vec(1.0), s in 0.0..=1.0f64) {
            let x = BezierQuad::new(p0, p1, p2).eval(s);
            // barycentric weights are non-negative and sum to one, so every
            // coordinate lies within the control points' bounds
            for k in 0..3 {
                let lo = p0[k].min(p1[k]).min(p2[k]);
                let hi = p0[k].max(p1[k]).max(p2[k]);
                prop_assert!(x[k] >= lo - 1e-15 && x[k] <= hi + 1e-15);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn composite_is_permutation_invariant(
            raw in proptest::collection::vec((0.1..5.0f64, arb_vec(1.0), arb_vec(0.3)), 2..8),
            seed in any::<u64>(),
        ) {
            let links: Vec<MassElement> = raw
                .iter()
                .map(|(m, c, d)| MassElement {
                    mass: *m,
                    inertia: Mat3::from_diagonal(&d.abs().add_scalar(0.01)),
                    com: *c,
                })
                .collect();
            let mut shuffled = links.clone();
            let n = shuffled.len();
            shuffled.rotate_left((seed as usize) % n);
            shuffled.reverse();
            let a = composite_inertia(&links).unwrap();
            let b = composite_inertia(&shuffled).unwrap();
            prop_assert!((a.mass - b.mass).abs() < 1e-12);
            prop_assert!((a.com - b.com).amax() < 1e-12);
            prop_assert!((a.inertia - b.inertia).amax() < 1e-12);
        }
    }
}
