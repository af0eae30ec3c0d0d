use crate::error::{Error, Result};
use crate::geom::{Mat3, Rot3, Vec3, X_AXIS, Z_AXIS};

/// Orientation constraints of a keyframe, as required world directions of
/// body axes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OrientationTarget {
    pub x: Option<Vec3>,
    pub z: Option<Vec3>,
}

impl OrientationTarget {
    pub fn is_free(&self) -> bool {
        self.x.is_none() && self.z.is_none()
    }

    /// `Σ ‖R_a − target_a‖²` over the constrained axes.
    pub fn error_sq(&self, rot: &Rot3) -> f64 {
        let mut e = 0.0;
        if let Some(x) = self.x {
            e += (rot.axis(0) - x).norm_squared();
        }
        if let Some(z) = self.z {
            e += (rot.axis(2) - z).norm_squared();
        }
        e
    }

    /// A rotation satisfying the constraints; when only the z axis is fixed,
    /// the smallest rotation taking ẑ onto it.
    pub fn representative(&self) -> Rot3 {
        match (self.x, self.z) {
            (Some(x), Some(z)) => {
                let y = z.cross(&x);
                Rot3::from_matrix(Mat3::from_columns(&[x, y, z])).unwrap_or_else(|_| Rot3::identity())
            }
            (None, Some(z)) => {
                let axis = Z_AXIS.cross(&z);
                let s = axis.norm();
                let c = Z_AXIS.dot(&z);
                if s < 1e-12 {
                    if c > 0.0 {
                        Rot3::identity()
                    } else {
                        Rot3::from_axis_angle(&X_AXIS, std::f64::consts::PI)
                    }
                } else {
                    Rot3::from_axis_angle(&(axis / s), s.atan2(c))
                }
            }
            (Some(x), None) => {
                let axis = X_AXIS.cross(&x);
                let s = axis.norm();
                if s < 1e-12 {
                    if X_AXIS.dot(&x) > 0.0 {
                        Rot3::identity()
                    } else {
                        Rot3::from_axis_angle(&Z_AXIS, std::f64::consts::PI)
                    }
                } else {
                    Rot3::from_axis_angle(&(axis / s), s.atan2(X_AXIS.dot(&x)))
                }
            }
            (None, None) => Rot3::identity(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Keyframe {
    pub name: String,
    pub duration: f64,
    pub p_target: Vec3,
    pub orientation: OrientationTarget,
    /// Which feet may touch during this phase.
    pub stance: [bool; 4],
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct KeyframeTable {
    pub frames: Vec<Keyframe>,
}

impl KeyframeTable {
    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn total_duration(&self) -> f64 {
        self.frames.iter().map(|k| k.duration).sum()
    }

    pub fn start_time(&self, index: usize) -> f64 {
        self.frames[..index].iter().map(|k| k.duration).sum()
    }

    /// Index of the keyframe phase containing `t`; the last phase extends
    /// past the end.
    pub fn index_at(&self, t: f64) -> usize {
        let mut end = 0.0;
        for (i, k) in self.frames.iter().enumerate() {
            end += k.duration;
            if t < end {
                return i;
            }
        }
        self.frames.len().saturating_sub(1)
    }

    /// Air intervals per foot implied by the per-phase stance flags.
    pub fn air_intervals(&self) -> [Vec<(f64, f64)>; 4] {
        std::array::from_fn(|leg| {
            let mut out: Vec<(f64, f64)> = Vec::new();
            let mut t = 0.0;
            for k in &self.frames {
                let end = t + k.duration;
                if !k.stance[leg] {
                    match out.last_mut() {
                        Some(last) if (last.1 - t).abs() < 1e-12 => last.1 = end,
                        _ => out.push((t, end)),
                    }
                }
                t = end;
            }
            out
        })
    }
}

pub fn keyframe_query(table: &KeyframeTable, index: usize) -> Result<(Vec3, OrientationTarget)> {
    table
        .frames
        .get(index)
        .map(|k| (k.p_target, k.orientation))
        .ok_or_else(|| Error::invalid("keyframe index", format!("{index} is beyond the {} phases", table.len())))
}
