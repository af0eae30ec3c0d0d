//! Text model description (TOML): one `[[link]]` table per body, listed
//! parents first, plus `[[foot]]` tables naming the distal link of each leg.

use std::collections::HashMap;

use serde::Deserialize;

use super::{ArticulatedModel, FootSpec, JointType, Link, NJ};
use crate::error::{Error, Result};
use crate::geom::{Inertia3, Rot3, Vec3};

pub const DEFAULT_MODEL_TOML: &str = include_str!("../../assets/quadruped.toml");

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    name: String,
    foot_radius: f64,
    torque_limit: f64,
    #[serde(default = "default_gravity")]
    gravity: [f64; 3],
    trunk_half_extents: [f64; 3],
    nominal_base_height: f64,
    link: Vec<LinkEntry>,
    foot: Vec<FootEntry>,
}

fn default_gravity() -> [f64; 3] {
    [0.0, 0.0, -9.81]
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "lowercase")]
enum JointTag {
    Floating,
    Revolute,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkEntry {
    name: String,
    parent: Option<String>,
    joint_type: JointTag,
    #[serde(default)]
    axis: Option<[f64; 3]>,
    #[serde(default)]
    origin_xyz: [f64; 3],
    #[serde(default)]
    origin_rpy: [f64; 3],
    mass: f64,
    /// ixx, ixy, ixz, iyy, iyz, izz
    inertia: [f64; 6],
    #[serde(default)]
    com: [f64; 3],
    #[serde(default)]
    nominal_angle: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FootEntry {
    link: String,
    offset: [f64; 3],
}

fn v3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

/// Parses and validates a model description. `source_name` labels errors.
pub fn parse_model(text: &str, source_name: &str) -> Result<ArticulatedModel> {
    let file: ModelFile = toml::from_str(text).map_err(|e| Error::config(source_name, e.to_string()))?;
    let cfg = |msg: String| Error::config(source_name, msg);

    let mut index = HashMap::new();
    let mut links = Vec::with_capacity(file.link.len());
    let mut nominal = Vec::new();
    for entry in &file.link {
        let parent = match &entry.parent {
            None => None,
            Some(p) => Some(
                *index
                    .get(p.as_str())
                    .ok_or_else(|| cfg(format!("link '{}': parent '{p}' is not defined above it", entry.name)))?,
            ),
        };
        let joint = match entry.joint_type {
            JointTag::Floating => JointType::Floating,
            JointTag::Revolute => JointType::Revolute,
        };
        let axis = match (joint, entry.axis) {
            (JointType::Revolute, None) => {
                return Err(cfg(format!("link '{}': revolute joint needs an axis", entry.name)))
            }
            (_, Some(a)) => {
                let a = v3(a);
                if a.norm() < 1e-12 {
                    return Err(cfg(format!("link '{}': zero joint axis", entry.name)));
                }
                a.normalize()
            }
            (_, None) => Vec3::zeros(),
        };
        let inertia = Inertia3::from_six(entry.inertia)
            .map_err(|e| cfg(format!("link '{}': inertia: {e}", entry.name)))?;
        if index.insert(entry.name.as_str(), links.len()).is_some() {
            return Err(cfg(format!("duplicate link name '{}'", entry.name)));
        }
        if joint == JointType::Revolute {
            nominal.push(entry.nominal_angle);
        }
        let [r, p, y] = entry.origin_rpy;
        links.push(Link {
            name: entry.name.clone(),
            parent,
            joint,
            axis,
            origin_xyz: v3(entry.origin_xyz),
            origin_rot: Rot3::from_rpy(r, p, y),
            mass: entry.mass,
            inertia,
            com: v3(entry.com),
        });
    }
    if file.foot.len() != 4 {
        return Err(cfg(format!("expected 4 [[foot]] entries, found {}", file.foot.len())));
    }
    let mut feet = Vec::with_capacity(4);
    for f in &file.foot {
        let link = *index
            .get(f.link.as_str())
            .ok_or_else(|| cfg(format!("foot references unknown link '{}'", f.link)))?;
        feet.push(FootSpec { link, offset: v3(f.offset) });
    }
    if nominal.len() != NJ {
        return Err(cfg(format!("expected {NJ} revolute joints, found {}", nominal.len())));
    }
    ArticulatedModel::new(
        file.name,
        links,
        feet.try_into().expect("length checked"),
        file.foot_radius,
        [file.torque_limit; NJ],
        v3(file.gravity),
        v3(file.trunk_half_extents),
        file.nominal_base_height,
        nominal.try_into().expect("length checked"),
    )
    .map_err(|e| cfg(e.to_string()))
}
