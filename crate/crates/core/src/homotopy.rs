//! Continuation between a lumped-mass robot and the full articulated model.
//!
//! Leg links carry `λ` times their mass and inertia; the trunk carries the
//! rest, with its mass, inertia and COM blended linearly between the full
//! trunk values and the composite of the whole robot at the nominal pose.

use crate::error::{Error, Result};
use crate::geom::Inertia3;
use crate::rigid_body::ArticulatedModel;

pub const LAMBDA_MIN: f64 = 0.01;
pub const DEFAULT_TOTAL_ITERATIONS: usize = 900;
pub const DEFAULT_DT_MIN_FRACTION: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomotopyParams {
    pub lambda: f64,
    pub total_iterations: usize,
    pub dt_nominal: f64,
    pub dt_min_fraction: f64,
}

impl Default for HomotopyParams {
    fn default() -> Self {
        HomotopyParams {
            lambda: LAMBDA_MIN,
            total_iterations: DEFAULT_TOTAL_ITERATIONS,
            dt_nominal: 2e-3,
            dt_min_fraction: DEFAULT_DT_MIN_FRACTION,
        }
    }
}

impl HomotopyParams {
    pub fn validate(&self) -> Result<()> {
        check_lambda(self.lambda)?;
        if self.total_iterations == 0 {
            return Err(Error::invalid("homotopy params", "total_iterations must be positive"));
        }
        if !(self.dt_nominal > 0.0) {
            return Err(Error::invalid("homotopy params", "dt_nominal must be positive"));
        }
        if !(self.dt_min_fraction > 0.0 && self.dt_min_fraction <= 1.0) {
            return Err(Error::invalid("homotopy params", "dt_min_fraction must lie in (0, 1]"));
        }
        Ok(())
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if (LAMBDA_MIN..=1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(Error::invalid("lambda", format!("{lambda} is outside [{LAMBDA_MIN}, 1]")))
    }
}

/// Model at continuation parameter `lambda`; geometry is left untouched.
pub fn interpolate_model(full: &ArticulatedModel, lambda: f64) -> Result<ArticulatedModel> {
    check_lambda(lambda)?;
    if lambda == 1.0 {
        return Ok(full.clone());
    }
    let composite = full.composite_nominal();
    let mut out = full.clone();
    for (i, link) in out.links.iter_mut().enumerate() {
        if full.is_leg_link(i) {
            link.mass *= lambda;
            link.inertia = link.inertia.scaled(lambda);
        } else {
            let mu = 1.0 - lambda;
            link.mass = lambda * link.mass + mu * composite.mass;
            link.inertia = Inertia3::new(lambda * link.inertia.matrix() + mu * composite.inertia)?;
            link.com = lambda * link.com + mu * composite.com;
        }
    }
    Ok(out)
}

/// Linear ramp from `LAMBDA_MIN` to 1 over `total` iterations, then held.
pub fn lambda_schedule(iteration: usize, total: usize) -> f64 {
    let frac = if total == 0 { 1.0 } else { (iteration as f64 / total as f64).min(1.0) };
    LAMBDA_MIN + (1.0 - LAMBDA_MIN) * frac
}

/// Physics timestep for `lambda`: shrinks toward `dt_min_fraction · dt_nominal`
/// as the legs get lighter.
pub fn timestep_schedule(lambda: f64, dt_nominal: f64, dt_min_fraction: f64) -> f64 {
    dt_nominal * (dt_min_fraction + (1.0 - dt_min_fraction) * lambda)
}
