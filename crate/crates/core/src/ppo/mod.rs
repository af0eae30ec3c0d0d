//! Proximal policy optimization with concurrent estimator training and the
//! staged SRB → homotopy → full-body curriculum.

mod checkpoint;
mod gae;
mod rollout;
mod train;
mod update;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::env::CONTROL_DT;
use crate::error::{Error, Result};

pub use checkpoint::{Checkpoint, FORMAT_VERSION};
pub use gae::{compute_gae, normalize_advantages};
pub use rollout::{collect_rollouts, EnvBatch, RolloutBuffer, RolloutStats};
pub use train::{read_metrics, schedule, MetricsRow, Trainer};
pub use update::{
    clipped_surrogate, estimator_epoch, param_count, ppo_loss_grad, ppo_update, Minibatch, UpdateStats,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Srb = 0,
    Homotopy = 1,
    Fullbody = 2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    Ours = 0,
    DirectTransfer = 1,
    Vanilla = 2,
    /// Reserved so logs stay schema-compatible; training rejects it.
    ImitationTransfer = 3,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Srb, Stage::Homotopy, Stage::Fullbody];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Srb => "srb",
            Stage::Homotopy => "homotopy",
            Stage::Fullbody => "fullbody",
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|s| *s as u8 == tag)
    }
}

impl Baseline {
    pub const ALL: [Baseline; 4] =
        [Baseline::Ours, Baseline::DirectTransfer, Baseline::Vanilla, Baseline::ImitationTransfer];

    pub fn as_str(self) -> &'static str {
        match self {
            Baseline::Ours => "ours",
            Baseline::DirectTransfer => "direct_transfer",
            Baseline::Vanilla => "vanilla",
            Baseline::ImitationTransfer => "imitation_transfer",
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|b| *b as u8 == tag)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::invalid("stage", format!("{s:?}; expected srb, homotopy or fullbody")))
    }
}

impl FromStr for Baseline {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" | "dt" => Ok(Baseline::DirectTransfer),
            "it" | "imitation" => Ok(Baseline::ImitationTransfer),
            _ => Self::ALL.into_iter().find(|x| x.as_str() == s).ok_or_else(|| {
                Error::invalid("baseline", format!("{s:?}; expected ours, direct_transfer or vanilla"))
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub n_envs: usize,
    pub rollout_seconds: f64,
    pub epochs: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_ratio: f64,
    pub learning_rate: f64,
    pub minibatches: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    /// Iteration budget of an SRB run.
    pub pretrain_iterations: usize,
    /// Length of the λ ramp.
    pub homotopy_iterations: usize,
    /// Full-body iterations after the ramp.
    pub finetune_iterations: usize,
    pub checkpoint_every: usize,
    pub stage: Stage,
    pub baseline: Baseline,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_envs: 100,
            rollout_seconds: 4.0,
            epochs: 8,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_ratio: 0.2,
            learning_rate: 3e-4,
            minibatches: 4,
            value_coef: 0.5,
            entropy_coef: 0.005,
            max_grad_norm: 1.0,
            pretrain_iterations: 500,
            homotopy_iterations: crate::homotopy::DEFAULT_TOTAL_ITERATIONS,
            finetune_iterations: 300,
            checkpoint_every: 50,
            stage: Stage::Srb,
            baseline: Baseline::Ours,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Control steps per environment per rollout.
    pub fn steps_per_rollout(&self) -> usize {
        (self.rollout_seconds / CONTROL_DT).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: &str| Err(Error::invalid(format!("training config field {field}"), why.to_string()));
        for (name, v) in [("n_envs", self.n_envs), ("epochs", self.epochs), ("minibatches", self.minibatches)] {
            if v == 0 {
                return bad(name, "must be positive");
            }
        }
        if !(self.rollout_seconds > 0.0) || self.steps_per_rollout() == 0 {
            return bad("rollout_seconds", "must cover at least one control step");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma", "must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda", "must lie in [0, 1]");
        }
        if !(self.clip_ratio > 0.0 && self.clip_ratio < 1.0) {
            return bad("clip_ratio", "must lie in (0, 1)");
        }
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("value_coef", self.value_coef),
            ("entropy_coef", self.entropy_coef),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(name, "must be finite and non-negative");
            }
        }
        if !(self.max_grad_norm > 0.0) {
            return bad("max_grad_norm", "must be positive");
        }
        if self.n_envs * self.steps_per_rollout() < self.minibatches {
            return bad("minibatches", "more minibatches than transitions");
        }
        if self.baseline == Baseline::ImitationTransfer {
            return bad("baseline", "imitation transfer is reserved and not implemented");
        }
        Ok(())
    }

    /// Iterations of the whole run.
    pub fn total_iterations(&self) -> usize {
        match (self.stage, self.baseline) {
            (Stage::Srb, _) => self.pretrain_iterations,
            (Stage::Fullbody, _) => self.finetune_iterations,
            (Stage::Homotopy, _) => self.homotopy_iterations + self.finetune_iterations,
        }
    }
}

#[cfg(test)]
mod tests;
