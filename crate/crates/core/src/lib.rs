pub mod env;
pub mod error;
pub mod eval_harness;
pub mod geom;
pub mod homotopy;
pub mod nets;
pub mod ppo;
pub mod rng;
pub mod rigid_body;
pub mod srb_env;
pub mod tasks;

pub use error::{Error, Result};
