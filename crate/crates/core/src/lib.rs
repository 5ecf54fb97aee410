//! Simulation, workspace optimization and Rainbow DQN training for cooperative
//! peg-in-hole insertion by a Delta robot and a 3-RRS platform.

pub mod atlas;
pub mod config;
pub mod env;
pub mod error;
pub mod eval;
pub mod geom;
pub mod kinematics;
pub mod net;
pub mod replay;
pub mod trainer;

pub use config::Config;
pub use error::{Error, Result};
