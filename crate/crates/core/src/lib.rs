//! INDI attitude, velocity and guidance control for a dual-motor, dual-flap
//! tailsitter, with a synthetic 6-DOF plant and an identification toolbox.

pub mod allocation;
pub mod attitude;
pub mod config;
pub mod controller;
pub mod effectiveness;
pub mod error;
pub mod filters;
pub mod frames;
pub mod guidance;
pub mod identification;
pub mod log;
pub mod plot;
pub mod presets;
pub mod scenario;
pub mod sideslip;
pub mod sim;
pub mod types;
pub mod velocity;

pub use error::{ConfigError, FilterError, FitError, SimError};
pub use frames::{EulerZXY, Quaternion};
pub use types::{ActuatorSet, Airspeed};
