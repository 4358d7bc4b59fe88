//! Predictive beam tracking for dual-function radar-communication vehicle
//! links.
//!
//! The crate simulates vehicles passing a road-side array, synthesizes the
//! array's radar observations, and tracks each vehicle's range, angle, speed
//! and reflection coefficient with a Gaussian message-passing tracker. An EKF
//! and a bootstrap particle filter are included as baselines. Campaign
//! utilities score beam alignment, SNR and achievable rate.

pub mod config;
pub mod error;
pub mod figures;
pub mod gaussian;
pub mod metrics;
pub mod observation;
pub mod rng;
pub mod scenario;
pub mod baselines;
pub mod campaign;
pub mod tracker;

pub use config::{Preset, ScenarioConfig};
pub use error::{Error, GaussianError, Result};
pub use gaussian::{GaussianC, GaussianR};
pub use observation::Observation;
pub use scenario::VehicleState;
