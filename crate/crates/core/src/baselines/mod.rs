//! Reference trackers: an extended Kalman filter and a bootstrap particle
//! filter over the same state and observation models.

mod ekf;
mod pf;

pub use ekf::{ekf_step, EkfState, EkfTracker};
pub use pf::{pf_step, Particle, ParticleCloud, PfTracker};

use crate::config::ScenarioConfig;
use crate::error::Result;
use crate::gaussian::{GaussianC, GaussianR};
use crate::tracker::{plan_beams, BeliefSet, Beams};

/// Beam planning for trackers that only expose point estimates and an
/// angle variance: one-step prediction of the current estimate for the RSU,
/// two-step prediction of the previous estimate for the vehicle.
#[derive(Debug, Clone)]
pub(crate) struct BeamPlanner {
    previous: BeliefSet,
    beams: Beams,
}

impl BeamPlanner {
    pub fn new(prior: &BeliefSet) -> Self {
        Self {
            previous: *prior,
            beams: prior.beams(),
        }
    }

    pub fn beams(&self) -> Beams {
        self.beams
    }

    pub fn advance(&mut self, current: BeliefSet, cfg: &ScenarioConfig) -> Result<()> {
        let (_, rsu, vehicle) = plan_beams(&current, &self.previous, cfg)?;
        self.beams = Beams { rsu, vehicle };
        self.previous = current;
        Ok(())
    }
}

pub(crate) fn summary_beliefs(d: GaussianR, theta: GaussianR, v: GaussianR, beta: GaussianC) -> BeliefSet {
    BeliefSet {
        d,
        theta,
        v,
        beta,
        theta_pred_rsu: theta.mean,
        theta_pred_msg: theta,
        theta_pred_vehicle: theta,
    }
}
