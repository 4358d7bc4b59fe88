//! Trackers and the prediction steps they share.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::gaussian::{GaussianC, GaussianR, VAR_FLOOR};
use crate::observation::Observation;

mod message_passing;

pub use message_passing::{
    coherent_gain, track_step, update_speed_and_angle_from_doppler, DopplerMessages, EpsilonMessages,
    FactorGraphTracker,
};

/// Angle means are kept inside this margin of the coverage interval `(0, π)`.
pub const ANGLE_MARGIN: f64 = 0.01;

pub fn clamp_angle(theta: f64) -> f64 {
    theta.clamp(ANGLE_MARGIN, std::f64::consts::PI - ANGLE_MARGIN)
}

/// Marginal beliefs for one vehicle plus the beams planned for the next slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeliefSet {
    pub d: GaussianR,
    pub theta: GaussianR,
    pub v: GaussianR,
    pub beta: GaussianC,
    /// RSU beam for the next slot (one-step prediction mean).
    pub theta_pred_rsu: f64,
    /// The full one-step predicted angle message behind `theta_pred_rsu`.
    pub theta_pred_msg: GaussianR,
    /// Vehicle beam for the next slot (two-step prediction).
    pub theta_pred_vehicle: GaussianR,
}

impl BeliefSet {
    /// Initial beliefs; both beams for the first slot are the one-step
    /// prediction of the prior.
    pub fn from_prior(d: GaussianR, theta: GaussianR, v: GaussianR, beta: GaussianC, cfg: &ScenarioConfig) -> Result<Self> {
        let mut b = BeliefSet {
            d,
            theta,
            v,
            beta,
            theta_pred_rsu: theta.mean,
            theta_pred_msg: theta,
            theta_pred_vehicle: theta,
        };
        let next = predict(&b, cfg)?;
        b.theta_pred_rsu = rsu_predicted_angle(&next.theta);
        b.theta_pred_msg = next.theta;
        b.theta_pred_vehicle = next.theta;
        Ok(b)
    }

    pub fn estimate(&self) -> PointEstimate {
        PointEstimate {
            d: self.d.mean,
            theta: self.theta.mean,
            v: self.v.mean,
            beta: self.beta.mean,
        }
    }

    pub fn beams(&self) -> Beams {
        Beams {
            rsu: self.theta_pred_msg,
            vehicle: self.theta_pred_vehicle,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointEstimate {
    pub d: f64,
    pub theta: f64,
    pub v: f64,
    pub beta: Complex64,
}

/// Predicted angles steering the RSU and vehicle beams in a slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Beams {
    pub rsu: GaussianR,
    pub vehicle: GaussianR,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Predicted {
    pub d: GaussianR,
    pub theta: GaussianR,
    pub v: GaussianR,
    pub beta: GaussianC,
}

/// Linearized one-slot prediction of all four parameters, using the
/// previous belief means as point estimates.
pub fn predict(prev: &BeliefSet, cfg: &ScenarioConfig) -> Result<Predicted> {
    let n = &cfg.noise;
    let t = cfg.physics.slot_duration;
    let (d, th, v) = (prev.d.mean, prev.theta.mean, prev.v.mean);
    if !(d > 0.0) {
        return Err(Error::NonPositiveRange(d));
    }
    let rho = 1.0 + v * t * th.cos() / d;
    Ok(Predicted {
        v: GaussianR::new(v, prev.v.var + n.sigma_v * n.sigma_v),
        d: GaussianR::new(d - v * t * th.cos(), prev.d.var + n.sigma_d * n.sigma_d),
        theta: GaussianR::new(th + v * t * th.sin() / d, prev.theta.var + n.sigma_theta * n.sigma_theta),
        beta: GaussianC::new(prev.beta.mean * rho, rho * rho * prev.beta.var + n.sigma_beta * n.sigma_beta),
    })
}

/// The RSU steers toward the mode of the predicted angle message.
pub fn rsu_predicted_angle(pred_theta: &GaussianR) -> f64 {
    pred_theta.mean
}

/// Angle two slots ahead of `prev`, given the one-step predicted angle mean.
pub fn two_step_angle(prev: &BeliefSet, theta_pred: f64, cfg: &ScenarioConfig) -> Result<GaussianR> {
    let t = cfg.physics.slot_duration;
    let d_pred = prev.d.mean - prev.v.mean * t * prev.theta.mean.cos();
    if !(d_pred > 0.0) {
        return Err(Error::NonPositiveRange(d_pred));
    }
    let s2 = cfg.noise.sigma_theta * cfg.noise.sigma_theta;
    Ok(GaussianR::new(
        theta_pred + prev.v.mean * t * theta_pred.sin() / d_pred,
        2.0 * s2 + prev.theta.var,
    ))
}

/// Range belief from the delay observation and the predicted range message.
pub fn update_range(tau: f64, pred_d: &GaussianR, cfg: &ScenarioConfig) -> Result<GaussianR> {
    let c = cfg.physics.c;
    let var = (cfg.noise.sigma_tau * cfg.noise.sigma_tau * c * c / 4.0).max(VAR_FLOOR);
    Ok(GaussianR::new(c * tau / 2.0, var).product(pred_d)?)
}

/// Beams for the next slot from tracker states at the current and previous
/// slots, expressed as belief sets. Used by trackers that do not carry
/// message-passing beliefs.
pub fn plan_beams(current: &BeliefSet, previous: &BeliefSet, cfg: &ScenarioConfig) -> Result<(f64, GaussianR, GaussianR)> {
    let next = predict(current, cfg)?;
    let from_prev = predict(previous, cfg)?;
    let vehicle = two_step_angle(previous, from_prev.theta.mean, cfg)?;
    Ok((rsu_predicted_angle(&next.theta), next.theta, vehicle))
}

/// Tracker variants compared in a campaign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackerKind {
    Proposed,
    Ekf,
    Pf,
    Feedback,
}

impl TrackerKind {
    pub const ALL: [TrackerKind; 4] = [TrackerKind::Proposed, TrackerKind::Ekf, TrackerKind::Pf, TrackerKind::Feedback];

    pub fn name(self) -> &'static str {
        match self {
            TrackerKind::Proposed => "proposed",
            TrackerKind::Ekf => "ekf",
            TrackerKind::Pf => "pf",
            TrackerKind::Feedback => "feedback",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    /// The configuration the tracker both observes and models; the feedback
    /// variant sees a noisier array.
    pub fn effective_config(self, cfg: &ScenarioConfig) -> ScenarioConfig {
        match self {
            TrackerKind::Feedback => cfg.with_feedback_noise(),
            _ => cfg.clone(),
        }
    }
}

impl std::fmt::Display for TrackerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

pub trait Tracker: Send {
    /// Beams to use in the upcoming slot.
    fn beams(&self) -> Beams;
    fn step(&mut self, obs: &Observation) -> Result<()>;
    fn estimate(&self) -> PointEstimate;
    /// Angle variance of the current estimate.
    fn theta_var(&self) -> f64;
    /// Whether the tracker had to recover from a numerical degeneracy.
    fn degenerate(&self) -> bool {
        false
    }
}
