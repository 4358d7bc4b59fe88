//! Ground-truth vehicle motion.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::{ScenarioConfig, VehicleSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub d: f64,
    pub theta: f64,
    pub v: f64,
    pub beta: Complex64,
}

/// Echo reflection coefficient `ξ / 2d`.
pub fn reflection_coefficient(d: f64, xi: Complex64) -> Result<Complex64> {
    if !(d > 0.0) {
        return Err(Error::NonPositiveRange(d));
    }
    Ok(xi / (2.0 * d))
}

/// Log-distance amplitude gain, clamped to unity inside the reference distance.
pub fn pathloss(d: f64, exponent: f64, d0: f64) -> f64 {
    (d0 / d.max(d0)).powf(exponent / 2.0)
}

pub fn circular_normal<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    if var <= 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

pub(crate) fn normal<R: Rng + ?Sized>(rng: &mut R, std: f64) -> f64 {
    if std <= 0.0 {
        return 0.0;
    }
    let z: f64 = rng.sample(StandardNormal);
    std * z
}

/// Initial state of a vehicle at `(x, y)` with a speed drawn uniformly from
/// its configured range.
pub fn initial_state<R: Rng + ?Sized>(spec: &VehicleSpec, cfg: &ScenarioConfig, rng: &mut R) -> Result<VehicleState> {
    let d = spec.x.hypot(spec.y);
    let theta = spec.y.atan2(spec.x);
    let v = if spec.speed_max > spec.speed_min {
        rng.random_range(spec.speed_min..spec.speed_max)
    } else {
        spec.speed_min
    };
    Ok(VehicleState {
        d,
        theta,
        v,
        beta: reflection_coefficient(d, cfg.xi())?,
    })
}

/// Advance the ground truth one slot with the exact (non-linearized) kinematics.
pub fn step_truth<R: Rng + ?Sized>(s: &VehicleState, cfg: &ScenarioConfig, rng: &mut R) -> Result<VehicleState> {
    let dd = s.v * cfg.physics.slot_duration;
    let d_next = (s.d * s.d + dd * dd - 2.0 * s.d * dd * s.theta.cos()).sqrt();
    let theta_next = if dd == 0.0 {
        s.theta
    } else {
        s.theta + (dd * s.theta.sin() / d_next).clamp(-1.0, 1.0).asin()
    };
    if !(theta_next > 0.0 && theta_next < std::f64::consts::PI) || !(d_next > 0.0) {
        return Err(Error::LeftCoverage { theta: theta_next });
    }
    let v_next = (s.v + normal(rng, cfg.truth.sigma_v)).max(0.0);
    let xi = cfg.xi();
    let residual = s.beta - xi / (2.0 * s.d);
    let beta_next = xi / (2.0 * d_next)
        + residual * (s.d / d_next)
        + circular_normal(rng, cfg.truth.sigma_beta * cfg.truth.sigma_beta);
    Ok(VehicleState {
        d: d_next,
        theta: theta_next,
        v: v_next,
        beta: beta_next,
    })
}

/// Truth trajectory of `n_slots` states starting from `s0`.
pub fn trajectory<R: Rng + ?Sized>(
    s0: VehicleState,
    n_slots: usize,
    cfg: &ScenarioConfig,
    rng: &mut R,
) -> Result<Vec<VehicleState>> {
    let mut out = Vec::with_capacity(n_slots);
    let mut s = s0;
    for _ in 0..n_slots {
        s = step_truth(&s, cfg, rng)?;
        out.push(s);
    }
    Ok(out)
}

/// Perturb a true value by `N(0, std²)`; used to draw prior means.
pub fn perturb<R: Rng + ?Sized>(rng: &mut R, value: f64, std: f64) -> f64 {
    match Normal::new(0.0, std) {
        Ok(n) if std > 0.0 => value + n.sample(rng),
        _ => value,
    }
}
