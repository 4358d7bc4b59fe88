//! Post-matched-filter radar observations: delay, Doppler and array samples.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::rng::{substream, Purpose};
use crate::scenario::{circular_normal, normal, VehicleState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub tau: f64,
    pub gamma: f64,
    pub y: Vec<Complex64>,
    /// Transmit beam angle the array samples were taken with.
    pub beam_angle: f64,
}

/// Normalized ULA steering vector, element `i` equal to `e^{-jπ i cosθ}/√N`.
pub fn steering(theta: f64, n: usize) -> Vec<Complex64> {
    let scale = 1.0 / (n as f64).sqrt();
    let c = theta.cos();
    (0..n)
        .map(|i| Complex64::from_polar(scale, -PI * i as f64 * c))
        .collect()
}

pub fn observe_delay<R: Rng + ?Sized>(d: f64, cfg: &ScenarioConfig, rng: &mut R) -> f64 {
    2.0 * d / cfg.physics.c + normal(rng, cfg.noise.sigma_tau)
}

pub fn observe_doppler<R: Rng + ?Sized>(v: f64, theta: f64, cfg: &ScenarioConfig, rng: &mut R) -> f64 {
    cfg.doppler_scale() * v * theta.cos() + normal(rng, cfg.noise.sigma_gamma)
}

/// Amplitude `√(e/Nt)` applied to each transmit element.
pub fn element_amplitude(cfg: &ScenarioConfig) -> f64 {
    (cfg.physics.tx_power / cfg.array.nt as f64).sqrt()
}

/// Noise-free array response to a beam steered at `beam_angle`.
pub fn array_response(s: &VehicleState, beam_angle: f64, cfg: &ScenarioConfig) -> Vec<Complex64> {
    let c = s.theta.cos();
    let mismatch = beam_angle.cos() - c;
    let gain: Complex64 = (0..cfg.array.nt)
        .map(|i| Complex64::from_polar(1.0, PI * i as f64 * mismatch))
        .sum();
    let common = s.beta * element_amplitude(cfg) * gain;
    (0..cfg.array.nr)
        .map(|l| common * Complex64::from_polar(1.0, PI * l as f64 * c))
        .collect()
}

pub fn observe_array<R: Rng + ?Sized>(
    s: &VehicleState,
    beam_angle: f64,
    cfg: &ScenarioConfig,
    rng: &mut R,
) -> Vec<Complex64> {
    let var = cfg.noise.sigma_y * cfg.noise.sigma_y;
    array_response(s, beam_angle, cfg)
        .into_iter()
        .map(|y| y + circular_normal(rng, var))
        .collect()
}

/// All three observations of one vehicle in one slot. The noise streams are
/// keyed by `(seed, trial, vehicle, slot)` so every tracker sees the same draws.
pub fn observe(
    s: &VehicleState,
    beam_angle: f64,
    cfg: &ScenarioConfig,
    trial: usize,
    vehicle: usize,
    slot: usize,
) -> Observation {
    let seed = cfg.run.seed;
    let mut r_tau = substream(seed, trial, vehicle, slot, Purpose::Delay);
    let mut r_gamma = substream(seed, trial, vehicle, slot, Purpose::Doppler);
    let mut r_y = substream(seed, trial, vehicle, slot, Purpose::Array);
    Observation {
        tau: observe_delay(s.d, cfg, &mut r_tau),
        gamma: observe_doppler(s.v, s.theta, cfg, &mut r_gamma),
        y: observe_array(s, beam_angle, cfg, &mut r_y),
        beam_angle,
    }
}
