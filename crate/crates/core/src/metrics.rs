//! Communication and estimation-quality metrics.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::gaussian::GaussianR;
use crate::observation::steering;

/// Per-vehicle scores for one slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotMetrics {
    pub snr: f64,
    pub rate: f64,
    pub p_mis: f64,
    pub err_d: f64,
    pub err_theta: f64,
    pub err_v: f64,
}

fn beam_gain(a: f64, b: f64, n: usize) -> f64 {
    let ip: Complex64 = steering(a, n)
        .iter()
        .zip(steering(b, n))
        .map(|(x, y)| x.conj() * y)
        .sum();
    ip.norm_sqr()
}

/// Linear downlink SNR with normalized steering vectors, so that perfect
/// prediction on both sides gives `e|α|²/N0`.
pub fn snr(theta_true: f64, theta_pred_rsu: f64, theta_pred_vehicle: f64, alpha: f64, e: f64, cfg: &ScenarioConfig) -> f64 {
    let rx = beam_gain(theta_pred_vehicle, theta_true, cfg.array.m);
    let tx = beam_gain(theta_true, theta_pred_rsu, cfg.array.nt);
    e * alpha * alpha * rx * tx / cfg.physics.n0
}

pub fn rate(snr: f64) -> f64 {
    (1.0 + snr.max(0.0)).log2()
}

/// Achievable sum-rate in bits/s/Hz.
pub fn sum_rate(snrs: &[f64]) -> f64 {
    snrs.iter().map(|&s| rate(s)).sum()
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// Probability that `theta` lies within `±delta` of a Gaussian predicted angle.
pub fn alignment_prob(theta: f64, pred: &GaussianR, delta: f64) -> f64 {
    let sd = pred.var.max(0.0).sqrt();
    if sd == 0.0 {
        return if (pred.mean - theta).abs() <= delta { 1.0 } else { 0.0 };
    }
    let hi = normal_cdf((theta + delta - pred.mean) / sd);
    let lo = normal_cdf((theta - delta - pred.mean) / sd);
    (hi - lo).clamp(0.0, 1.0)
}

/// Probability that either side's beam misses the true angle.
pub fn misalignment_prob(theta_true: f64, vehicle_pred: &GaussianR, rsu_pred: &GaussianR, delta: f64) -> f64 {
    let p = alignment_prob(theta_true, vehicle_pred, delta) * alignment_prob(theta_true, rsu_pred, delta);
    (1.0 - p).clamp(0.0, 1.0)
}

/// Root mean square of a set of errors; `NaN` for an empty set.
pub fn rmse(errors: &[f64]) -> f64 {
    if errors.is_empty() {
        return f64::NAN;
    }
    (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt()
}

/// Empirical CDF as sorted `(value, rank / N)` pairs.
pub fn empirical_cdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.into_iter().enumerate().map(|(i, x)| (x, (i + 1) as f64 / n)).collect()
}

/// Value below which a fraction `p` of the samples fall.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    let cdf = empirical_cdf(values);
    cdf.iter()
        .find(|(_, r)| *r >= p)
        .or(cdf.last())
        .map_or(f64::NAN, |(x, _)| *x)
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}
