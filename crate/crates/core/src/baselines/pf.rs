use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{summary_beliefs, BeamPlanner};
use crate::config::ScenarioConfig;
use crate::error::Result;
use crate::gaussian::{GaussianC, GaussianR};
use crate::observation::{element_amplitude, Observation};
use crate::rng::{substream, Purpose};
use crate::scenario::{circular_normal, normal, VehicleState};
use crate::tracker::{BeliefSet, Beams, PointEstimate, Tracker};

pub type Particle = VehicleState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleCloud {
    pub particles: Vec<Particle>,
    /// Normalized weights.
    pub weights: Vec<f64>,
}

impl ParticleCloud {
    /// Draw `n` particles from the prior beliefs.
    pub fn from_beliefs<R: Rng + ?Sized>(b: &BeliefSet, n: usize, rng: &mut R) -> Self {
        let particles = (0..n)
            .map(|_| VehicleState {
                d: b.d.mean + normal(rng, b.d.var.sqrt()),
                theta: b.theta.mean + normal(rng, b.theta.var.sqrt()),
                v: b.v.mean + normal(rng, b.v.var.sqrt()),
                beta: b.beta.mean + circular_normal(rng, b.beta.var),
            })
            .collect();
        Self { particles, weights: vec![1.0 / n as f64; n] }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn effective_size(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    pub fn mean(&self) -> PointEstimate {
        let mut e = PointEstimate { d: 0.0, theta: 0.0, v: 0.0, beta: Complex64::new(0.0, 0.0) };
        for (p, &w) in self.particles.iter().zip(&self.weights) {
            e.d += w * p.d;
            e.theta += w * p.theta;
            e.v += w * p.v;
            e.beta += p.beta * w;
        }
        e
    }

    pub fn beliefs(&self) -> BeliefSet {
        let m = self.mean();
        let mut var = [0.0; 4];
        for (p, &w) in self.particles.iter().zip(&self.weights) {
            var[0] += w * (p.d - m.d).powi(2);
            var[1] += w * (p.theta - m.theta).powi(2);
            var[2] += w * (p.v - m.v).powi(2);
            var[3] += w * (p.beta - m.beta).norm_sqr();
        }
        summary_beliefs(
            GaussianR::new(m.d, var[0]),
            GaussianR::new(m.theta, var[1]),
            GaussianR::new(m.v, var[2]),
            GaussianC::new(m.beta, var[3]),
        )
    }

    fn resample_systematic<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let n = self.len();
        let step = 1.0 / n as f64;
        let mut u = rng.random::<f64>() * step;
        let mut out = Vec::with_capacity(n);
        let mut cum = self.weights[0];
        let mut i = 0;
        for _ in 0..n {
            while u > cum && i + 1 < n {
                i += 1;
                cum += self.weights[i];
            }
            out.push(self.particles[i]);
            u += step;
        }
        self.particles = out;
        self.weights = vec![step; n];
    }
}

/// Propagate a particle with the exact kinematics and the tracker's model
/// noise. Returns `None` if the particle leaves the coverage interval.
fn propagate<R: Rng + ?Sized>(p: &Particle, cfg: &ScenarioConfig, rng: &mut R) -> Option<Particle> {
    let n = &cfg.noise;
    let dd = p.v * cfg.physics.slot_duration;
    let d_next = (p.d * p.d + dd * dd - 2.0 * p.d * dd * p.theta.cos()).sqrt();
    if !(d_next > 0.0) {
        return None;
    }
    let turn = if dd == 0.0 { 0.0 } else { (dd * p.theta.sin() / d_next).clamp(-1.0, 1.0).asin() };
    let next = VehicleState {
        d: d_next + normal(rng, n.sigma_d),
        theta: p.theta + turn + normal(rng, n.sigma_theta),
        v: p.v + normal(rng, n.sigma_v),
        beta: p.beta * (p.d / d_next) + circular_normal(rng, n.sigma_beta * n.sigma_beta),
    };
    (next.theta > 0.0 && next.theta < PI && next.d > 0.0).then_some(next)
}

/// Transmit-array gain `Σ_i e^{jπ i x}` in closed form.
fn array_gain(x: f64, nt: usize) -> Complex64 {
    let z = Complex64::from_polar(1.0, PI * x);
    let den = Complex64::new(1.0, 0.0) - z;
    if den.norm() < 1e-9 {
        Complex64::new(nt as f64, 0.0)
    } else {
        (Complex64::new(1.0, 0.0) - z.powu(nt as u32)) / den
    }
}

fn log_likelihood(p: &Particle, obs: &Observation, cfg: &ScenarioConfig, amp: f64) -> f64 {
    let n = &cfg.noise;
    let mut ll = 0.0;
    if n.sigma_tau > 0.0 {
        let r = obs.tau - 2.0 * p.d / cfg.physics.c;
        ll -= 0.5 * (r / n.sigma_tau).powi(2);
    }
    if n.sigma_gamma > 0.0 {
        let r = obs.gamma - cfg.doppler_scale() * p.v * p.theta.cos();
        ll -= 0.5 * (r / n.sigma_gamma).powi(2);
    }
    if n.sigma_y > 0.0 {
        let c = p.theta.cos();
        let mut mu = p.beta * amp * array_gain(obs.beam_angle.cos() - c, cfg.array.nt);
        let rotor = Complex64::from_polar(1.0, PI * c);
        let mut sq = 0.0;
        for y in &obs.y {
            sq += (y - mu).norm_sqr();
            mu *= rotor;
        }
        ll -= sq / (n.sigma_y * n.sigma_y);
    }
    ll
}

/// One bootstrap-filter step: propagate, weight, and resample when the
/// effective sample size falls below half the cloud. Returns `true` if every
/// particle had zero weight and the cloud was reset to uniform weights.
pub fn pf_step<R: Rng + ?Sized>(cloud: &mut ParticleCloud, obs: &Observation, cfg: &ScenarioConfig, rng: &mut R) -> bool {
    let amp = element_amplitude(cfg);
    let mut logw = Vec::with_capacity(cloud.len());
    for (p, &w) in cloud.particles.iter_mut().zip(&cloud.weights) {
        match propagate(p, cfg, rng) {
            Some(next) => {
                *p = next;
                logw.push(w.ln() + log_likelihood(p, obs, cfg, amp));
            }
            None => logw.push(f64::NEG_INFINITY),
        }
    }
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let degenerate = !max.is_finite();
    if degenerate {
        let n = cloud.len();
        cloud.weights = vec![1.0 / n as f64; n];
    } else {
        let mut total = 0.0;
        for (w, lw) in cloud.weights.iter_mut().zip(&logw) {
            *w = (lw - max).exp();
            total += *w;
        }
        for w in &mut cloud.weights {
            *w /= total;
        }
    }
    if cloud.effective_size() < cloud.len() as f64 / 2.0 {
        cloud.resample_systematic(rng);
    }
    degenerate
}

/// Particle-filter baseline for one vehicle.
#[derive(Debug, Clone)]
pub struct PfTracker {
    cfg: ScenarioConfig,
    cloud: ParticleCloud,
    planner: BeamPlanner,
    estimate: BeliefSet,
    trial: usize,
    vehicle: usize,
    slot: usize,
    degenerate: bool,
}

impl PfTracker {
    pub fn new(prior: BeliefSet, cfg: ScenarioConfig, trial: usize, vehicle: usize) -> Self {
        let mut rng = substream(cfg.run.seed, trial, vehicle, 0, Purpose::ParticleInit);
        let cloud = ParticleCloud::from_beliefs(&prior, cfg.tracker.pf_particles, &mut rng);
        Self {
            planner: BeamPlanner::new(&prior),
            estimate: prior,
            cloud,
            cfg,
            trial,
            vehicle,
            slot: 0,
            degenerate: false,
        }
    }

    pub fn cloud(&self) -> &ParticleCloud {
        &self.cloud
    }
}

impl Tracker for PfTracker {
    fn beams(&self) -> Beams {
        self.planner.beams()
    }

    fn step(&mut self, obs: &Observation) -> Result<()> {
        self.slot += 1;
        let mut rng = substream(self.cfg.run.seed, self.trial, self.vehicle, self.slot, Purpose::ParticleStep);
        self.degenerate |= pf_step(&mut self.cloud, obs, &self.cfg, &mut rng);
        self.estimate = self.cloud.beliefs();
        self.planner.advance(self.estimate, &self.cfg)
    }

    fn estimate(&self) -> PointEstimate {
        self.estimate.estimate()
    }

    fn theta_var(&self) -> f64 {
        self.estimate.theta.var
    }

    fn degenerate(&self) -> bool {
        self.degenerate
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Preset;
    use crate::observation::{array_response, observe};
    use crate::tracker::update_range;

    fn silent(mut c: ScenarioConfig) -> ScenarioConfig {
        c.noise.sigma_d = 0.0;
        c.noise.sigma_v = 0.0;
        c.noise.sigma_theta = 0.0;
        c.noise.sigma_beta = 0.0;
        c
    }

    #[test]
    fn closed_form_gain_matches_sum() {
        for &x in &[0.0, 1e-12, 0.3, -0.71, 1.0] {
            let direct: Complex64 = (0..7).map(|i| Complex64::from_polar(1.0, PI * i as f64 * x)).sum();
            assert!((array_gain(x, 7) - direct).norm() < 1e-9, "{x}");
        }
    }

    #[test]
    fn likelihood_peaks_at_noise_free_response() {
        let mut c = Preset::Desk.config();
        c.noise.sigma_tau = 0.0;
        c.noise.sigma_gamma = 0.0;
        let s = VehicleState { d: 50.0, theta: 1.0, v: 10.0, beta: Complex64::new(0.1, 0.0) };
        let y = array_response(&s, 1.02, &c);
        let obs = Observation { tau: 0.0, gamma: 0.0, y, beam_angle: 1.02 };
        let amp = element_amplitude(&c);
        assert!(log_likelihood(&s, &obs, &c, amp).abs() < 1e-18);
        let off = VehicleState { theta: 1.001, ..s };
        assert!(log_likelihood(&off, &obs, &c, amp) < 0.0);
    }

    #[test]
    fn single_particle_follows_deterministic_kinematics() {
        let c = silent(Preset::Desk.config());
        let s = VehicleState { d: 80.0, theta: 0.4, v: 15.0, beta: Complex64::new(0.05, 0.0) };
        let mut cloud = ParticleCloud { particles: vec![s], weights: vec![1.0] };
        let mut rng = substream(1, 0, 0, 1, Purpose::ParticleStep);
        let obs = observe(&s, s.theta, &c, 0, 0, 1);
        let degenerate = pf_step(&mut cloud, &obs, &c, &mut rng);
        assert!(!degenerate);
        assert_eq!(cloud.weights, vec![1.0]);
        let dd = 15.0 * c.physics.slot_duration;
        let d_next = (80f64.powi(2) + dd * dd - 2.0 * 80.0 * dd * 0.4f64.cos()).sqrt();
        assert!((cloud.particles[0].d - d_next).abs() < 1e-12);
        assert!((cloud.particles[0].beta.re - 0.05 * 80.0 / d_next).abs() < 1e-15);
    }

    #[test]
    fn range_only_posterior_matches_gaussian_update() {
        let mut c = silent(Preset::Desk.config());
        c.physics.tx_power = 0.0;
        c.noise.sigma_y = 0.0;
        c.noise.sigma_gamma = 0.0;
        c.noise.sigma_tau = 2.0 / c.physics.c;
        let prior = summary_beliefs(
            GaussianR::new(60.0, 4.0),
            GaussianR::delta(PI / 2.0),
            GaussianR::delta(0.0),
            GaussianC::delta(Complex64::new(0.0, 0.0)),
        );
        let n = 20_000;
        let mut rng = substream(3, 0, 0, 0, Purpose::ParticleInit);
        let mut cloud = ParticleCloud::from_beliefs(&prior, n, &mut rng);
        let obs = Observation { tau: 2.0 * 62.0 / c.physics.c, gamma: 0.0, y: vec![], beam_angle: PI / 2.0 };
        let ess_before = {
            let lw: Vec<f64> = cloud.particles.iter().map(|p| log_likelihood(p, &obs, &c, 0.0)).collect();
            let m = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = lw.iter().map(|l| (l - m).exp()).collect();
            let s: f64 = w.iter().sum();
            s * s / w.iter().map(|x| x * x).sum::<f64>()
        };
        let mut r = substream(3, 0, 0, 1, Purpose::ParticleStep);
        pf_step(&mut cloud, &obs, &c, &mut r);
        let expect = update_range(obs.tau, &GaussianR::new(60.0, 4.0), &c).unwrap();
        let got = cloud.beliefs().d;
        let se = (expect.var / ess_before).sqrt();
        assert!((got.mean - expect.mean).abs() < 3.0 * se, "{} vs {} (se {se})", got.mean, expect.mean);
        assert!((got.var / expect.var - 1.0).abs() < 0.1, "{} vs {}", got.var, expect.var);
    }

    #[test]
    fn all_particles_outside_coverage_is_degenerate() {
        let c = silent(Preset::Desk.config());
        let s = VehicleState { d: 10.0, theta: 3.2, v: 0.0, beta: Complex64::new(0.0, 0.0) };
        let mut cloud = ParticleCloud { particles: vec![s; 4], weights: vec![0.25; 4] };
        let obs = Observation { tau: 0.0, gamma: 0.0, y: vec![], beam_angle: 1.0 };
        let mut rng = substream(0, 0, 0, 1, Purpose::ParticleStep);
        assert!(pf_step(&mut cloud, &obs, &c, &mut rng));
        assert_eq!(cloud.weights, vec![0.25; 4]);
    }

    #[test]
    fn tracker_is_reproducible() {
        let mut c = Preset::Desk.config();
        c.tracker.pf_particles = 200;
        let s = VehicleState { d: 60.0, theta: 1.0, v: 12.0, beta: Complex64::new(0.08, 0.0) };
        let prior = BeliefSet::from_prior(
            GaussianR::new(60.0, 1.0),
            GaussianR::new(1.0, 1e-5),
            GaussianR::new(12.0, 4.0),
            GaussianC::new(s.beta, 1e-4),
            &c,
        )
        .unwrap();
        let run = || {
            let mut t = PfTracker::new(prior, c.clone(), 0, 0);
            let obs = observe(&s, t.beams().rsu.mean, &c, 0, 0, 1);
            t.step(&obs).unwrap();
            t.estimate()
        };
        assert_eq!(run(), run());
    }
}
