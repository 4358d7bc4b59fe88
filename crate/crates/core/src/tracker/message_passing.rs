//! Gaussian message passing over the per-slot factor graph.
//!
//! Each slot the tracker predicts all parameters from the previous beliefs,
//! folds in the delay and Doppler observations, and then iterates over the
//! array sub-graph: auxiliary phase variables `ε_q = e^{-jπq cosθ}` link the
//! array samples `y_l` to the angle through the constraint factors `κ_q`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use num_complex::Complex64;

use super::{clamp_angle, predict, rsu_predicted_angle, two_step_angle, update_range, BeliefSet, Beams, PointEstimate, Tracker};
use crate::config::ScenarioConfig;
use crate::error::Result;
use crate::gaussian::{arccos_moments, arcsin_moments, cis_moments, cos_moments, GaussianC, GaussianR, NaturalC, VAR_FLOOR, VAR_MAX};
use crate::observation::{element_amplitude, Observation};

/// Largest phase spread `q·π·σ` a κ message may carry before it is skipped.
/// The lags `q = ±1` are never skipped on these grounds.
const PHASE_GATE: f64 = 0.5;
/// Largest normalized variance fed to the inverse-trig transforms.
const TRIG_VAR_GATE: f64 = 0.1;

/// MF message for one factor of the bilinear Doppler model `γ = C·x·z + noise`,
/// given the Gaussian statistics of the other factor.
pub fn bilinear_mf_message(gamma: f64, other: &GaussianR, c1: f64, sigma: f64) -> GaussianR {
    let second = other.var + other.mean * other.mean;
    if !(second > 0.0) || c1 == 0.0 {
        return GaussianR::vague();
    }
    GaussianR::new(
        gamma * other.mean / (c1 * second),
        (sigma * sigma / (c1 * c1 * second)).clamp(VAR_FLOOR, VAR_MAX),
    )
}

/// Map a message on `cosθ` to a message on `θ` by expanding arccos around
/// the reference angle `theta0`.
fn cos_to_angle(msg: &GaussianR, theta0: f64) -> GaussianR {
    let (c0, s0) = (theta0.cos(), theta0.sin().max(ANGLE_SIN_FLOOR));
    let u = GaussianR::new((msg.mean - c0) / s0, msg.var / (s0 * s0));
    let a = arccos_moments(&u);
    GaussianR::new(theta0 - FRAC_PI_2 + a.mean, a.var.max(VAR_FLOOR))
}

const ANGLE_SIN_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DopplerMessages {
    pub to_v: GaussianR,
    /// Message on `cosθ`.
    pub to_cos: GaussianR,
    pub to_theta: GaussianR,
}

/// Doppler update under the mean-field rule: `γ→v` from the cosine
/// statistics of the incoming angle message, then `γ→cosθ` from the
/// resulting speed belief, mapped back to the angle domain.
pub fn update_speed_and_angle_from_doppler(
    gamma: f64,
    pred_v: &GaussianR,
    theta_msg_in: &GaussianR,
    cfg: &ScenarioConfig,
) -> Result<DopplerMessages> {
    let c1 = cfg.doppler_scale();
    let sigma = cfg.noise.sigma_gamma;
    let (mc, lc) = cos_moments(theta_msg_in);
    let to_v = bilinear_mf_message(gamma, &GaussianR::new(mc, lc), c1, sigma);
    let v_belief = pred_v.product(&to_v)?;
    let to_cos = bilinear_mf_message(gamma, &v_belief, c1, sigma);
    let theta0 = theta_msg_in.mean;
    let s0 = theta0.sin().max(ANGLE_SIN_FLOOR);
    let u_mean = (to_cos.mean - theta0.cos()) / s0;
    let u_var = to_cos.var / (s0 * s0);
    let to_theta = if to_cos.is_vague() || u_var > TRIG_VAR_GATE || u_mean.abs() + 3.0 * u_var.sqrt() > 1.0 {
        GaussianR::vague_at(theta0)
    } else {
        cos_to_angle(&to_cos, theta0)
    };
    Ok(DopplerMessages { to_v, to_cos, to_theta })
}

/// Ratio between the angle information carried by all array samples and
/// the information the per-`q` κ messages attribute to `ε_q`, for an
/// `nt × nr` array. A residual seen at sample `l` is explained in full by
/// every `ε_q` it touches, so each κ message overstates its phase by this
/// factor while the product over `q` understates the total precision by it.
/// Zero when the samples touching `ε_q` pull its phase the wrong way, which
/// happens only for arrays with more transmit than receive elements.
pub fn coherent_gain(q: i64, nt: usize, nr: usize) -> f64 {
    let lo = 1.max(1 - q);
    let hi = (nr as i64).min(nt as i64 - q);
    if q == 0 || hi < lo {
        return 1.0;
    }
    let mean_l = (lo + hi) as f64 / 2.0;
    let g = nt as f64 * ((nt as f64 + 1.0) / 2.0 - mean_l) / q as f64;
    g.max(0.0)
}

/// Messages on the array sub-graph for one slot.
#[derive(Debug, Clone)]
pub struct EpsilonMessages {
    nt: usize,
    nr: usize,
    /// Transmit beam weights `e^{jπ i cos θ_beam}`, `i = 0..nt`.
    weights: Vec<Complex64>,
    /// `κ_q → ε_q`, indexed by `q + nr - 1`.
    pub forward: Vec<GaussianC>,
    /// `y_l → ε_{i-l}`, row-major over `(l, i)`.
    pub from_y: Vec<GaussianC>,
    /// `ε_{i-l} → y_l`, row-major over `(l, i)`.
    pub to_y: Vec<GaussianC>,
    /// Extrinsic `β → y_l`.
    pub beta_to_y: Vec<GaussianC>,
    /// `y_l → β`.
    pub y_to_beta: Vec<GaussianC>,
    /// `κ_q → θ`, indexed like `forward`.
    pub backward: Vec<GaussianR>,
}

impl EpsilonMessages {
    pub fn new(nt: usize, nr: usize, beam_angle: f64) -> Self {
        let c = beam_angle.cos();
        let weights = (0..nt).map(|i| Complex64::from_polar(1.0, PI * i as f64 * c)).collect();
        let n = nt * nr;
        Self {
            nt,
            nr,
            weights,
            forward: vec![GaussianC::vague(); nt + nr - 1],
            from_y: vec![GaussianC::vague(); n],
            to_y: vec![GaussianC::vague(); n],
            beta_to_y: vec![GaussianC::vague(); nr],
            y_to_beta: vec![GaussianC::vague(); nr],
            backward: vec![GaussianR::vague(); nt + nr - 1],
        }
    }

    pub fn q_range(&self) -> std::ops::RangeInclusive<i64> {
        (1 - self.nr as i64)..=(self.nt as i64 - 1)
    }

    fn q_index(&self, q: i64) -> usize {
        (q + self.nr as i64 - 1) as usize
    }

    /// Pairs `(l, i)` (zero-based) linking sample `l` to `ε_q`.
    fn pairs(&self, q: i64) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.nr).filter_map(move |l| {
            let i = l as i64 + q;
            (0..self.nt as i64).contains(&i).then_some((l, i as usize))
        })
    }

    /// Forward `κ_q → ε_q` messages from the angle belief with each `κ_q`'s
    /// own backward message divided out, then the extrinsic `ε → y` messages.
    pub fn update_forward(&mut self, theta: &GaussianR) {
        for q in self.q_range() {
            let k = self.q_index(q);
            let (mc, lc) = cos_moments(&theta.divide(&self.backward[k]));
            self.forward[k] = cis_moments(q, &GaussianR::new(PI * mc, PI * PI * lc));
        }
        self.refresh_to_y();
    }

    fn refresh_to_y(&mut self) {
        for q in self.q_range() {
            let fwd = self.forward[self.q_index(q)];
            let pairs: Vec<_> = self.pairs(q).collect();
            if fwd.is_delta() {
                for (l, i) in pairs {
                    self.to_y[l * self.nt + i] = fwd;
                }
                continue;
            }
            let mut total = NaturalC::default();
            total.add(&fwd);
            for &(l, i) in &pairs {
                total.add(&self.from_y[l * self.nt + i]);
            }
            for (l, i) in pairs {
                let mut ext = total;
                ext.sub(&self.from_y[l * self.nt + i]);
                self.to_y[l * self.nt + i] = ext.to_gaussian();
            }
        }
    }

    /// Aggregate statistics of `Σ_i w_i ε_{i-l}` seen by sample `l`.
    fn aggregate(&self, l: usize) -> (Complex64, f64) {
        let row = &self.to_y[l * self.nt..(l + 1) * self.nt];
        let mean = row.iter().zip(&self.weights).map(|(m, w)| w * m.mean).sum();
        let var = row.iter().map(|m| if m.is_vague() { VAR_MAX } else { m.var }).sum::<f64>();
        (mean, var)
    }

    /// MF messages `y_l → β`, the β belief, and the extrinsic `β → y_l`.
    pub fn update_beta(&mut self, y: &[Complex64], pred_beta: &GaussianC, amp: f64, noise_var: f64) -> GaussianC {
        let mut total = NaturalC::default();
        total.add(pred_beta);
        for l in 0..self.nr {
            let (m, lam) = self.aggregate(l);
            let second = lam + m.norm_sqr();
            self.y_to_beta[l] = if amp > 0.0 && second > 0.0 && lam < VAR_MAX {
                GaussianC::new(
                    m.conj() * y[l] / (amp * second),
                    (noise_var / (amp * amp * second)).clamp(VAR_FLOOR, VAR_MAX),
                )
            } else {
                GaussianC::vague()
            };
            total.add(&self.y_to_beta[l]);
        }
        let belief = if pred_beta.is_delta() { *pred_beta } else { total.to_gaussian() };
        for l in 0..self.nr {
            self.beta_to_y[l] = belief.divide(&self.y_to_beta[l]);
        }
        belief
    }

    /// MF messages `y_l → ε_{i-l}` by soft cancellation of the other terms.
    pub fn update_epsilon(&mut self, y: &[Complex64], amp: f64, noise_var: f64) {
        for l in 0..self.nr {
            let b = self.beta_to_y[l];
            let e_beta = b.mean.norm_sqr() + b.var;
            let row = l * self.nt;
            if b.is_vague() || amp <= 0.0 || !(e_beta > 0.0) {
                self.from_y[row..row + self.nt].fill(GaussianC::vague());
                continue;
            }
            let (s, _) = self.aggregate(l);
            let matched = y[l] * b.mean.conj() / amp;
            let var = (noise_var / (amp * amp * e_beta)).clamp(VAR_FLOOR, VAR_MAX);
            for i in 0..self.nt {
                let w = self.weights[i];
                let own = w * self.to_y[row + i].mean;
                let mean = (matched - e_beta * (s - own)) / (w * e_beta);
                self.from_y[row + i] = GaussianC::new(mean, var);
            }
        }
    }

    /// Belief of `ε_q` formed from the array samples alone.
    pub fn backward_belief(&self, q: i64) -> GaussianC {
        let mut total = NaturalC::default();
        for (l, i) in self.pairs(q) {
            total.add(&self.from_y[l * self.nt + i]);
        }
        total.to_gaussian()
    }

    /// Backward `κ_q → θ` messages combined over `q`.
    ///
    /// Each `ε_q` belief is rotated by the reference phase, its residual
    /// phase recovered through the inverse cosine and inverse sine of its
    /// real and imaginary parts, divided by `q`, and mapped from `cosθ` to
    /// `θ` by an arccos expansion around the reference angle.
    pub fn update_backward(&mut self, theta: &GaussianR, gain_correction: bool, damping: f64) -> Result<GaussianR> {
        let mut out = GaussianR::vague_at(theta.mean);
        for q in self.q_range() {
            if q == 0 {
                continue;
            }
            let k = self.q_index(q);
            let g = if gain_correction { coherent_gain(q, self.nt, self.nr) } else { 1.0 };
            let ext = theta.divide(&self.backward[k]);
            let fresh = self.kappa_message(q, &ext, g)?;
            self.backward[k] = match fresh {
                Some(m) => damp(m, self.backward[k], damping),
                None => GaussianR::vague_at(ext.mean),
            };
            if !self.backward[k].is_vague() {
                out = out.product(&self.backward[k])?;
            }
        }
        Ok(out)
    }

    fn kappa_message(&self, q: i64, ext: &GaussianR, g: f64) -> Result<Option<GaussianR>> {
        let theta0 = ext.mean;
        let c0 = theta0.cos();
        let (_, lc) = cos_moments(ext);
        if g <= 0.0 || (q.abs() > 1 && g * (q.abs() as f64) * PI * lc.sqrt() > PHASE_GATE) {
            return Ok(None);
        }
        let eps = self.backward_belief(q);
        if eps.is_vague() {
            return Ok(None);
        }
        let qf = q as f64;
        let z = eps.mean * Complex64::from_polar(1.0, qf * PI * c0);
        let r = z.norm();
        if !(r > 0.0) {
            return Ok(None);
        }
        let var_n = eps.var / (r * r);
        if var_n / 2.0 > TRIG_VAR_GATE {
            return Ok(None);
        }
        let psi_obs = -z.arg();
        let unit = Complex64::from_polar(1.0, -FRAC_PI_4);
        let from_cos = arccos_moments(&GaussianR::new(unit.re, var_n / 2.0));
        let from_sin = arcsin_moments(&GaussianR::new(-unit.im, var_n / 2.0));
        let residual = from_cos.product(&from_sin)?;
        let psi = (psi_obs + residual.mean - FRAC_PI_4) / g;
        let psi_var = residual.var / g;
        let cos_msg = GaussianR::new(c0 + psi / (qf * PI), psi_var / (qf * qf * PI * PI));
        Ok(Some(cos_to_angle(&cos_msg, theta0)))
    }
}

fn damp(new: GaussianR, old: GaussianR, alpha: f64) -> GaussianR {
    if alpha <= 0.0 || old.is_vague() || new.is_vague() {
        return new;
    }
    let prec = (1.0 - alpha) / new.var + alpha / old.var;
    GaussianR::new((1.0 - alpha) * new.mean + alpha * old.mean, (1.0 / prec).max(VAR_FLOOR))
}

/// One slot of the message-passing tracker.
pub fn track_step(obs: &Observation, prev: &BeliefSet, cfg: &ScenarioConfig) -> Result<BeliefSet> {
    track_step_with_messages(obs, prev, cfg).map(|(b, _)| b)
}

pub(crate) fn track_step_with_messages(
    obs: &Observation,
    prev: &BeliefSet,
    cfg: &ScenarioConfig,
) -> Result<(BeliefSet, EpsilonMessages)> {
    let tc = &cfg.tracker;
    let pred = predict(prev, cfg)?;
    let d = update_range(obs.tau, &pred.d, cfg)?;
    let amp = element_amplitude(cfg);
    let noise_var = (cfg.noise.sigma_y * cfg.noise.sigma_y).max(VAR_FLOOR);
    let mut eps = EpsilonMessages::new(cfg.array.nt, cfg.array.nr, obs.beam_angle);

    let mut doppler: Option<DopplerMessages> = None;
    let mut theta = pred.theta;
    let mut beta = pred.beta;
    for sweep in 0..tc.mp_iterations {
        let gamma_theta = doppler.map_or(GaussianR::vague_at(pred.theta.mean), |m| m.to_theta);
        if doppler.is_none() || tc.doppler_every_sweep {
            let ext = if sweep == 0 { pred.theta } else { theta.divide(&gamma_theta) };
            doppler = Some(update_speed_and_angle_from_doppler(obs.gamma, &pred.v, &ext, cfg)?);
        }
        eps.update_forward(&theta);
        beta = eps.update_beta(&obs.y, &pred.beta, amp, noise_var);
        eps.update_epsilon(&obs.y, amp, noise_var);
        let kappa = eps.update_backward(&theta, tc.kappa_gain_correction, tc.damping)?;
        let dm = doppler.expect("doppler messages computed on the first sweep");
        theta = pred.theta.product(&dm.to_theta)?.product(&kappa)?;
        theta.mean = clamp_angle(theta.mean);
    }
    let dm = doppler.expect("at least one sweep");
    let v = pred.v.product(&dm.to_v)?;

    let mut next = BeliefSet {
        d,
        theta,
        v,
        beta,
        theta_pred_rsu: theta.mean,
        theta_pred_msg: theta,
        theta_pred_vehicle: theta,
    };
    let ahead = predict(&next, cfg)?;
    next.theta_pred_rsu = rsu_predicted_angle(&ahead.theta);
    next.theta_pred_msg = ahead.theta;
    next.theta_pred_vehicle = two_step_angle(prev, pred.theta.mean, cfg)?;
    Ok((next, eps))
}

/// The proposed tracker for one vehicle.
#[derive(Debug, Clone)]
pub struct FactorGraphTracker {
    cfg: ScenarioConfig,
    state: BeliefSet,
}

impl FactorGraphTracker {
    pub fn new(prior: BeliefSet, cfg: ScenarioConfig) -> Self {
        Self { cfg, state: prior }
    }

    pub fn beliefs(&self) -> &BeliefSet {
        &self.state
    }
}

impl Tracker for FactorGraphTracker {
    fn beams(&self) -> Beams {
        self.state.beams()
    }

    fn step(&mut self, obs: &Observation) -> Result<()> {
        self.state = track_step(obs, &self.state, &self.cfg)?;
        Ok(())
    }

    fn estimate(&self) -> PointEstimate {
        self.state.estimate()
    }

    fn theta_var(&self) -> f64 {
        self.state.theta.var
    }
}
