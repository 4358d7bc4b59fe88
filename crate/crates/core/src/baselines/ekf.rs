use nalgebra::{DMatrix, DVector, Matrix5, SymmetricEigen, Vector5};
use num_complex::Complex64;

use super::{summary_beliefs, BeamPlanner};
use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::gaussian::{GaussianC, GaussianR, VAR_FLOOR};
use crate::observation::{array_response, Observation};
use crate::scenario::VehicleState;
use crate::tracker::{clamp_angle, BeliefSet, Beams, PointEstimate, Tracker};

const REGULARIZATION: f64 = 1e-9;
const JACOBIAN_STEP: f64 = 1e-6;

/// Gaussian state over `(θ, d, v, Re β, Im β)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EkfState {
    pub mean: Vector5<f64>,
    pub cov: Matrix5<f64>,
}

impl EkfState {
    pub fn from_beliefs(b: &BeliefSet) -> Self {
        let mean = Vector5::new(b.theta.mean, b.d.mean, b.v.mean, b.beta.mean.re, b.beta.mean.im);
        let cov = Matrix5::from_diagonal(&Vector5::new(
            b.theta.var,
            b.d.var,
            b.v.var,
            b.beta.var / 2.0,
            b.beta.var / 2.0,
        ));
        Self { mean, cov }
    }

    pub fn to_beliefs(&self) -> BeliefSet {
        let m = &self.mean;
        let p = &self.cov;
        summary_beliefs(
            GaussianR::new(m[1], p[(1, 1)]),
            GaussianR::new(m[0], p[(0, 0)]),
            GaussianR::new(m[2], p[(2, 2)]),
            GaussianC::new(Complex64::new(m[3], m[4]), p[(3, 3)] + p[(4, 4)]),
        )
    }

    fn vehicle(&self) -> VehicleState {
        let m = &self.mean;
        VehicleState {
            theta: m[0],
            d: m[1],
            v: m[2],
            beta: Complex64::new(m[3], m[4]),
        }
    }
}

/// Linearized transition and its Jacobian.
fn transition(x: &Vector5<f64>, t: f64) -> Result<(Vector5<f64>, Matrix5<f64>)> {
    let (th, d, v, br, bi) = (x[0], x[1], x[2], x[3], x[4]);
    if !(d > 0.0) {
        return Err(Error::NonPositiveRange(d));
    }
    let (s, c) = th.sin_cos();
    let rho = 1.0 + v * t * c / d;
    let next = Vector5::new(th + v * t * s / d, d - v * t * c, v, rho * br, rho * bi);
    let drho = [-v * t * s / d, -v * t * c / (d * d), t * c / d];
    #[rustfmt::skip]
    let f = Matrix5::new(
        1.0 + v * t * c / d, -v * t * s / (d * d), t * s / d, 0.0, 0.0,
        v * t * s,           1.0,                  -t * c,    0.0, 0.0,
        0.0,                 0.0,                  1.0,       0.0, 0.0,
        br * drho[0],        br * drho[1],         br * drho[2], rho, 0.0,
        bi * drho[0],        bi * drho[1],         bi * drho[2], 0.0, rho,
    );
    Ok((next, f))
}

/// Stacked observation `(τ, γ, Re y, Im y)`, each row scaled by its noise
/// standard deviation, together with the noise variances after scaling.
struct Stacked {
    z: DVector<f64>,
    scale: Vec<f64>,
    r: Vec<f64>,
}

fn stack_observation(obs: &Observation, cfg: &ScenarioConfig) -> Stacked {
    let n = &cfg.noise;
    let nr = obs.y.len();
    let sy = n.sigma_y / std::f64::consts::SQRT_2;
    let mut sigmas = vec![n.sigma_tau, n.sigma_gamma];
    sigmas.extend(std::iter::repeat_n(sy, 2 * nr));
    let scale: Vec<f64> = sigmas.iter().map(|&s| if s > 0.0 { 1.0 / s } else { 1.0 }).collect();
    let r: Vec<f64> = sigmas.iter().map(|&s| if s > 0.0 { 1.0 } else { 0.0 }).collect();
    let mut raw = vec![obs.tau, obs.gamma];
    raw.extend(obs.y.iter().map(|y| y.re));
    raw.extend(obs.y.iter().map(|y| y.im));
    let z = DVector::from_iterator(raw.len(), raw.iter().zip(&scale).map(|(a, s)| a * s));
    Stacked { z, scale, r }
}

fn measure(x: &Vector5<f64>, beam: f64, cfg: &ScenarioConfig, scale: &[f64]) -> DVector<f64> {
    let s = VehicleState {
        theta: x[0],
        d: x[1],
        v: x[2],
        beta: Complex64::new(x[3], x[4]),
    };
    let y = array_response(&s, beam, cfg);
    let mut raw = vec![2.0 * s.d / cfg.physics.c, cfg.doppler_scale() * s.v * s.theta.cos()];
    raw.extend(y.iter().map(|y| y.re));
    raw.extend(y.iter().map(|y| y.im));
    DVector::from_iterator(raw.len(), raw.iter().zip(scale).map(|(a, s)| a * s))
}

fn numeric_jacobian(x: &Vector5<f64>, beam: f64, cfg: &ScenarioConfig, scale: &[f64]) -> DMatrix<f64> {
    let floors = [1e-3, 1.0, 1.0, 1e-3, 1e-3];
    let m = scale.len();
    let mut h = DMatrix::zeros(m, 5);
    for j in 0..5 {
        let step = JACOBIAN_STEP * x[j].abs().max(floors[j]);
        let mut hi = *x;
        let mut lo = *x;
        hi[j] += step;
        lo[j] -= step;
        let col = (measure(&hi, beam, cfg, scale) - measure(&lo, beam, cfg, scale)) / (2.0 * step);
        h.set_column(j, &col);
    }
    h
}

fn condition(p: Matrix5<f64>) -> Matrix5<f64> {
    let sym = (p + p.transpose()) * 0.5;
    let mut eig = SymmetricEigen::new(sym);
    for ev in eig.eigenvalues.iter_mut() {
        *ev = ev.max(VAR_FLOOR);
    }
    eig.recompose()
}

/// One EKF predict/update cycle against the stacked `(τ, γ, y)` observation.
pub fn ekf_step(state: &EkfState, obs: &Observation, cfg: &ScenarioConfig) -> Result<EkfState> {
    let n = &cfg.noise;
    let (x_pred, f) = transition(&state.mean, cfg.physics.slot_duration)?;
    let q = Matrix5::from_diagonal(&Vector5::new(
        n.sigma_theta * n.sigma_theta,
        n.sigma_d * n.sigma_d,
        n.sigma_v * n.sigma_v,
        n.sigma_beta * n.sigma_beta / 2.0,
        n.sigma_beta * n.sigma_beta / 2.0,
    ));
    let p_pred = condition(f * state.cov * f.transpose() + q);

    let st = stack_observation(obs, cfg);
    let h = numeric_jacobian(&x_pred, obs.beam_angle, cfg, &st.scale);
    let innov = &st.z - measure(&x_pred, obs.beam_angle, cfg, &st.scale);
    let all_noisy = st.r.iter().all(|&r| r > 0.0);

    let (mean, cov) = match (all_noisy, p_pred.try_inverse()) {
        (true, Some(p_inv)) => {
            let ht = h.transpose();
            let info = p_inv + fixed5(&(&ht * &h));
            let cov = info
                .cholesky()
                .map(|c| c.inverse())
                .or_else(|| (info + Matrix5::identity() * REGULARIZATION).try_inverse())
                .ok_or_else(|| Error::Config("singular EKF information matrix".into()))?;
            let gain_innov = cov * fixed5_vec(&(&ht * &innov));
            (x_pred + gain_innov, cov)
        }
        _ => {
            let p_dyn = DMatrix::from_column_slice(5, 5, p_pred.as_slice());
            let mut s = &h * &p_dyn * h.transpose() + DMatrix::from_diagonal(&DVector::from_vec(st.r.clone()));
            let chol = match s.clone().cholesky() {
                Some(c) => c,
                None => {
                    for i in 0..s.nrows() {
                        s[(i, i)] += REGULARIZATION;
                    }
                    s.cholesky()
                        .ok_or_else(|| Error::Config("singular EKF innovation covariance".into()))?
                }
            };
            let pht = &p_dyn * h.transpose();
            let k = chol.solve(&pht.transpose()).transpose();
            let dx = &k * &innov;
            let kh = &k * &h;
            let cov_dyn = (DMatrix::identity(5, 5) - kh) * p_dyn;
            (
                x_pred + Vector5::from_iterator(dx.iter().copied()),
                Matrix5::from_iterator(cov_dyn.iter().copied()),
            )
        }
    };
    let mut mean = mean;
    mean[0] = clamp_angle(mean[0]);
    Ok(EkfState { mean, cov: condition(cov) })
}

fn fixed5(m: &DMatrix<f64>) -> Matrix5<f64> {
    Matrix5::from_iterator(m.iter().copied())
}

fn fixed5_vec(v: &DVector<f64>) -> Vector5<f64> {
    Vector5::from_iterator(v.iter().copied())
}

/// EKF baseline for one vehicle.
#[derive(Debug, Clone)]
pub struct EkfTracker {
    cfg: ScenarioConfig,
    state: EkfState,
    planner: BeamPlanner,
}

impl EkfTracker {
    pub fn new(prior: BeliefSet, cfg: ScenarioConfig) -> Self {
        Self {
            state: EkfState::from_beliefs(&prior),
            planner: BeamPlanner::new(&prior),
            cfg,
        }
    }

    pub fn state(&self) -> &EkfState {
        &self.state
    }
}

impl Tracker for EkfTracker {
    fn beams(&self) -> Beams {
        self.planner.beams()
    }

    fn step(&mut self, obs: &Observation) -> Result<()> {
        self.state = ekf_step(&self.state, obs, &self.cfg)?;
        self.planner.advance(self.state.to_beliefs(), &self.cfg)
    }

    fn estimate(&self) -> PointEstimate {
        let s = self.state.vehicle();
        PointEstimate { d: s.d, theta: s.theta, v: s.v, beta: s.beta }
    }

    fn theta_var(&self) -> f64 {
        self.state.cov[(0, 0)]
    }
}
