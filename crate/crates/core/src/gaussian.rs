//! Scalar Gaussian messages and the closed-form moment transforms used on
//! the tracking factor graph.
//!
//! Every message and belief in the tracker is either a real Gaussian
//! [`GaussianR`] or a circular complex Gaussian [`GaussianC`]. Products and
//! quotients are carried out in precision (natural parameter) form.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::GaussianError;

/// Smallest variance any non-degenerate message may carry.
pub const VAR_FLOOR: f64 = 1e-12;
/// Variance of a vague (uninformative) message.
pub const VAR_MAX: f64 = 1e12;
/// Inputs to the inverse-trig polynomials are clamped to this magnitude.
pub const TRIG_CLAMP: f64 = 0.999_999;

/// Real scalar Gaussian `N(mean, var)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianR {
    pub mean: f64,
    pub var: f64,
}

/// Circular complex Gaussian `CN(mean, var)`; `var` is the total variance,
/// split evenly between the real and imaginary parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianC {
    pub mean: Complex64,
    pub var: f64,
}

macro_rules! impl_gaussian {
    ($ty:ident, $mean:ty, $zero:expr) => {
        impl $ty {
            pub fn new(mean: $mean, var: f64) -> Self {
                Self { mean, var }
            }

            /// Point mass at `mean`.
            pub fn delta(mean: $mean) -> Self {
                Self { mean, var: 0.0 }
            }

            /// Uninformative message centred on `mean`.
            pub fn vague_at(mean: $mean) -> Self {
                Self { mean, var: VAR_MAX }
            }

            pub fn vague() -> Self {
                Self::vague_at($zero)
            }

            pub fn is_delta(&self) -> bool {
                self.var == 0.0
            }

            pub fn is_vague(&self) -> bool {
                self.var >= VAR_MAX
            }

            pub fn precision(&self) -> f64 {
                1.0 / self.var
            }

            pub fn is_finite(&self) -> bool {
                self.var.is_finite() && !self.var.is_nan() && finite_mean(self.mean)
            }

            /// Precision-weighted product of two Gaussian densities.
            pub fn product(&self, other: &Self) -> Result<Self, GaussianError> {
                match (self.is_delta(), other.is_delta()) {
                    (true, true) => {
                        if self.mean == other.mean {
                            Ok(*self)
                        } else {
                            Err(GaussianError::InconsistentDeltas)
                        }
                    }
                    (true, false) => Ok(*self),
                    (false, true) => Ok(*other),
                    _ if self.is_vague() => Ok(*other),
                    _ if other.is_vague() => Ok(*self),
                    (false, false) => {
                        let prec = 1.0 / self.var + 1.0 / other.var;
                        let mean = (self.mean * (1.0 / self.var)
                            + other.mean * (1.0 / other.var))
                            / prec;
                        Ok(Self { mean, var: (1.0 / prec).clamp(VAR_FLOOR, VAR_MAX) })
                    }
                }
            }

            /// Gaussian division `self / msg`. A non-positive resulting
            /// precision yields a vague message at `self.mean`.
            pub fn divide(&self, msg: &Self) -> Self {
                if self.is_delta() || msg.is_vague() {
                    return *self;
                }
                if msg.is_delta() {
                    return Self::vague_at(self.mean);
                }
                let prec = 1.0 / self.var - 1.0 / msg.var;
                if !(prec > 1.0 / VAR_MAX) {
                    return Self::vague_at(self.mean);
                }
                let mean = (self.mean * (1.0 / self.var) - msg.mean * (1.0 / msg.var)) / prec;
                Self { mean, var: (1.0 / prec).max(VAR_FLOOR) }
            }
        }
    };
}

impl_gaussian!(GaussianR, f64, 0.0);
impl_gaussian!(GaussianC, Complex64, Complex64::new(0.0, 0.0));

fn finite_mean<T: FiniteCheck>(m: T) -> bool {
    m.all_finite()
}

trait FiniteCheck {
    fn all_finite(&self) -> bool;
}

impl FiniteCheck for f64 {
    fn all_finite(&self) -> bool {
        self.is_finite()
    }
}

impl FiniteCheck for Complex64 {
    fn all_finite(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

/// Accumulates natural parameters for products of many messages.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct NaturalC {
    pub eta: Complex64,
    pub prec: f64,
}

impl NaturalC {
    pub fn add(&mut self, g: &GaussianC) {
        if g.is_vague() {
            return;
        }
        let p = 1.0 / g.var.max(VAR_FLOOR);
        self.eta += g.mean * p;
        self.prec += p;
    }

    pub fn sub(&mut self, g: &GaussianC) {
        if g.is_vague() {
            return;
        }
        let p = 1.0 / g.var.max(VAR_FLOOR);
        self.eta -= g.mean * p;
        self.prec -= p;
    }

    pub fn to_gaussian(self) -> GaussianC {
        if !(self.prec > 1.0 / VAR_MAX) {
            return GaussianC::vague();
        }
        GaussianC::new(self.eta / self.prec, (1.0 / self.prec).max(VAR_FLOOR))
    }
}

/// Raw moments `E[x^k]`, `k = 1..=6`, of `x ~ N(m, v)`.
pub fn raw_moments(m: f64, v: f64) -> [f64; 6] {
    let m2 = m * m;
    let m3 = m2 * m;
    let m4 = m2 * m2;
    [
        m,
        m2 + v,
        m3 + 3.0 * m * v,
        m4 + 6.0 * m2 * v + 3.0 * v * v,
        m4 * m + 10.0 * m3 * v + 15.0 * m * v * v,
        m4 * m2 + 15.0 * m4 * v + 45.0 * m2 * v * v + 15.0 * v * v * v,
    ]
}

/// Mean and variance of `cos(theta)` for `theta ~ N(m, λ)`.
pub fn cos_moments(theta: &GaussianR) -> (f64, f64) {
    let (m, lam) = (theta.mean, theta.var.max(0.0));
    let mean = (-lam / 2.0).exp() * m.cos();
    let second = 0.5 + 0.5 * (-2.0 * lam).exp() * (2.0 * m).cos();
    let var = second - mean * mean;
    if lam == 0.0 {
        (mean, 0.0)
    } else {
        (mean, var.max(VAR_FLOOR))
    }
}

/// Moments of the cubic `x + x³/6` under `x ~ N(m, v)`: `(E[g], Var[g])`.
fn odd_cubic_moments(m: f64, v: f64) -> (f64, f64) {
    let [e1, e2, e3, e4, _, e6] = raw_moments(m, v);
    let mean = e1 + e3 / 6.0;
    let second = e2 + e4 / 3.0 + e6 / 36.0;
    (mean, second - mean * mean)
}

fn clamp_trig(x: f64) -> f64 {
    x.clamp(-TRIG_CLAMP, TRIG_CLAMP)
}

fn floor_unless_deterministic(input_var: f64, var: f64) -> f64 {
    if input_var == 0.0 {
        0.0
    } else {
        var.max(VAR_FLOOR).min(VAR_MAX)
    }
}

/// Gaussian approximation of `arccos(v)` via `π/2 − v − v³/6`.
pub fn arccos_moments(v: &GaussianR) -> GaussianR {
    let m = clamp_trig(v.mean);
    let lam = v.var.max(0.0);
    let (g_mean, g_var) = odd_cubic_moments(m, lam);
    GaussianR::new(FRAC_PI_2 - g_mean, floor_unless_deterministic(lam, g_var))
}

/// Gaussian approximation of `arcsin(v)` via `v + v³/6`.
pub fn arcsin_moments(v: &GaussianR) -> GaussianR {
    let m = clamp_trig(v.mean);
    let lam = v.var.max(0.0);
    let (g_mean, g_var) = odd_cubic_moments(m, lam);
    GaussianR::new(g_mean, floor_unless_deterministic(lam, g_var))
}

/// Moments of `exp(−j·q·x)` for `x ~ N(m, λ)`.
pub fn cis_moments(q: i64, x: &GaussianR) -> GaussianC {
    if q == 0 {
        return GaussianC::delta(Complex64::new(1.0, 0.0));
    }
    let qf = q as f64;
    let lam = x.var.max(0.0);
    let mag = (-qf * qf * lam / 2.0).exp();
    let mean = Complex64::from_polar(mag, -qf * x.mean);
    let var = 1.0 - (-qf * qf * lam).exp();
    GaussianC::new(mean, floor_unless_deterministic(lam, var))
}
