//! Scenario configuration, presets and TOML loading.
//!
//! A config file may name a `preset`; any key it omits is taken from that
//! preset (desk by default). Unknown keys are rejected with a line/column
//! diagnostic.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Paper,
    Desk,
    PaperFineDelay,
    DeskFineDelay,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::Paper,
        Preset::Desk,
        Preset::PaperFineDelay,
        Preset::DeskFineDelay,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Paper => "paper",
            Preset::Desk => "desk",
            Preset::PaperFineDelay => "paper-fine-delay",
            Preset::DeskFineDelay => "desk-fine-delay",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    pub fn config(self) -> ScenarioConfig {
        let mut cfg = paper_config();
        if matches!(self, Preset::Desk | Preset::DeskFineDelay) {
            cfg.array = ArrayConfig { nt: 16, nr: 16, m: 16 };
            cfg.run.n_trials = 200;
            cfg.run.n_slots = 40;
            cfg.noise.sigma_beta = 1e-3;
        }
        if matches!(self, Preset::PaperFineDelay | Preset::DeskFineDelay) {
            cfg.noise.sigma_tau = 0.67e-9;
        }
        cfg
    }
}

fn paper_config() -> ScenarioConfig {
    ScenarioConfig {
        preset: None,
        physics: PhysicsConfig {
            fc: 30e9,
            c: 3e8,
            slot_duration: 0.02,
            xi: [10.0, 10.0],
            tx_power: 1e5,
            n0: 1.0,
            pathloss_exponent: 2.0,
            reference_distance: 1.0,
        },
        array: ArrayConfig { nt: 64, nr: 64, m: 64 },
        noise: NoiseConfig {
            sigma_tau: 0.67e-6,
            sigma_gamma: 2e3,
            sigma_y: 1.0,
            sigma_d: 0.2,
            sigma_v: 0.5,
            sigma_theta: 0.02_f64.to_radians(),
            sigma_beta: 1.0,
        },
        truth: TruthConfig {
            sigma_v: 0.1,
            sigma_beta: 0.0,
        },
        prior: PriorConfig {
            std_d: 1.0,
            std_theta: 0.005,
            std_v: 2.0,
            std_beta: 0.01,
        },
        vehicles: [100.0, 90.0, 80.0, 70.0]
            .into_iter()
            .map(|x| VehicleSpec {
                x,
                y: 20.0,
                speed_min: 5.0,
                speed_max: 20.0,
            })
            .collect(),
        tracker: TrackerConfig {
            mp_iterations: 10,
            damping: 0.0,
            doppler_every_sweep: false,
            kappa_gain_correction: true,
            pf_particles: 5000,
            feedback_noise_factor: 64.0,
        },
        run: RunConfig {
            n_slots: 100,
            n_trials: 1000,
            seed: 42,
            pmis_antennas: vec![16, 128],
            high_speed: [18.0, 20.0],
            low_speed: [5.0, 7.0],
            max_excluded_fraction: 0.5,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    pub physics: PhysicsConfig,
    pub array: ArrayConfig,
    pub noise: NoiseConfig,
    pub truth: TruthConfig,
    pub prior: PriorConfig,
    pub vehicles: Vec<VehicleSpec>,
    pub tracker: TrackerConfig,
    pub run: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsConfig {
    /// Carrier frequency in Hz.
    pub fc: f64,
    /// Propagation speed in m/s.
    pub c: f64,
    /// Slot duration in seconds.
    pub slot_duration: f64,
    /// Complex radar cross-section as `[re, im]`.
    pub xi: [f64; 2],
    /// Transmit power per vehicle.
    pub tx_power: f64,
    pub n0: f64,
    pub pathloss_exponent: f64,
    pub reference_distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArrayConfig {
    pub nt: usize,
    pub nr: usize,
    /// Vehicle-side receive antennas.
    pub m: usize,
}

/// Observation and tracker process-noise standard deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub sigma_tau: f64,
    pub sigma_gamma: f64,
    pub sigma_y: f64,
    pub sigma_d: f64,
    pub sigma_v: f64,
    pub sigma_theta: f64,
    pub sigma_beta: f64,
}

/// Process noise applied to the simulated ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruthConfig {
    pub sigma_v: f64,
    pub sigma_beta: f64,
}

/// Initial beliefs are centred on the truth plus a draw with these
/// standard deviations, and carry the matching variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub std_d: f64,
    pub std_theta: f64,
    pub std_v: f64,
    pub std_beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleSpec {
    /// Initial position along the road; vehicles drive toward negative x.
    pub x: f64,
    /// Lateral offset from the array axis.
    pub y: f64,
    #[serde(default = "default_speed_min")]
    pub speed_min: f64,
    #[serde(default = "default_speed_max")]
    pub speed_max: f64,
}

fn default_speed_min() -> f64 {
    5.0
}

fn default_speed_max() -> f64 {
    20.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    pub mp_iterations: usize,
    pub damping: f64,
    pub doppler_every_sweep: bool,
    /// Rescale the combined angle message from the array sub-graph by the
    /// coherent array gain (see `tracker::coherent_gain`).
    pub kappa_gain_correction: bool,
    pub pf_particles: usize,
    pub feedback_noise_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub n_slots: usize,
    pub n_trials: usize,
    pub seed: u64,
    /// Antenna counts whose beamwidth `π/N` is scored for misalignment.
    pub pmis_antennas: Vec<usize>,
    pub high_speed: [f64; 2],
    pub low_speed: [f64; 2],
    /// Fraction of excluded trials above which a run counts as degenerate.
    pub max_excluded_fraction: f64,
}

thread_local! {
    static BASE: RefCell<ScenarioConfig> = RefCell::new(Preset::Desk.config());
}

macro_rules! default_from_base {
    ($($ty:ty => $field:ident),* $(,)?) => {
        $(impl Default for $ty {
            fn default() -> Self {
                BASE.with(|b| b.borrow().$field.clone())
            }
        })*
    };
}

default_from_base!(
    PhysicsConfig => physics,
    ArrayConfig => array,
    NoiseConfig => noise,
    TruthConfig => truth,
    PriorConfig => prior,
    TrackerConfig => tracker,
    RunConfig => run,
);

impl Default for ScenarioConfig {
    fn default() -> Self {
        BASE.with(|b| b.borrow().clone())
    }
}

impl ScenarioConfig {
    pub fn preset(p: Preset) -> Self {
        p.config()
    }

    /// Parse TOML text, filling omitted keys from the named preset.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_toml_str_or(text, Preset::Desk)
    }

    /// Like [`from_toml_str`](Self::from_toml_str), with `fallback` used
    /// when the text names no preset.
    pub fn from_toml_str_or(text: &str, fallback: Preset) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let preset = match table.get("preset") {
            None => fallback,
            Some(toml::Value::String(s)) => Preset::from_name(s).ok_or_else(|| {
                Error::Config(format!(
                    "unknown preset `{s}`, expected one of: {}",
                    Preset::ALL.map(Preset::name).join(", ")
                ))
            })?,
            Some(other) => {
                return Err(Error::Config(format!(
                    "`preset` must be a string, got {}",
                    other.type_str()
                )))
            }
        };
        let previous = BASE.with(|b| b.replace(preset.config()));
        let parsed = toml::from_str::<ScenarioConfig>(text);
        BASE.with(|b| b.replace(previous));
        let cfg = parsed.map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_file_or(path, Preset::Desk)
    }

    pub fn from_file_or(path: &Path, fallback: Preset) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str_or(&text, fallback).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, why: &str| Err(Error::Config(format!("{field}: {why}")));
        let p = &self.physics;
        for (name, v) in [
            ("physics.fc", p.fc),
            ("physics.c", p.c),
            ("physics.slot_duration", p.slot_duration),
            ("physics.n0", p.n0),
            ("physics.reference_distance", p.reference_distance),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return fail(name, "must be positive and finite");
            }
        }
        if !(p.tx_power.is_finite() && p.tx_power >= 0.0) {
            return fail("physics.tx_power", "must be non-negative");
        }
        if !(p.pathloss_exponent.is_finite() && p.pathloss_exponent >= 0.0) {
            return fail("physics.pathloss_exponent", "must be non-negative");
        }
        if !p.xi.iter().all(|x| x.is_finite()) {
            return fail("physics.xi", "must be finite");
        }
        let a = &self.array;
        if a.nt == 0 || a.nr == 0 || a.m == 0 {
            return fail("array", "antenna counts must be at least 1");
        }
        let n = &self.noise;
        let t = &self.truth;
        let pr = &self.prior;
        for (name, v) in [
            ("noise.sigma_tau", n.sigma_tau),
            ("noise.sigma_gamma", n.sigma_gamma),
            ("noise.sigma_y", n.sigma_y),
            ("noise.sigma_d", n.sigma_d),
            ("noise.sigma_v", n.sigma_v),
            ("noise.sigma_theta", n.sigma_theta),
            ("noise.sigma_beta", n.sigma_beta),
            ("truth.sigma_v", t.sigma_v),
            ("truth.sigma_beta", t.sigma_beta),
            ("prior.std_d", pr.std_d),
            ("prior.std_theta", pr.std_theta),
            ("prior.std_v", pr.std_v),
            ("prior.std_beta", pr.std_beta),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return fail(name, "standard deviations must be non-negative and finite");
            }
        }
        if self.vehicles.is_empty() {
            return fail("vehicles", "at least one vehicle is required");
        }
        for (k, v) in self.vehicles.iter().enumerate() {
            if !(v.x.is_finite() && v.y.is_finite()) || v.y <= 0.0 {
                return fail(&format!("vehicles[{k}]"), "position must be finite with y > 0");
            }
            if !(v.speed_min >= 0.0 && v.speed_min <= v.speed_max && v.speed_max.is_finite()) {
                return fail(&format!("vehicles[{k}]"), "need 0 <= speed_min <= speed_max");
            }
        }
        let tr = &self.tracker;
        if tr.mp_iterations == 0 {
            return fail("tracker.mp_iterations", "must be at least 1");
        }
        if !(0.0..1.0).contains(&tr.damping) {
            return fail("tracker.damping", "must lie in [0, 1)");
        }
        if tr.pf_particles == 0 {
            return fail("tracker.pf_particles", "must be at least 1");
        }
        if !(tr.feedback_noise_factor.is_finite() && tr.feedback_noise_factor > 0.0) {
            return fail("tracker.feedback_noise_factor", "must be positive");
        }
        let r = &self.run;
        if r.n_slots == 0 {
            return fail("run.n_slots", "must be at least 1");
        }
        if r.n_trials == 0 {
            return fail("run.n_trials", "must be at least 1");
        }
        if r.pmis_antennas.contains(&0) {
            return fail("run.pmis_antennas", "antenna counts must be at least 1");
        }
        if !(0.0..=1.0).contains(&r.max_excluded_fraction) {
            return fail("run.max_excluded_fraction", "must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn xi(&self) -> Complex64 {
        Complex64::new(self.physics.xi[0], self.physics.xi[1])
    }

    pub fn doppler_scale(&self) -> f64 {
        2.0 * self.physics.fc / self.physics.c
    }

    /// Half-beamwidths scored for misalignment.
    pub fn pmis_deltas(&self) -> Vec<f64> {
        self.run.pmis_antennas.iter().map(|&n| PI / n as f64).collect()
    }

    /// The observation-noise variant used by the feedback baseline.
    pub fn with_feedback_noise(&self) -> Self {
        let mut cfg = self.clone();
        cfg.noise.sigma_y *= self.tracker.feedback_noise_factor.sqrt();
        cfg
    }
}
