//! Seeded Monte Carlo campaigns over tracker variants.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{EkfTracker, PfTracker};
use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::gaussian::{GaussianC, GaussianR};
use crate::metrics::{self, misalignment_prob, rate, snr};
use crate::observation::observe;
use crate::rng::{substream, Purpose};
use crate::scenario::{circular_normal, initial_state, pathloss, perturb, step_truth, VehicleState};
use crate::tracker::{BeliefSet, FactorGraphTracker, Tracker, TrackerKind};

/// Bit-exact header of the per-slot trace files.
pub const TRACE_HEADER: &str = "trial,slot,vehicle,tracker,d_true,d_est,theta_true,theta_est,v_true,v_est,beta_re_est,beta_im_est,theta_pred_rsu,theta_pred_vehicle,snr,rate,p_mis";

#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub config: ScenarioConfig,
    pub trackers: Vec<TrackerKind>,
    pub out_dir: Option<PathBuf>,
}

/// One trace line. Field order matches [`TRACE_HEADER`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub trial: usize,
    pub slot: usize,
    pub vehicle: usize,
    pub tracker: TrackerKind,
    pub d_true: f64,
    pub d_est: f64,
    pub theta_true: f64,
    pub theta_est: f64,
    pub v_true: f64,
    pub v_est: f64,
    pub beta_re_est: f64,
    pub beta_im_est: f64,
    pub theta_pred_rsu: f64,
    pub theta_pred_vehicle: f64,
    pub snr: f64,
    pub rate: f64,
    pub p_mis: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpeedClass {
    High,
    Low,
}

impl SpeedClass {
    pub fn of(speed: f64, cfg: &ScenarioConfig) -> Option<Self> {
        let within = |r: [f64; 2]| speed >= r[0] && speed <= r[1];
        if within(cfg.run.high_speed) {
            Some(SpeedClass::High)
        } else if within(cfg.run.low_speed) {
            Some(SpeedClass::Low)
        } else {
            None
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SpeedClass::High => "high",
            SpeedClass::Low => "low",
        }
    }
}

/// Misalignment probability of the primary tracker at one of the scored
/// beamwidths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PmisSample {
    pub slot: usize,
    pub vehicle: usize,
    pub speed_class: SpeedClass,
    pub delta: f64,
    pub p_mis: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub rows: Vec<TraceRow>,
    pub pmis: Vec<PmisSample>,
    /// Trackers that had to recover from a numerical degeneracy.
    pub degenerate: Vec<TrackerKind>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrialOutcome {
    Completed(TrialRecord),
    Excluded { trial: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignResult {
    pub config: ScenarioConfig,
    pub trackers: Vec<TrackerKind>,
    pub trials: Vec<TrialOutcome>,
}

/// Aggregate scores for one tracker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub tracker: TrackerKind,
    pub trials_completed: usize,
    pub trials_excluded: usize,
    pub trials_degenerate: usize,
    pub rmse_d: f64,
    pub rmse_theta: f64,
    pub rmse_v: f64,
    pub median_angle_error: f64,
    pub median_rate: f64,
    pub mean_sum_rate: f64,
    pub mean_p_mis: f64,
}

impl CampaignResult {
    pub fn completed(&self) -> impl Iterator<Item = &TrialRecord> {
        self.trials.iter().filter_map(|t| match t {
            TrialOutcome::Completed(r) => Some(r),
            TrialOutcome::Excluded { .. } => None,
        })
    }

    pub fn excluded_count(&self) -> usize {
        self.trials.len() - self.completed().count()
    }

    pub fn excluded_fraction(&self) -> f64 {
        if self.trials.is_empty() {
            0.0
        } else {
            self.excluded_count() as f64 / self.trials.len() as f64
        }
    }

    /// True when more trials were excluded than the configured threshold
    /// allows.
    pub fn is_degenerate(&self) -> bool {
        self.excluded_fraction() > self.config.run.max_excluded_fraction
    }

    pub fn rows(&self, tracker: TrackerKind) -> impl Iterator<Item = &TraceRow> {
        self.completed().flat_map(move |r| r.rows.iter().filter(move |row| row.tracker == tracker))
    }

    pub fn summary(&self) -> Vec<SummaryRow> {
        self.trackers
            .iter()
            .map(|&k| {
                let rows: Vec<&TraceRow> = self.rows(k).collect();
                let err = |f: fn(&TraceRow) -> f64| rows.iter().map(|r| f(r)).collect::<Vec<_>>();
                let e_d = err(|r| r.d_est - r.d_true);
                let e_t = err(|r| r.theta_est - r.theta_true);
                let e_v = err(|r| r.v_est - r.v_true);
                let abs_t: Vec<f64> = e_t.iter().map(|e| e.abs()).collect();
                let rates = err(|r| r.rate);
                let sums = sum_rates(&rows);
                let mean = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
                SummaryRow {
                    tracker: k,
                    trials_completed: self.completed().count(),
                    trials_excluded: self.excluded_count(),
                    trials_degenerate: self.completed().filter(|r| r.degenerate.contains(&k)).count(),
                    rmse_d: metrics::rmse(&e_d),
                    rmse_theta: metrics::rmse(&e_t),
                    rmse_v: metrics::rmse(&e_v),
                    median_angle_error: metrics::median(&abs_t),
                    median_rate: metrics::median(&rates),
                    mean_sum_rate: mean(&sums),
                    mean_p_mis: mean(&err(|r| r.p_mis)),
                }
            })
            .collect()
    }

    /// Write `trace_<tracker>.csv` and `summary.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for &k in &self.trackers {
            let path = dir.join(format!("trace_{k}.csv"));
            let mut w = csv::Writer::from_path(&path)?;
            for row in self.rows(k) {
                w.serialize(row)?;
            }
            if self.rows(k).next().is_none() {
                w.write_record(TRACE_HEADER.split(','))?;
            }
            w.flush()?;
            written.push(path);
        }
        let path = dir.join("summary.csv");
        let mut w = csv::Writer::from_path(&path)?;
        for row in self.summary() {
            w.serialize(row)?;
        }
        w.flush()?;
        written.push(path);
        Ok(written)
    }
}

/// Sum over vehicles of the per-vehicle rate, for every `(trial, slot)`.
pub fn sum_rates(rows: &[&TraceRow]) -> Vec<f64> {
    let mut acc: std::collections::BTreeMap<(usize, usize), f64> = Default::default();
    for r in rows {
        *acc.entry((r.trial, r.slot)).or_default() += r.rate;
    }
    acc.into_values().collect()
}

/// Initial beliefs for one vehicle: truth plus a prior-spread draw, with the
/// matching variances.
pub fn draw_prior(truth: &VehicleState, cfg: &ScenarioConfig, trial: usize, vehicle: usize) -> Result<BeliefSet> {
    let p = &cfg.prior;
    let mut rng = substream(cfg.run.seed, trial, vehicle, 0, Purpose::Prior);
    let d = perturb(&mut rng, truth.d, p.std_d);
    let theta = perturb(&mut rng, truth.theta, p.std_theta);
    let v = perturb(&mut rng, truth.v, p.std_v);
    let beta = truth.beta + circular_normal(&mut rng, p.std_beta * p.std_beta);
    BeliefSet::from_prior(
        GaussianR::new(d, p.std_d * p.std_d),
        GaussianR::new(theta, p.std_theta * p.std_theta),
        GaussianR::new(v, p.std_v * p.std_v),
        GaussianC::new(beta, p.std_beta * p.std_beta),
        cfg,
    )
}

/// Ground truth for one vehicle: the initial state followed by `n_slots`
/// states.
pub fn draw_truth(cfg: &ScenarioConfig, trial: usize, vehicle: usize) -> Result<Vec<VehicleState>> {
    let spec = &cfg.vehicles[vehicle];
    let seed = cfg.run.seed;
    let mut s = initial_state(spec, cfg, &mut substream(seed, trial, vehicle, 0, Purpose::InitialState))?;
    let mut out = Vec::with_capacity(cfg.run.n_slots + 1);
    out.push(s);
    for slot in 1..=cfg.run.n_slots {
        s = step_truth(&s, cfg, &mut substream(seed, trial, vehicle, slot, Purpose::Truth))?;
        out.push(s);
    }
    Ok(out)
}

pub fn make_tracker(kind: TrackerKind, prior: BeliefSet, cfg: &ScenarioConfig, trial: usize, vehicle: usize) -> Box<dyn Tracker> {
    let eff = kind.effective_config(cfg);
    match kind {
        TrackerKind::Proposed | TrackerKind::Feedback => Box::new(FactorGraphTracker::new(prior, eff)),
        TrackerKind::Ekf => Box::new(EkfTracker::new(prior, eff)),
        TrackerKind::Pf => Box::new(PfTracker::new(prior, eff, trial, vehicle)),
    }
}

fn primary_tracker(trackers: &[TrackerKind]) -> Option<TrackerKind> {
    if trackers.contains(&TrackerKind::Proposed) {
        Some(TrackerKind::Proposed)
    } else {
        trackers.first().copied()
    }
}

/// Run one trial of every selected tracker over every vehicle.
pub fn run_trial(cfg: &ScenarioConfig, trackers: &[TrackerKind], trial: usize) -> TrialOutcome {
    match simulate_trial(cfg, trackers, trial) {
        Ok(rec) => TrialOutcome::Completed(rec),
        Err(e) => TrialOutcome::Excluded { trial, reason: e.to_string() },
    }
}

fn simulate_trial(cfg: &ScenarioConfig, trackers: &[TrackerKind], trial: usize) -> Result<TrialRecord> {
    let primary = primary_tracker(trackers);
    let deltas = cfg.pmis_deltas();
    let delta = std::f64::consts::PI / cfg.array.nt as f64;
    let mut rec = TrialRecord { trial, rows: Vec::new(), pmis: Vec::new(), degenerate: Vec::new() };
    let mut truths = Vec::with_capacity(cfg.vehicles.len());
    for k in 0..cfg.vehicles.len() {
        truths.push(draw_truth(cfg, trial, k)?);
    }
    for &kind in trackers {
        let eff = kind.effective_config(cfg);
        let mut degenerate = false;
        for (k, truth) in truths.iter().enumerate() {
            let prior = draw_prior(&truth[0], cfg, trial, k)?;
            let class = SpeedClass::of(truth[0].v, cfg);
            let mut tracker = make_tracker(kind, prior, cfg, trial, k);
            for (slot, s) in truth.iter().enumerate().skip(1) {
                let beams = tracker.beams();
                let obs = observe(s, beams.rsu.mean, &eff, trial, k, slot);
                tracker.step(&obs)?;
                let est = tracker.estimate();
                if ![est.d, est.theta, est.v, est.beta.re, est.beta.im].iter().all(|x| x.is_finite()) {
                    return Err(Error::Config(format!("{kind} produced a non-finite estimate")));
                }
                let alpha = pathloss(s.d, cfg.physics.pathloss_exponent, cfg.physics.reference_distance);
                let gain = snr(s.theta, beams.rsu.mean, beams.vehicle.mean, alpha, cfg.physics.tx_power, cfg);
                rec.rows.push(TraceRow {
                    trial,
                    slot,
                    vehicle: k,
                    tracker: kind,
                    d_true: s.d,
                    d_est: est.d,
                    theta_true: s.theta,
                    theta_est: est.theta,
                    v_true: s.v,
                    v_est: est.v,
                    beta_re_est: est.beta.re,
                    beta_im_est: est.beta.im,
                    theta_pred_rsu: beams.rsu.mean,
                    theta_pred_vehicle: beams.vehicle.mean,
                    snr: gain,
                    rate: rate(gain),
                    p_mis: misalignment_prob(s.theta, &beams.vehicle, &beams.rsu, delta),
                });
                if let (Some(c), true) = (class, Some(kind) == primary) {
                    for &dl in &deltas {
                        rec.pmis.push(PmisSample {
                            slot,
                            vehicle: k,
                            speed_class: c,
                            delta: dl,
                            p_mis: misalignment_prob(s.theta, &beams.vehicle, &beams.rsu, dl),
                        });
                    }
                }
            }
            degenerate |= tracker.degenerate();
        }
        if degenerate {
            rec.degenerate.push(kind);
        }
    }
    Ok(rec)
}

/// Run a full campaign. Trials run in parallel and are merged in trial order.
pub fn run(cfg: &ScenarioConfig, trackers: &[TrackerKind]) -> Result<CampaignResult> {
    cfg.validate()?;
    if trackers.is_empty() {
        return Err(Error::Config("trackers: at least one tracker must be selected".into()));
    }
    let trials = (0..cfg.run.n_trials)
        .into_par_iter()
        .map(|t| run_trial(cfg, trackers, t))
        .collect();
    Ok(CampaignResult { config: cfg.clone(), trackers: trackers.to_vec(), trials })
}

/// Run a campaign and write its trace and summary files if an output
/// directory is given.
pub fn execute(spec: &RunSpec) -> Result<CampaignResult> {
    let result = run(&spec.config, &spec.trackers)?;
    if let Some(dir) = &spec.out_dir {
        result.write(dir)?;
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Preset;

    fn small() -> ScenarioConfig {
        let mut c = Preset::Desk.config();
        c.run.n_trials = 3;
        c.run.n_slots = 5;
        c.tracker.pf_particles = 100;
        c
    }

    #[test]
    fn trace_header_matches_row_fields() {
        let dir = tempfile::tempdir().unwrap();
        let c = small();
        let res = run(&c, &[TrackerKind::Proposed]).unwrap();
        res.write(dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join("trace_proposed.csv")).unwrap();
        assert_eq!(text.lines().next().unwrap(), TRACE_HEADER);
        assert_eq!(text.lines().count(), 1 + 3 * 5 * c.vehicles.len());
    }

    #[test]
    fn fully_excluded_run_is_degenerate_and_writes_headers() {
        let dir = tempfile::tempdir().unwrap();
        let res = CampaignResult {
            config: small(),
            trackers: vec![TrackerKind::Ekf],
            trials: (0..3).map(|trial| TrialOutcome::Excluded { trial, reason: "left coverage".into() }).collect(),
        };
        assert_eq!(res.excluded_count(), 3);
        assert!(res.is_degenerate());
        res.write(dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join("trace_ekf.csv")).unwrap();
        assert_eq!(text.trim_end(), TRACE_HEADER);
    }

    #[test]
    fn trackers_share_truth_and_observation_noise() {
        let c = small();
        let res = run(&c, &[TrackerKind::Proposed, TrackerKind::Ekf]).unwrap();
        let a: Vec<_> = res.rows(TrackerKind::Proposed).map(|r| (r.d_true, r.theta_true)).collect();
        let b: Vec<_> = res.rows(TrackerKind::Ekf).map(|r| (r.d_true, r.theta_true)).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn speed_classes() {
        let c = small();
        assert_eq!(SpeedClass::of(19.0, &c), Some(SpeedClass::High));
        assert_eq!(SpeedClass::of(6.0, &c), Some(SpeedClass::Low));
        assert_eq!(SpeedClass::of(12.0, &c), None);
    }
}
