//! Plot-ready CSV tables derived from a campaign.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::campaign::{sum_rates, CampaignResult, SpeedClass, TraceRow};
use crate::error::Result;
use crate::metrics::{empirical_cdf, rmse};
use crate::tracker::TrackerKind;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RmseRow {
    pub slot: usize,
    pub tracker: TrackerKind,
    pub param: &'static str,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CdfRow {
    pub tracker: TrackerKind,
    pub value: f64,
    pub rank: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PmisRow {
    pub slot: usize,
    pub speed_class: SpeedClass,
    pub delta: f64,
    pub p_mis: f64,
}

const PARAMS: [(&str, fn(&TraceRow) -> f64); 3] = [
    ("d", |r| r.d_est - r.d_true),
    ("theta", |r| r.theta_est - r.theta_true),
    ("v", |r| r.v_est - r.v_true),
];

/// Per-slot RMSE across trials and vehicles for each tracker and parameter.
pub fn rmse_vs_slot(res: &CampaignResult) -> Vec<RmseRow> {
    let mut out = Vec::new();
    for &k in &res.trackers {
        let mut by_slot: BTreeMap<usize, Vec<&TraceRow>> = BTreeMap::new();
        for r in res.rows(k) {
            by_slot.entry(r.slot).or_default().push(r);
        }
        for (&slot, rows) in &by_slot {
            for (param, f) in PARAMS {
                let errs: Vec<f64> = rows.iter().map(|r| f(r)).collect();
                out.push(RmseRow { slot, tracker: k, param, rmse: rmse(&errs) });
            }
        }
    }
    out
}

fn cdf_rows(res: &CampaignResult, values: impl Fn(&[&TraceRow]) -> Vec<f64>) -> Vec<CdfRow> {
    let mut out = Vec::new();
    for &k in &res.trackers {
        let rows: Vec<&TraceRow> = res.rows(k).collect();
        for (value, rank) in empirical_cdf(&values(&rows)) {
            out.push(CdfRow { tracker: k, value, rank });
        }
    }
    out
}

pub fn cdf_speed_error(res: &CampaignResult) -> Vec<CdfRow> {
    cdf_rows(res, |rows| rows.iter().map(|r| (r.v_est - r.v_true).abs()).collect())
}

pub fn cdf_angle_error(res: &CampaignResult) -> Vec<CdfRow> {
    cdf_rows(res, |rows| rows.iter().map(|r| (r.theta_est - r.theta_true).abs()).collect())
}

/// CDF of the per-slot sum-rate over all vehicles.
pub fn cdf_rate(res: &CampaignResult) -> Vec<CdfRow> {
    cdf_rows(res, sum_rates)
}

/// Mean misalignment probability of the primary tracker per slot, speed
/// class and beamwidth.
pub fn pmis_vs_slot(res: &CampaignResult) -> Vec<PmisRow> {
    let mut acc: BTreeMap<(usize, SpeedClass, u64), (f64, f64, usize)> = BTreeMap::new();
    for rec in res.completed() {
        for s in &rec.pmis {
            let e = acc.entry((s.slot, s.speed_class, s.delta.to_bits())).or_insert((s.delta, 0.0, 0));
            e.1 += s.p_mis;
            e.2 += 1;
        }
    }
    acc.into_iter()
        .map(|((slot, speed_class, _), (delta, sum, n))| PmisRow { slot, speed_class, delta, p_mis: sum / n as f64 })
        .collect()
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record(header)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Write one CSV per figure family into `dir`.
pub fn emit_figures(res: &CampaignResult, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let cdf_header = ["tracker", "value", "rank"];
    let files = [
        "rmse_vs_slot.csv",
        "cdf_speed_error.csv",
        "cdf_angle_error.csv",
        "cdf_rate.csv",
        "pmis_vs_slot.csv",
    ]
    .map(|f| dir.join(f));
    write_csv(&files[0], &rmse_vs_slot(res), &["slot", "tracker", "param", "rmse"])?;
    write_csv(&files[1], &cdf_speed_error(res), &cdf_header)?;
    write_csv(&files[2], &cdf_angle_error(res), &cdf_header)?;
    write_csv(&files[3], &cdf_rate(res), &cdf_header)?;
    write_csv(&files[4], &pmis_vs_slot(res), &["slot", "speed_class", "delta", "p_mis"])?;
    Ok(files.to_vec())
}
