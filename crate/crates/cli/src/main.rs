//! `beamtrack`: run seeded Monte Carlo tracking campaigns and write CSV traces.

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, ValueEnum};

use beamtrack::campaign::{execute, CampaignResult, RunSpec};
use beamtrack::figures::emit_figures;
use beamtrack::tracker::TrackerKind;
use beamtrack::{Error, Preset, ScenarioConfig};

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DEGENERATE: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PresetArg {
    Paper,
    Desk,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Paper => Preset::Paper,
            PresetArg::Desk => Preset::Desk,
        }
    }
}

/// Antenna counts given as `NT,NR,M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Antennas {
    nt: usize,
    nr: usize,
    m: usize,
}

impl FromStr for Antennas {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>().map_err(|e| format!("`{p}`: {e}")))
            .collect::<Result<_, _>>()?;
        match parts[..] {
            [nt, nr, m] => Ok(Antennas { nt, nr, m }),
            _ => Err(format!("expected NT,NR,M, got `{s}`")),
        }
    }
}

fn parse_tracker(name: &str) -> Result<TrackerKind, String> {
    TrackerKind::from_name(name.trim())
        .ok_or_else(|| format!("unknown tracker `{name}`, expected proposed, ekf, pf or feedback"))
}

#[derive(Debug, Parser)]
#[command(name = "beamtrack", version, about = "Predictive beam tracking Monte Carlo campaigns")]
struct Args {
    /// Scenario file (TOML). Keys it omits come from its `preset`, or from
    /// `--preset` when it names none.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Comma-separated subset of proposed, ekf, pf, feedback.
    #[arg(long, value_name = "LIST", value_delimiter = ',', default_value = "proposed,ekf", value_parser = parse_tracker)]
    trackers: Vec<TrackerKind>,
    #[arg(long, value_name = "N")]
    trials: Option<usize>,
    #[arg(long, value_name = "N")]
    slots: Option<usize>,
    #[arg(long, value_name = "NT,NR,M")]
    antennas: Option<Antennas>,
    #[arg(long, value_name = "DIR", default_value = "results")]
    out: PathBuf,
    #[arg(long, value_enum)]
    preset: Option<PresetArg>,
    /// Also write the plot-ready figure tables.
    #[arg(long)]
    emit_figures: bool,
}

impl Args {
    fn scenario(&self) -> beamtrack::Result<ScenarioConfig> {
        let base = self.preset.map_or(Preset::Desk, Preset::from);
        let mut cfg = match &self.config {
            Some(path) => ScenarioConfig::from_file_or(path, base)?,
            None => base.config(),
        };
        if let Some(seed) = self.seed {
            cfg.run.seed = seed;
        }
        if let Some(n) = self.trials {
            cfg.run.n_trials = n;
        }
        if let Some(n) = self.slots {
            cfg.run.n_slots = n;
        }
        if let Some(a) = self.antennas {
            cfg.array.nt = a.nt;
            cfg.array.nr = a.nr;
            cfg.array.m = a.m;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_summary(res: &CampaignResult) {
    println!(
        "{:<9} {:>6} {:>8} {:>10} {:>12} {:>10} {:>12} {:>11} {:>11}",
        "tracker", "trials", "excluded", "rmse_d", "rmse_theta", "rmse_v", "med_angle", "med_rate", "mean_p_mis"
    );
    for s in res.summary() {
        println!(
            "{:<9} {:>6} {:>8} {:>10.4} {:>12.4e} {:>10.4} {:>12.4e} {:>11.4} {:>11.3e}",
            s.tracker.name(),
            s.trials_completed,
            s.trials_excluded,
            s.rmse_d,
            s.rmse_theta,
            s.rmse_v,
            s.median_angle_error,
            s.median_rate,
            s.mean_p_mis
        );
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let config = match args.scenario() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("beamtrack: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let mut trackers: Vec<TrackerKind> = Vec::new();
    for &k in &args.trackers {
        if !trackers.contains(&k) {
            trackers.push(k);
        }
    }
    let spec = RunSpec { config, trackers, out_dir: Some(args.out.clone()) };
    let res = match execute(&spec) {
        Ok(r) => r,
        Err(e @ Error::Config(_)) => {
            eprintln!("beamtrack: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
        Err(e) => {
            eprintln!("beamtrack: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    };
    print_summary(&res);
    if args.emit_figures {
        if let Err(e) = emit_figures(&res, &args.out) {
            eprintln!("beamtrack: writing figures: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    }
    println!("wrote results to {}", args.out.display());
    if res.is_degenerate() {
        eprintln!(
            "beamtrack: {} of {} trials excluded, above the allowed fraction {}",
            res.excluded_count(),
            res.trials.len(),
            res.config.run.max_excluded_fraction
        );
        return ExitCode::from(EXIT_DEGENERATE);
    }
    ExitCode::SUCCESS
}
