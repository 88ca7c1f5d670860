//! Command-line front end.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::association::{MatchStrategy, MetricKind};
use crate::error::{Error, Result};
use crate::io::config::load_config;
use crate::io::records::{
    detection_records, load_detections, load_gt, load_tracks, write_detections, write_gt, write_tracks,
};
use crate::lifecycle::OutputPolicy;
use crate::metrics::{
    evaluate, interpolate_tracklets_on, oracle_gt_all, oracle_gt_output, EvalConfig, EvalReport, Matcher,
    DEFAULT_NUM_THRESHOLDS,
};
use crate::sim::Scenario;
use crate::tracker::{process_sequences, TrackerConfig};
use crate::{GtRecord, TrackRecord};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "SIMPLETRACK_THREADS";

#[derive(Debug, Parser)]
#[command(name = "simpletrack", version, about = "3D multi-object tracking by detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the tracker over a detection stream.
    Track {
        #[arg(long)]
        dets: PathBuf,
        /// Profile name (`wod`, `nuscenes`) or configuration file.
        #[arg(long)]
        config: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a track stream against ground truth.
    Eval {
        #[arg(long)]
        tracks: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Fill tracklet gaps and rescore with tracklet means first.
        #[arg(long)]
        interpolate: bool,
        /// Add AMOTA and AMOTP to the report.
        #[arg(long)]
        amota: bool,
        /// Match by BEV center distance in meters instead of IoU.
        #[arg(long, value_name = "METERS")]
        center_distance: Option<f64>,
        #[arg(long)]
        report: PathBuf,
    },
    /// Build ground-truth oracle tracks.
    Oracle {
        #[arg(long)]
        dets: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, value_enum)]
        mode: OracleMode,
        #[arg(long)]
        out: PathBuf,
        /// Tracker configuration for `gt-output` (default `wod`).
        #[arg(long, default_value = "wod")]
        config: String,
    },
    /// Generate a synthetic scene.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out_dets: PathBuf,
        #[arg(long)]
        out_gt: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Sweep association metrics, matching strategies, and stage counts.
    Ablate {
        #[arg(long)]
        dets: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OracleMode {
    GtOutput,
    GtAll,
}

/// Reads the worker cap from the environment.
pub fn thread_cap() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .map(Some)
            .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        Err(_) => Ok(None),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let threads = thread_cap()?;
    match cli.command {
        Command::Track { dets, config, out } => {
            let config = load_config(&config)?;
            let frames = load_detections(&dets)?;
            write_tracks(&process_sequences(&frames, &config, threads)?, &out)
        }
        Command::Eval {
            tracks,
            gt,
            interpolate,
            amota,
            center_distance,
            report,
        } => {
            let tracks = load_tracks(&tracks)?;
            let gts = load_gt(&gt)?;
            let eval = eval_config(center_distance)?;
            let r = eval_tracks(&tracks, &gts, &eval, interpolate, amota)?;
            write_text(&report, &(r.to_json() + "\n"))
        }
        Command::Oracle {
            dets,
            gt,
            mode,
            out,
            config,
        } => {
            let frames = load_detections(&dets)?;
            let gts = load_gt(&gt)?;
            let matcher = EvalConfig::default().matcher;
            let tracks = match mode {
                OracleMode::GtAll => oracle_gt_all(&frames, &gts, &matcher),
                OracleMode::GtOutput => {
                    let mut config = load_config(&config)?;
                    config.lifecycle.output_policy = OutputPolicy::All;
                    oracle_gt_output(&process_sequences(&frames, &config, threads)?, &gts, &matcher)
                }
            };
            write_tracks(&tracks, &out)
        }
        Command::Simulate {
            scenario,
            out_dets,
            out_gt,
            seed,
        } => {
            let text = fs::read_to_string(&scenario)
                .map_err(|e| Error::Config(format!("cannot read `{}`: {e}", scenario.display())))?;
            let sim = Scenario::parse(&text)?.generate(seed);
            write_detections(&detection_records(&sim.frames), &out_dets)?;
            write_gt(&sim.gts, &out_gt)
        }
        Command::Ablate { dets, grid, out } => {
            let frames = load_detections(&dets)?;
            let grid_text = fs::read_to_string(&grid)
                .map_err(|e| Error::Config(format!("cannot read `{}`: {e}", grid.display())))?;
            let grid_spec = Grid::parse(&grid_text)?;
            let gts = match &grid_spec.gt {
                Some(p) => Some(load_gt(&resolve(&grid, p))?),
                None => None,
            };
            let base = load_config(&resolve_config(&grid, &grid_spec.base))?;
            let summary = ablate(&frames, gts.as_deref(), &base, &grid_spec, threads, &out)?;
            write_text(
                &out.join("summary.json"),
                &(serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n"),
            )
        }
    }
}

fn eval_config(center_distance: Option<f64>) -> Result<EvalConfig> {
    Ok(match center_distance {
        Some(d) if d > 0.0 && d.is_finite() => EvalConfig {
            matcher: Matcher::CenterDistance(d),
        },
        Some(d) => return Err(Error::Config(format!("center distance must be positive, got {d}"))),
        None => EvalConfig::default(),
    })
}

/// Evaluates, optionally interpolating over the frames seen in either input.
pub fn eval_tracks(
    tracks: &[TrackRecord],
    gts: &[GtRecord],
    eval: &EvalConfig,
    interpolate: bool,
    amota: bool,
) -> Result<EvalReport> {
    let tracks = if interpolate {
        let mut frames: BTreeMap<String, BTreeSet<u64>> = BTreeMap::new();
        for (seq, f) in gts
            .iter()
            .map(|g| (&g.sequence_id, g.frame_index))
            .chain(tracks.iter().map(|t| (&t.sequence_id, t.frame_index)))
        {
            frames.entry(seq.clone()).or_default().insert(f);
        }
        interpolate_tracklets_on(tracks, &frames)
    } else {
        tracks.to_vec()
    };
    evaluate(&tracks, gts, eval, amota.then_some(DEFAULT_NUM_THRESHOLDS))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn resolve(anchor: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        anchor.parent().unwrap_or(Path::new(".")).join(p)
    }
}

fn resolve_config(anchor: &Path, source: &str) -> String {
    if crate::io::config::Profile::parse(source).is_some() {
        source.to_string()
    } else {
        resolve(anchor, source).to_string_lossy().into_owned()
    }
}

/// Sweep definition for `ablate`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grid {
    /// Profile name or configuration file the cells start from.
    pub base: String,
    pub metrics: Vec<String>,
    pub strategies: Vec<String>,
    /// Any of `two` and `one`.
    pub stages: Vec<String>,
    /// Optional ground truth; when present every cell is evaluated.
    pub gt: Option<String>,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            base: "wod".into(),
            metrics: MetricKind::ALL.iter().map(|m| m.as_str().to_string()).collect(),
            strategies: vec!["hungarian".into(), "greedy".into()],
            stages: vec!["two".into()],
            gt: None,
        }
    }
}

impl Grid {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    /// Expands the grid into named configurations.
    pub fn cells(&self, base: &TrackerConfig) -> Result<Vec<(String, TrackerConfig)>> {
        let mut out = Vec::new();
        for m in &self.metrics {
            let metric = MetricKind::parse(m).ok_or_else(|| Error::Config(format!("unknown metric `{m}`")))?;
            for s in &self.strategies {
                let strategy =
                    MatchStrategy::parse(s).ok_or_else(|| Error::Config(format!("unknown strategy `{s}`")))?;
                for stage in &self.stages {
                    let mut cfg = base.clone();
                    cfg.metric = metric;
                    cfg.strategy = strategy;
                    cfg = match stage.as_str() {
                        "two" => cfg,
                        "one" => cfg.one_stage(),
                        other => return Err(Error::Config(format!("unknown stage mode `{other}`"))),
                    };
                    out.push((format!("{}-{}-{}", metric.as_str(), strategy.as_str(), stage), cfg));
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationCell {
    pub name: String,
    pub tracks: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<EvalReport>,
}

/// Runs every grid cell, writing `<cell>.jsonl` track files under `out`.
pub fn ablate(
    frames: &[crate::tracker::Frame],
    gts: Option<&[GtRecord]>,
    base: &TrackerConfig,
    grid: &Grid,
    threads: Option<usize>,
    out: &Path,
) -> Result<Vec<AblationCell>> {
    fs::create_dir_all(out)?;
    let mut cells = Vec::new();
    for (name, cfg) in grid.cells(base)? {
        let tracks = process_sequences(frames, &cfg, threads)?;
        let file = format!("{name}.jsonl");
        write_tracks(&tracks, &out.join(&file))?;
        let report = match gts {
            Some(g) => Some(evaluate(&tracks, g, &EvalConfig::default(), None)?),
            None => None,
        };
        cells.push(AblationCell {
            name,
            tracks: file,
            report,
        });
    }
    Ok(cells)
}
