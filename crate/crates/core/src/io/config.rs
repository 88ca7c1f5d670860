//! Named configuration profiles and the key-value configuration format.
//!
//! A configuration document is TOML restricted to dotted keys with scalar
//! or array values. An optional `profile = "wod" | "nuscenes"` selects the
//! base; every other key overrides one field of it. Per-class thresholds use
//! `<group>.default` and `<group>.<class>` keys. Setting `<group>.default`
//! replaces the whole group, so the class keys listed next to it are the
//! only class overrides left. Class keys alone edit the base group in place.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::association::{MatchStrategy, MetricKind};
use crate::error::{Error, Result};
use crate::lifecycle::{ClassThresholds, LifecycleConfig, OutputPolicy};
use crate::motion::{KalmanParams, MotionModelKind, OBS_DIM, STATE_DIM};
use crate::tracker::{CoordinateFrame, MetricGates, TrackerConfig};

pub const CONFIG_FORMAT_VERSION: i64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// Waymo Open Dataset settings.
    Wod,
    /// nuScenes settings.
    Nuscenes,
}

impl Profile {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "wod" => Some(Profile::Wod),
            "nuscenes" => Some(Profile::Nuscenes),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Profile::Wod => "wod",
            Profile::Nuscenes => "nuscenes",
        }
    }

    pub fn config(&self) -> TrackerConfig {
        match self {
            Profile::Wod => {
                let output = ClassThresholds::uniform(0.7)
                    .with("vehicle", 0.7)
                    .with("cyclist", 0.7)
                    .with("pedestrian", 0.5);
                TrackerConfig {
                    nms_iou: 0.25,
                    metric: MetricKind::Giou3d,
                    gates: MetricGates::default(),
                    strategy: MatchStrategy::Hungarian,
                    motion: MotionModelKind::KalmanFilter,
                    kalman: KalmanParams::default(),
                    lifecycle: LifecycleConfig {
                        score_high: output.clone(),
                        score_low: ClassThresholds::uniform(0.1),
                        min_hits: 3,
                        max_miss: 2,
                        output_score: output,
                        output_predictions: false,
                        prediction_score_factor: 0.01,
                        count_stage2_hits: true,
                        compound_prediction_score: false,
                        output_policy: OutputPolicy::Gated,
                    },
                    coordinate_frame: CoordinateFrame::World,
                }
            }
            Profile::Nuscenes => TrackerConfig {
                nms_iou: 0.1,
                metric: MetricKind::Giou3d,
                gates: MetricGates::default(),
                strategy: MatchStrategy::Hungarian,
                motion: MotionModelKind::KalmanFilter,
                kalman: KalmanParams::default(),
                lifecycle: LifecycleConfig {
                    score_high: ClassThresholds::uniform(0.0),
                    score_low: ClassThresholds::uniform(0.0),
                    min_hits: 1,
                    max_miss: 2,
                    output_score: ClassThresholds::uniform(0.0),
                    output_predictions: true,
                    prediction_score_factor: 0.01,
                    count_stage2_hits: true,
                    compound_prediction_score: false,
                    output_policy: OutputPolicy::Gated,
                },
                coordinate_frame: CoordinateFrame::World,
            },
        }
    }
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Profile::Wod.config()
    }
}

fn fmt_float(v: f64) -> String {
    format!("{v:?}")
}

fn fmt_floats(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| fmt_float(*v)).collect();
    format!("[{}]", parts.join(", "))
}

fn write_thresholds(out: &mut String, key: &str, t: &ClassThresholds) {
    let _ = writeln!(out, "{key}.default = {}", fmt_float(t.default));
    for (class, v) in &t.per_class {
        let _ = writeln!(out, "{key}.{class} = {}", fmt_float(*v));
    }
}

/// Renders every field as a flat key-value document in a fixed order.
pub fn to_text(config: &TrackerConfig) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "format_version = {CONFIG_FORMAT_VERSION}");
    let _ = writeln!(out, "nms_iou = {}", fmt_float(config.nms_iou));
    let _ = writeln!(out, "metric = \"{}\"", config.metric.as_str());
    let _ = writeln!(out, "strategy = \"{}\"", config.strategy.as_str());
    let _ = writeln!(out, "motion = \"{}\"", config.motion.as_str());
    let _ = writeln!(out, "coordinate_frame = \"{}\"", config.coordinate_frame.as_str());
    for kind in MetricKind::ALL {
        write_thresholds(&mut out, &format!("gate.{}", kind.as_str()), config.gates.for_kind(kind));
    }
    let k = &config.kalman;
    let _ = writeln!(out, "kalman.initial_variance = {}", fmt_floats(&k.initial_variance));
    let _ = writeln!(out, "kalman.process_noise = {}", fmt_floats(&k.process_noise));
    let _ = writeln!(out, "kalman.observation_noise = {}", fmt_floats(&k.observation_noise));
    let _ = writeln!(out, "kalman.flip_yaw = {}", k.flip_yaw);
    let l = &config.lifecycle;
    write_thresholds(&mut out, "lifecycle.score_high", &l.score_high);
    write_thresholds(&mut out, "lifecycle.score_low", &l.score_low);
    let _ = writeln!(out, "lifecycle.min_hits = {}", l.min_hits);
    let _ = writeln!(out, "lifecycle.max_miss = {}", l.max_miss);
    write_thresholds(&mut out, "lifecycle.output_score", &l.output_score);
    let _ = writeln!(out, "lifecycle.output_predictions = {}", l.output_predictions);
    let _ = writeln!(out, "lifecycle.prediction_score_factor = {}", fmt_float(l.prediction_score_factor));
    let _ = writeln!(out, "lifecycle.count_stage2_hits = {}", l.count_stage2_hits);
    let _ = writeln!(out, "lifecycle.compound_prediction_score = {}", l.compound_prediction_score);
    let policy = match l.output_policy {
        OutputPolicy::Gated => "gated",
        OutputPolicy::All => "all",
    };
    let _ = writeln!(out, "lifecycle.output_policy = \"{policy}\"");
    out
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, toml::Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

fn bad(key: &str, what: &str) -> Error {
    Error::Config(format!("`{key}`: expected {what}"))
}

fn as_f64(key: &str, v: &toml::Value) -> Result<f64> {
    match v {
        toml::Value::Float(f) => Ok(*f),
        toml::Value::Integer(i) => Ok(*i as f64),
        _ => Err(bad(key, "a number")),
    }
}

fn as_u32(key: &str, v: &toml::Value) -> Result<u32> {
    v.as_integer()
        .and_then(|i| u32::try_from(i).ok())
        .ok_or_else(|| bad(key, "a non-negative integer"))
}

fn as_bool(key: &str, v: &toml::Value) -> Result<bool> {
    v.as_bool().ok_or_else(|| bad(key, "a boolean"))
}

fn as_str<'a>(key: &str, v: &'a toml::Value) -> Result<&'a str> {
    v.as_str().ok_or_else(|| bad(key, "a string"))
}

fn as_array<const N: usize>(key: &str, v: &toml::Value) -> Result<[f64; N]> {
    let arr = v.as_array().ok_or_else(|| bad(key, "an array"))?;
    if arr.len() != N {
        return Err(bad(key, &format!("{N} entries")));
    }
    let mut out = [0.0; N];
    for (slot, item) in out.iter_mut().zip(arr) {
        *slot = as_f64(key, item)?;
    }
    Ok(out)
}

fn set_threshold(t: &mut ClassThresholds, key: &str, class: &str, v: &toml::Value) -> Result<()> {
    let value = as_f64(key, v)?;
    if class == "default" {
        *t = ClassThresholds::uniform(value);
    } else {
        t.per_class.insert(class.to_string(), value);
    }
    Ok(())
}

/// Overrides the field addressed by `key`.
pub fn set_key(config: &mut TrackerConfig, key: &str, v: &toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    match parts.as_slice() {
        ["format_version"] => {
            if v.as_integer() != Some(CONFIG_FORMAT_VERSION) {
                return Err(bad(key, &format!("version {CONFIG_FORMAT_VERSION}")));
            }
        }
        ["profile"] => {}
        ["nms_iou"] => config.nms_iou = as_f64(key, v)?,
        ["metric"] => {
            config.metric = MetricKind::parse(as_str(key, v)?)
                .ok_or_else(|| bad(key, "one of iou, giou, l2, mahalanobis"))?
        }
        ["strategy"] => {
            config.strategy = MatchStrategy::parse(as_str(key, v)?)
                .ok_or_else(|| bad(key, "hungarian or greedy"))?
        }
        ["motion"] => {
            config.motion = MotionModelKind::parse(as_str(key, v)?)
                .ok_or_else(|| bad(key, "one of kf, cv, kf-pd"))?
        }
        ["coordinate_frame"] => {
            config.coordinate_frame =
                CoordinateFrame::parse(as_str(key, v)?).ok_or_else(|| bad(key, "world or ego"))?
        }
        ["gate", metric, class] => {
            let kind = MetricKind::parse(metric).ok_or_else(|| bad(key, "a known metric"))?;
            set_threshold(config.gates.for_kind_mut(kind), key, class, v)?
        }
        ["kalman", "initial_variance"] => config.kalman.initial_variance = as_array::<STATE_DIM>(key, v)?,
        ["kalman", "process_noise"] => config.kalman.process_noise = as_array::<STATE_DIM>(key, v)?,
        ["kalman", "observation_noise"] => config.kalman.observation_noise = as_array::<OBS_DIM>(key, v)?,
        ["kalman", "flip_yaw"] => config.kalman.flip_yaw = as_bool(key, v)?,
        ["lifecycle", group @ ("score_high" | "score_low" | "output_score"), class] => {
            let l = &mut config.lifecycle;
            let t = match *group {
                "score_high" => &mut l.score_high,
                "score_low" => &mut l.score_low,
                _ => &mut l.output_score,
            };
            set_threshold(t, key, class, v)?
        }
        ["lifecycle", "min_hits"] => config.lifecycle.min_hits = as_u32(key, v)?,
        ["lifecycle", "max_miss"] => config.lifecycle.max_miss = as_u32(key, v)?,
        ["lifecycle", "output_predictions"] => config.lifecycle.output_predictions = as_bool(key, v)?,
        ["lifecycle", "prediction_score_factor"] => {
            config.lifecycle.prediction_score_factor = as_f64(key, v)?
        }
        ["lifecycle", "count_stage2_hits"] => config.lifecycle.count_stage2_hits = as_bool(key, v)?,
        ["lifecycle", "compound_prediction_score"] => {
            config.lifecycle.compound_prediction_score = as_bool(key, v)?
        }
        ["lifecycle", "output_policy"] => {
            config.lifecycle.output_policy = match as_str(key, v)? {
                "gated" => OutputPolicy::Gated,
                "all" => OutputPolicy::All,
                _ => return Err(bad(key, "gated or all")),
            }
        }
        _ => return Err(Error::Config(format!("unknown configuration key `{key}`"))),
    }
    Ok(())
}

/// Parses a configuration document, overlaying it on its base profile.
pub fn parse_config(text: &str) -> Result<TrackerConfig> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
    let mut flat = BTreeMap::new();
    flatten("", &table, &mut flat);
    let base = match flat.get("profile") {
        Some(v) => {
            let name = as_str("profile", v)?;
            Profile::parse(name).ok_or_else(|| Error::Config(format!("unknown profile `{name}`")))?
        }
        None => Profile::Wod,
    };
    let mut config = base.config();
    let (defaults, rest): (Vec<_>, Vec<_>) = flat.iter().partition(|(k, _)| k.ends_with(".default"));
    for (key, value) in defaults.into_iter().chain(rest) {
        set_key(&mut config, key, value)?;
    }
    config.validate()?;
    Ok(config)
}

/// Resolves a profile name or a configuration file path.
pub fn load_config(source: &str) -> Result<TrackerConfig> {
    if let Some(p) = Profile::parse(source) {
        return Ok(p.config());
    }
    let text = std::fs::read_to_string(Path::new(source))
        .map_err(|e| Error::Config(format!("cannot read `{source}`: {e}")))?;
    parse_config(&text)
}
