//! Experiment configuration: a flat JSON file whose keys follow the
//! `SystemParams` field names (short aliases such as `e`, `g`, `B_max` are
//! accepted), plus run settings. Command-line flags override the file.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::ValueEnum;
use hdr_core::analytic::steady_input_rate;
use hdr_core::model::{PacketMode, Profile, SimState, SystemParams, ThresholdPolicy};
use hdr_core::scenarios::{bundled_profile, load_profile_path};
use serde::Deserialize;

pub const DEFAULT_HORIZON: usize = 2000;
pub const DEFAULT_WINDOW: usize = 1000;
pub const DEFAULT_ESTIMATOR_WINDOW: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyName {
    #[value(alias = "hyst")]
    Hyst2,
    #[value(alias = "rr")]
    Rr3,
    #[value(alias = "es")]
    Es3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Fractional,
    Whole,
}

impl From<ModeArg> for PacketMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Fractional => PacketMode::Fractional,
            ModeArg::Whole => PacketMode::Whole,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateKeyword {
    /// The rate at which the analytic drift vanishes.
    Steady,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Rate {
    Value(f64),
    Named(RateKeyword),
}

/// The config file as written.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(alias = "e")]
    pub harvest: Vec<f64>,
    #[serde(alias = "g")]
    pub input_rate: Rate,
    #[serde(alias = "c")]
    pub packet_energy: f64,
    #[serde(alias = "c_t", default)]
    pub status_energy: f64,
    #[serde(alias = "c_r", default)]
    pub command_energy: f64,
    #[serde(alias = "B_max")]
    pub battery_max: f64,
    pub h: Vec<f64>,
    pub policy: Option<String>,
    pub horizon: Option<usize>,
    pub warmup: Option<usize>,
    pub packet_mode: Option<PacketMode>,
    /// Initial battery levels; all at `B_max / 2` when absent.
    pub initial: Option<Vec<f64>>,
    /// Initially active node, numbered from 1.
    pub initial_active: Option<usize>,
    /// Profile CSV path (relative to the config file) or a bundled name.
    pub profile: Option<String>,
    pub out: Option<PathBuf>,
    /// Window length for scenario statistics, slots.
    pub window: Option<usize>,
    /// Completed cycles averaged by the feedback estimator.
    pub estimator_window: Option<usize>,
}

/// Command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub policy: Option<PolicyName>,
    pub horizon: Option<usize>,
    pub warmup: Option<usize>,
    pub packet_mode: Option<ModeArg>,
    pub out: Option<PathBuf>,
}

/// A fully resolved experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub params: SystemParams,
    pub policy: PolicyName,
    pub horizon: usize,
    pub warmup: usize,
    pub initial: SimState,
    pub profile: Option<Profile>,
    pub out: Option<PathBuf>,
    pub window: usize,
    pub estimator_window: usize,
}

pub fn read_config(path: &Path) -> Result<RawConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("cannot parse config {}", path.display()))
}

fn parse_policy(name: &str) -> Result<PolicyName> {
    PolicyName::from_str(name, true).map_err(|_| anyhow::anyhow!("unknown policy {name:?} (expected hyst2, rr3 or es3)"))
}

fn thresholds(policy: PolicyName, h: &[f64]) -> Result<ThresholdPolicy> {
    let want = if policy == PolicyName::Hyst2 { 2 } else { 3 };
    ensure!(h.len() == want, "policy {policy:?} needs {want} thresholds, got {}", h.len());
    Ok(match policy {
        PolicyName::Hyst2 => ThresholdPolicy::Hysteresis2 { h1: h[0], h2: h[1] },
        PolicyName::Rr3 => ThresholdPolicy::RoundRobin3 { h: [h[0], h[1], h[2]] },
        PolicyName::Es3 => ThresholdPolicy::EarliestSwitch3 { h: [h[0], h[1], h[2]] },
    })
}

impl RawConfig {
    /// System parameters only; resolves `"steady"` input rates.
    pub fn params(&self, policy: Option<PolicyName>) -> Result<(SystemParams, PolicyName)> {
        let policy = match (policy, &self.policy) {
            (Some(p), _) => p,
            (None, Some(name)) => parse_policy(name)?,
            (None, None) if self.harvest.len() == 2 => PolicyName::Hyst2,
            (None, None) => PolicyName::Rr3,
        };
        let mut params = SystemParams {
            harvest: self.harvest.clone(),
            input_rate: 0.0,
            packet_energy: self.packet_energy,
            status_energy: self.status_energy,
            command_energy: self.command_energy,
            battery_max: self.battery_max,
            thresholds: thresholds(policy, &self.h)?,
        };
        params.validate()?;
        params.input_rate = match self.input_rate {
            Rate::Value(g) => g,
            Rate::Named(RateKeyword::Steady) => steady_input_rate(&params).context("cannot resolve g = \"steady\"")?,
        };
        params.validate()?;
        Ok((params, policy))
    }

    pub fn resolve(&self, base_dir: &Path, o: &Overrides) -> Result<Experiment> {
        let (params, policy) = self.params(o.policy)?;
        let n = params.node_count();

        let profile = match &self.profile {
            None => None,
            Some(name) => {
                let p = match bundled_profile(name) {
                    Some(p) => p,
                    None => load_profile_path(&base_dir.join(name))?,
                };
                ensure!(p.node_count() == n, "profile has {} nodes, parameters have {n}", p.node_count());
                Some(p)
            }
        };

        let horizon = o
            .horizon
            .or(self.horizon)
            .unwrap_or_else(|| profile.as_ref().map_or(DEFAULT_HORIZON, Profile::len));
        ensure!(horizon > 0, "horizon must be at least one slot");
        if let Some(p) = &profile {
            ensure!(p.len() >= horizon, "profile covers {} slots but the horizon is {horizon}", p.len());
        }
        let warmup = o.warmup.or(self.warmup).unwrap_or(horizon * 3 / 20);
        ensure!(warmup < horizon, "warmup ({warmup}) must be shorter than the horizon ({horizon})");

        let active = self.initial_active.unwrap_or(1);
        ensure!((1..=n).contains(&active), "initial_active must be between 1 and {n}, got {active}");
        let battery = match &self.initial {
            Some(b) => {
                ensure!(b.len() == n, "initial has {} levels, parameters have {n} nodes", b.len());
                if let Some(x) = b.iter().find(|&&x| !(0.0..=params.battery_max).contains(&x)) {
                    bail!("initial level {x} is outside [0, B_max]");
                }
                b.clone()
            }
            None => SimState::initial(&params).battery,
        };
        let mode = o.packet_mode.map(PacketMode::from).or(self.packet_mode).unwrap_or_default();
        let initial = SimState::with_battery(battery, active - 1).with_packet_mode(mode);

        let window = self.window.unwrap_or(DEFAULT_WINDOW);
        ensure!(window > 0, "window must be at least one slot");
        let estimator_window = self.estimator_window.unwrap_or(DEFAULT_ESTIMATOR_WINDOW);
        ensure!(estimator_window > 0, "estimator_window must be at least one cycle");

        Ok(Experiment {
            params,
            policy,
            horizon,
            warmup,
            initial,
            profile,
            out: o.out.clone().or_else(|| self.out.clone()),
            window,
            estimator_window,
        })
    }
}

/// One sweep axis: a parameter name and the values it takes.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub name: String,
    pub values: Vec<f64>,
}

const AXIS_NAMES: [&str; 12] = ["h", "h1", "h2", "h3", "e1", "e2", "e3", "g", "c", "c_t", "c_r", "B_max"];

/// Parse `name=start:stop:step` (inclusive) or `name=value`.
pub fn parse_axis(text: &str) -> Result<Axis> {
    let (name, range) = text.split_once('=').context("axis must look like name=start:stop:step")?;
    let name = name.trim();
    ensure!(AXIS_NAMES.contains(&name), "unknown axis {name:?}; expected one of {}", AXIS_NAMES.join(", "));
    let parts: Vec<f64> = range
        .split(':')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("bad axis range {range:?}"))?;
    let values = match parts[..] {
        [x] => vec![x],
        [a, b, s] => {
            ensure!(s > 0.0 && s.is_finite(), "axis step must be positive");
            let count = ((b - a) / s + 1e-9).floor();
            if count < 0.0 || !count.is_finite() {
                Vec::new()
            } else {
                (0..=count as usize).map(|k| a + k as f64 * s).collect()
            }
        }
        _ => bail!("axis range must be start:stop:step or a single value"),
    };
    ensure!(!values.is_empty(), "axis {text:?} is empty");
    ensure!(values.iter().all(|v| v.is_finite()), "axis values must be finite");
    Ok(Axis { name: name.to_string(), values })
}

impl RawConfig {
    /// Copy with one axis parameter set to `value`. `h` rescales all
    /// thresholds so that they sum to `value`, keeping their proportions.
    pub fn with_axis(&self, name: &str, value: f64) -> Result<RawConfig> {
        let mut raw = self.clone();
        let node = |k: &str| k[1..].parse::<usize>().ok().filter(|&u| u >= 1 && u <= self.harvest.len());
        match name {
            "h" => {
                let total: f64 = raw.h.iter().sum();
                ensure!(total > 0.0, "cannot rescale thresholds that sum to zero");
                raw.h.iter_mut().for_each(|x| *x *= value / total);
            }
            "h1" | "h2" | "h3" => {
                let u = node(name).filter(|&u| u <= raw.h.len()).with_context(|| format!("no threshold {name}"))?;
                raw.h[u - 1] = value;
            }
            "e1" | "e2" | "e3" => {
                let u = node(name).with_context(|| format!("no harvest rate {name}"))?;
                raw.harvest[u - 1] = value;
            }
            "g" => raw.input_rate = Rate::Value(value),
            "c" => raw.packet_energy = value,
            "c_t" => raw.status_energy = value,
            "c_r" => raw.command_energy = value,
            "B_max" => raw.battery_max = value,
            _ => bail!("unknown axis {name:?}"),
        }
        Ok(raw)
    }
}
