//! Domain types shared by the slot engine, the analytic formulas and the
//! scenario layer.
//!
//! Units are fixed: energies in mJ, time in slots, traffic in packets.
//! Nodes are indexed from 0 in the API; node `u` here is "node u+1" in
//! reports and CSV files.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance (mJ) applied to threshold and regime-boundary comparisons.
///
/// Battery levels are accumulated slot by slot in binary floating point, so a
/// difference that should land exactly on a threshold such as `4.0` can come
/// out as `3.9999999999999996`. Comparisons accept values within this band.
pub const COMPARISON_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("{name} must be finite, got {value}")]
    NonFinite { name: &'static str, value: f64 },
    #[error("{name} must be non-negative, got {value}")]
    Negative { name: &'static str, value: f64 },
    #[error("packet energy c must be positive, got {0}")]
    NonPositivePacketEnergy(f64),
    #[error("B_max ({max}) must exceed B_min = c_t + c_r ({min})")]
    BatteryRange { max: f64, min: f64 },
    #[error("only 2 or 3 forwarding nodes are supported, got {0}")]
    NodeCount(usize),
    #[error("threshold policy expects {expected} nodes but {got} harvest rates were given")]
    PolicyMismatch { expected: usize, got: usize },
    #[error("threshold h{node} must be positive, got {value}")]
    Threshold { node: usize, value: f64 },
    #[error("analytic-regime assumption violated: {0}")]
    Strict(RegimeWarning),
}

/// Switching rule and its thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThresholdPolicy {
    /// Two relays. `h1` switches route 1 -> 2, `h2` switches 2 -> 1.
    Hysteresis2 { h1: f64, h2: f64 },
    /// Three relays visited in the fixed order 1 -> 2 -> 3 -> 1.
    /// `h[v]` is the threshold for leaving node `v`.
    RoundRobin3 { h: [f64; 3] },
    /// Three relays; the route moves to whichever inactive node first
    /// exceeds the active one by `h[v]`.
    EarliestSwitch3 { h: [f64; 3] },
}

impl ThresholdPolicy {
    pub fn node_count(&self) -> usize {
        match self {
            ThresholdPolicy::Hysteresis2 { .. } => 2,
            _ => 3,
        }
    }

    pub fn thresholds(&self) -> Vec<f64> {
        match self {
            ThresholdPolicy::Hysteresis2 { h1, h2 } => vec![*h1, *h2],
            ThresholdPolicy::RoundRobin3 { h } | ThresholdPolicy::EarliestSwitch3 { h } => h.to_vec(),
        }
    }

    /// Threshold for leaving node `v`.
    pub fn threshold(&self, v: usize) -> f64 {
        match self {
            ThresholdPolicy::Hysteresis2 { h1, h2 } => {
                if v == 0 {
                    *h1
                } else {
                    *h2
                }
            }
            ThresholdPolicy::RoundRobin3 { h } | ThresholdPolicy::EarliestSwitch3 { h } => h[v],
        }
    }

    /// Sum of all thresholds (`h = h1 + h2` for the diamond).
    pub fn total(&self) -> f64 {
        self.thresholds().iter().sum()
    }

    /// Same policy kind with every threshold multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> ThresholdPolicy {
        match self {
            ThresholdPolicy::Hysteresis2 { h1, h2 } => ThresholdPolicy::Hysteresis2 {
                h1: h1 * factor,
                h2: h2 * factor,
            },
            ThresholdPolicy::RoundRobin3 { h } => ThresholdPolicy::RoundRobin3 {
                h: h.map(|x| x * factor),
            },
            ThresholdPolicy::EarliestSwitch3 { h } => ThresholdPolicy::EarliestSwitch3 {
                h: h.map(|x| x * factor),
            },
        }
    }

    /// Route that fires at this slot end, if any, given the battery levels
    /// just before the end of the slot.
    ///
    /// Earliest-switch ties go to the node with the larger excess over the
    /// threshold, then to the lower index.
    pub fn switch_target(&self, pre: &[f64], active: usize) -> Option<usize> {
        let h = self.threshold(active);
        let fires = |x: usize| pre[x] - pre[active] >= h - COMPARISON_TOLERANCE;
        match self {
            ThresholdPolicy::Hysteresis2 { .. } => {
                let x = 1 - active;
                fires(x).then_some(x)
            }
            ThresholdPolicy::RoundRobin3 { .. } => {
                let x = (active + 1) % 3;
                fires(x).then_some(x)
            }
            ThresholdPolicy::EarliestSwitch3 { .. } => {
                let mut best: Option<(f64, usize)> = None;
                for x in (0..3).filter(|&x| x != active && fires(x)) {
                    let excess = pre[x] - pre[active] - h;
                    if best.is_none_or(|(e, _)| excess > e) {
                        best = Some((excess, x));
                    }
                }
                best.map(|(_, x)| x)
            }
        }
    }

    pub fn short_name(&self) -> &'static str {
        match self {
            ThresholdPolicy::Hysteresis2 { .. } => "hyst2",
            ThresholdPolicy::RoundRobin3 { .. } => "rr3",
            ThresholdPolicy::EarliestSwitch3 { .. } => "es3",
        }
    }
}

/// Constant-rate system description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Per-node harvest rate `e_u`, mJ/slot.
    #[serde(rename = "e")]
    pub harvest: Vec<f64>,
    /// Source input rate `g`, packets/slot.
    #[serde(rename = "g")]
    pub input_rate: f64,
    /// Energy to receive and forward one data packet `c`, mJ.
    #[serde(rename = "c")]
    pub packet_energy: f64,
    /// Status-message transmit energy `c_t`, mJ.
    #[serde(rename = "c_t", default)]
    pub status_energy: f64,
    /// Switch-command receive energy `c_r`, mJ.
    #[serde(rename = "c_r", default)]
    pub command_energy: f64,
    #[serde(rename = "B_max")]
    pub battery_max: f64,
    pub thresholds: ThresholdPolicy,
}

impl SystemParams {
    /// Diamond network without control overhead.
    pub fn diamond(e1: f64, e2: f64, packet_energy: f64, input_rate: f64, h1: f64, h2: f64, battery_max: f64) -> Self {
        SystemParams {
            harvest: vec![e1, e2],
            input_rate,
            packet_energy,
            status_energy: 0.0,
            command_energy: 0.0,
            battery_max,
            thresholds: ThresholdPolicy::Hysteresis2 { h1, h2 },
        }
    }

    /// Three parallel relays without control overhead.
    pub fn three(harvest: [f64; 3], packet_energy: f64, input_rate: f64, policy: ThresholdPolicy, battery_max: f64) -> Self {
        SystemParams {
            harvest: harvest.to_vec(),
            input_rate,
            packet_energy,
            status_energy: 0.0,
            command_energy: 0.0,
            battery_max,
            thresholds: policy,
        }
    }

    pub fn with_control(mut self, status_energy: f64, command_energy: f64) -> Self {
        self.status_energy = status_energy;
        self.command_energy = command_energy;
        self
    }

    pub fn with_input_rate(mut self, input_rate: f64) -> Self {
        self.input_rate = input_rate;
        self
    }

    pub fn node_count(&self) -> usize {
        self.harvest.len()
    }

    /// `B_min = c_t + c_r`: lowest level from which a node can still send its
    /// status and receive a switch command.
    pub fn battery_min(&self) -> f64 {
        self.status_energy + self.command_energy
    }

    /// Battery levels as the destination sees them when deciding a switch.
    /// A node below `B_min` withholds its status message and is taken to be
    /// at `B_min`.
    pub fn reported_levels(&self, pre: &[f64]) -> Vec<f64> {
        let b_min = self.battery_min();
        pre.iter().map(|&b| if b >= b_min { b } else { b_min }).collect()
    }

    /// Energy drawn by a full slot of forwarding, `c * g`.
    pub fn slot_demand(&self) -> f64 {
        self.packet_energy * self.input_rate
    }

    pub fn total_harvest(&self) -> f64 {
        self.harvest.iter().sum()
    }

    pub fn has_control_overhead(&self) -> bool {
        self.status_energy != 0.0 || self.command_energy != 0.0
    }

    /// Hard validation plus a list of regime-assumption warnings.
    pub fn validate(&self) -> Result<ValidationReport, ParamError> {
        let finite = |name: &'static str, value: f64| {
            if value.is_finite() {
                Ok(())
            } else {
                Err(ParamError::NonFinite { name, value })
            }
        };
        let non_negative = |name: &'static str, value: f64| {
            finite(name, value)?;
            if value < 0.0 {
                Err(ParamError::Negative { name, value })
            } else {
                Ok(())
            }
        };

        let n = self.harvest.len();
        if !(2..=3).contains(&n) {
            return Err(ParamError::NodeCount(n));
        }
        if self.thresholds.node_count() != n {
            return Err(ParamError::PolicyMismatch {
                expected: self.thresholds.node_count(),
                got: n,
            });
        }
        for &e in &self.harvest {
            non_negative("e", e)?;
        }
        non_negative("g", self.input_rate)?;
        finite("c", self.packet_energy)?;
        if self.packet_energy <= 0.0 {
            return Err(ParamError::NonPositivePacketEnergy(self.packet_energy));
        }
        non_negative("c_t", self.status_energy)?;
        non_negative("c_r", self.command_energy)?;
        finite("B_max", self.battery_max)?;
        if self.battery_max <= self.battery_min() {
            return Err(ParamError::BatteryRange {
                max: self.battery_max,
                min: self.battery_min(),
            });
        }
        for (node, value) in self.thresholds.thresholds().into_iter().enumerate() {
            if !value.is_finite() || value <= 0.0 {
                return Err(ParamError::Threshold { node: node + 1, value });
            }
        }

        let mut warnings = Vec::new();
        let demand = self.slot_demand();
        for (node, &e) in self.harvest.iter().enumerate() {
            if demand <= e {
                warnings.push(RegimeWarning::ActiveBatteryRises { node: node + 1, harvest: e, demand });
            }
            if e <= self.battery_min() {
                warnings.push(RegimeWarning::HarvestBelowControl {
                    node: node + 1,
                    harvest: e,
                    battery_min: self.battery_min(),
                });
            }
        }
        Ok(ValidationReport { warnings })
    }

    /// Like [`validate`](Self::validate) but rejects parameters outside the
    /// regime the closed-form analysis assumes (`c g > max e_u` and
    /// `min e_u > c_t + c_r`).
    pub fn validate_strict(&self) -> Result<ValidationReport, ParamError> {
        let report = self.validate()?;
        match report.warnings.first() {
            Some(w) => Err(ParamError::Strict(w.clone())),
            None => Ok(report),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RegimeWarning {
    /// `c g <= e_u`: the node's battery rises even while it forwards.
    ActiveBatteryRises { node: usize, harvest: f64, demand: f64 },
    /// `e_u <= c_t + c_r`: harvest cannot cover the per-slot control exchange.
    HarvestBelowControl { node: usize, harvest: f64, battery_min: f64 },
}

impl fmt::Display for RegimeWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegimeWarning::ActiveBatteryRises { node, harvest, demand } => write!(
                f,
                "active-node battery rises: node {node} harvests {harvest} mJ/slot >= c*g = {demand}"
            ),
            RegimeWarning::HarvestBelowControl { node, harvest, battery_min } => write!(
                f,
                "node {node} harvests {harvest} mJ/slot <= c_t + c_r = {battery_min}"
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub warnings: Vec<RegimeWarning>,
}

impl ValidationReport {
    /// True when every assumption of the closed-form analysis holds.
    pub fn strict_assumptions_hold(&self) -> bool {
        self.warnings.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PacketMode {
    /// Fractional packets, as in the analytic model.
    #[default]
    Fractional,
    /// The active node forwards only whole packets; the fractional remainder
    /// of each slot's entitlement is dropped, not carried over.
    Whole,
}

/// Simulator state just before the end of slot `slot`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub slot: u64,
    /// `B-_u(slot)`: battery levels before the control exchange.
    pub battery: Vec<f64>,
    /// Node forwarding during slot `slot`.
    pub active: usize,
    /// Cumulative packets forwarded per node.
    pub delivered: Vec<f64>,
    pub packet_mode: PacketMode,
}

impl SimState {
    /// All batteries at `B_max / 2`, node 1 active.
    pub fn initial(params: &SystemParams) -> Self {
        Self::with_battery(vec![params.battery_max / 2.0; params.node_count()], 0)
    }

    pub fn with_battery(battery: Vec<f64>, active: usize) -> Self {
        let n = battery.len();
        SimState {
            slot: 0,
            battery,
            active,
            delivered: vec![0.0; n],
            packet_mode: PacketMode::Fractional,
        }
    }

    pub fn with_packet_mode(mut self, mode: PacketMode) -> Self {
        self.packet_mode = mode;
        self
    }
}

/// Harvest and input that drive one slot of forwarding.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotInputs {
    pub harvest: Vec<f64>,
    pub input_rate: f64,
}

impl SlotInputs {
    pub fn from_params(params: &SystemParams) -> Self {
        SlotInputs {
            harvest: params.harvest.clone(),
            input_rate: params.input_rate,
        }
    }
}

/// One end-of-slot control exchange and the forwarding slot that follows it.
///
/// `pre`/`post` are the battery levels just before and at the end of slot
/// `slot`. `active` is the node forwarding during slot `slot + 1` (after any
/// switch), and `packets` is what it forwards there.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord {
    pub slot: u64,
    pub pre: Vec<f64>,
    pub post: Vec<f64>,
    pub active: usize,
    pub switched: bool,
    pub packets: f64,
    /// Nodes that skipped their status message because they were below `B_min`.
    pub suppressed: Vec<bool>,
}

impl SlotRecord {
    pub fn suppressed_mask(&self) -> u32 {
        self.suppressed
            .iter()
            .enumerate()
            .filter(|(_, &s)| s)
            .fold(0, |m, (u, _)| m | (1 << u))
    }
}

/// Per-cycle statistics, either measured from a trace or produced by the
/// cycle steppers.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleStats {
    /// Time of the switch that opens the cycle.
    pub start: f64,
    /// Cycle length `I`, slots.
    pub length: f64,
    /// `I_u`: slots during which node `u` was active.
    pub active_slots: Vec<f64>,
    /// `gamma^c_u`: packets forwarded by node `u`.
    pub packets: Vec<f64>,
    /// Battery change of each node over the cycle, mJ.
    pub drift: Vec<f64>,
    /// Battery levels at the switch that closes the cycle.
    pub end_battery: Vec<f64>,
}

impl CycleStats {
    pub fn total_packets(&self) -> f64 {
        self.packets.iter().sum()
    }

    /// Average throughput `gamma = gamma^c / I`, packets/slot.
    pub fn throughput(&self) -> f64 {
        self.total_packets() / self.length
    }

    /// Concatenate a following interval onto this one.
    pub fn extend(&mut self, next: &CycleStats) {
        self.length += next.length;
        for u in 0..self.active_slots.len() {
            self.active_slots[u] += next.active_slots[u];
            self.packets[u] += next.packets[u];
            self.drift[u] += next.drift[u];
        }
        self.end_battery.clone_from(&next.end_battery);
    }
}

/// Slot-indexed harvest and input series for time-varying runs.
///
/// Row `i` drives the forwarding slot recorded at trace index `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    harvest: Vec<Vec<f64>>,
    input_rate: Vec<f64>,
}

impl Profile {
    /// Build from per-slot rows. Every row must have the same node count and
    /// all values must be finite and non-negative.
    pub fn new(harvest: Vec<Vec<f64>>, input_rate: Vec<f64>) -> Result<Self, ParamError> {
        assert_eq!(harvest.len(), input_rate.len(), "profile columns differ in length");
        for row in &harvest {
            for &e in row {
                if !e.is_finite() {
                    return Err(ParamError::NonFinite { name: "e", value: e });
                }
                if e < 0.0 {
                    return Err(ParamError::Negative { name: "e", value: e });
                }
            }
        }
        for &g in &input_rate {
            if !g.is_finite() {
                return Err(ParamError::NonFinite { name: "g", value: g });
            }
            if g < 0.0 {
                return Err(ParamError::Negative { name: "g", value: g });
            }
        }
        Ok(Profile { harvest, input_rate })
    }

    /// The fixed rates of `params` repeated for `len` slots.
    pub fn constant(params: &SystemParams, len: usize) -> Self {
        Profile {
            harvest: vec![params.harvest.clone(); len],
            input_rate: vec![params.input_rate; len],
        }
    }

    pub fn len(&self) -> usize {
        self.input_rate.len()
    }

    pub fn is_empty(&self) -> bool {
        self.input_rate.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.harvest.first().map_or(0, Vec::len)
    }

    pub fn harvest(&self, slot: usize) -> &[f64] {
        &self.harvest[slot]
    }

    pub fn input_rate(&self, slot: usize) -> f64 {
        self.input_rate[slot]
    }

    pub fn inputs(&self, slot: usize) -> SlotInputs {
        SlotInputs {
            harvest: self.harvest[slot].clone(),
            input_rate: self.input_rate[slot],
        }
    }

    /// Copy with the input column replaced.
    pub fn with_input_rate(&self, input_rate: Vec<f64>) -> Result<Self, ParamError> {
        Profile::new(self.harvest.clone(), input_rate)
    }

    /// Largest per-slot harvest sum over the profile.
    pub fn max_total_harvest(&self) -> f64 {
        self.harvest
            .iter()
            .map(|row| row.iter().sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Total energy harvested by each node over the whole profile.
    pub fn harvest_totals(&self) -> Vec<f64> {
        let mut totals = vec![0.0; self.node_count()];
        for row in &self.harvest {
            for (t, e) in totals.iter_mut().zip(row) {
                *t += e;
            }
        }
        totals
    }
}
