//! Closed-form steady-state models and cycle-granularity steppers.
//!
//! Everything here assumes switches happen with battery differences exactly
//! at the thresholds and boundaries are reached at slot ends. The slot engine
//! makes no such assumption, which is what makes the two useful as
//! cross-checks of each other.

mod diamond;
mod stepper;
mod three;

use std::fmt;

use thiserror::Error;

use crate::model::{SystemParams, COMPARISON_TOLERANCE};

pub use diamond::{away_cycle_diamond, away_cycle_diamond_ceil, classify_regime_diamond, drift_diamond};
pub use stepper::{cycle_step_diamond, cycle_step_three, CycleStepState};
pub use three::{away_cycle_three, drift_three, three_node_levels, ThreeNodeLevels};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticError {
    #[error("{what} needs {expected} forwarding nodes, got {got}")]
    Topology { what: &'static str, expected: usize, got: usize },
    #[error("{0} is only derived for negligible control energy (c_t = c_r = 0)")]
    ControlNotNegligible(&'static str),
    #[error("degenerate parameters: {0}")]
    Singular(&'static str),
    #[error("active node {node} does not drain: c*g = {demand} <= e = {harvest}")]
    ActiveDoesNotDrain { node: usize, demand: f64, harvest: f64 },
    #[error("measured cycle length must be positive, got {0}")]
    CycleLength(f64),
    #[error("harvest cannot sustain control overhead: feedback gives c*g = {0}")]
    NonPositiveRate(f64),
    #[error("{0} needs the round-robin policy")]
    NeedsRoundRobin(&'static str),
    #[error("unstable linear system for the three-node battery levels")]
    LinearSystem,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubCase {
    A,
    B,
    C,
}

/// Steady-state regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Harvest matches demand; batteries seesaw without drifting.
    Balanced,
    /// `sum e < c*g`: steady state near empty batteries.
    DownDrift(SubCase),
    /// `sum e > c*g`: steady state near full batteries.
    UpDrift(SubCase),
    /// Away from the boundaries with non-zero drift; this is a transient that
    /// ends at one of the boundary regimes.
    Transient { drift_up: bool },
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regime::Balanced => f.write_str("Balanced"),
            Regime::DownDrift(s) => write!(f, "DownDrift-{s:?}"),
            Regime::UpDrift(s) => write!(f, "UpDrift-{s:?}"),
            Regime::Transient { drift_up: true } => f.write_str("Transient-up"),
            Regime::Transient { drift_up: false } => f.write_str("Transient-down"),
        }
    }
}

/// Per-cycle predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStateSummary {
    pub regime: Regime,
    /// `I_u`, slots.
    pub active_slots: Vec<f64>,
    /// `gamma^c_u`, packets per cycle.
    pub cycle_packets: Vec<f64>,
    /// `I`, slots.
    pub cycle_length: f64,
    /// `gamma`, packets/slot.
    pub throughput: f64,
    /// `Delta`, per-node battery change per cycle, mJ.
    pub drift: f64,
}

impl SteadyStateSummary {
    fn from_slots(regime: Regime, active_slots: Vec<f64>, cycle_packets: Vec<f64>, drift: f64) -> Result<Self, AnalyticError> {
        let cycle_length: f64 = active_slots.iter().sum();
        let throughput = cycle_packets.iter().sum::<f64>() / cycle_length;
        let finite = active_slots
            .iter()
            .chain(&cycle_packets)
            .chain([&cycle_length, &throughput, &drift])
            .all(|x| x.is_finite());
        if !finite {
            return Err(AnalyticError::Singular("cycle quantities are not finite"));
        }
        Ok(SteadyStateSummary {
            regime,
            active_slots,
            cycle_packets,
            cycle_length,
            throughput,
            drift,
        })
    }

    /// `gamma^c_1 / gamma^c_2`.
    pub fn split_ratio(&self) -> f64 {
        self.cycle_packets[0] / self.cycle_packets[1]
    }

    pub fn shares(&self) -> Vec<f64> {
        let total: f64 = self.cycle_packets.iter().sum();
        self.cycle_packets.iter().map(|p| p / total).collect()
    }

    /// `key = value` lines, fixed order.
    pub fn report(&self) -> String {
        let mut out = format!("regime = {}\n", self.regime);
        for (u, i) in self.active_slots.iter().enumerate() {
            out += &format!("I_{} = {}\n", u + 1, crate::fmt_sig(*i));
        }
        for (u, p) in self.cycle_packets.iter().enumerate() {
            out += &format!("gamma_c_{} = {}\n", u + 1, crate::fmt_sig(*p));
        }
        out += &format!("cycle_length = {}\n", crate::fmt_sig(self.cycle_length));
        out += &format!("throughput = {}\n", crate::fmt_sig(self.throughput));
        out += &format!("split = {}\n", crate::fmt_sig(self.split_ratio()));
        out += &format!("drift = {}\n", crate::fmt_sig(self.drift));
        out
    }

    pub fn csv_header(node_count: usize) -> String {
        let mut cols = vec!["regime".to_string()];
        cols.extend((1..=node_count).map(|u| format!("I{u}")));
        cols.extend((1..=node_count).map(|u| format!("gamma_c{u}")));
        cols.extend(["cycle_length", "throughput", "split", "drift"].map(String::from));
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let mut cols = vec![self.regime.to_string()];
        cols.extend(self.active_slots.iter().map(|&x| crate::fmt_sig(x)));
        cols.extend(self.cycle_packets.iter().map(|&x| crate::fmt_sig(x)));
        for x in [self.cycle_length, self.throughput, self.split_ratio(), self.drift] {
            cols.push(crate::fmt_sig(x));
        }
        cols.join(",")
    }
}

fn require_nodes(params: &SystemParams, what: &'static str, expected: usize) -> Result<(), AnalyticError> {
    let got = params.node_count();
    if got == expected {
        Ok(())
    } else {
        Err(AnalyticError::Topology { what, expected, got })
    }
}

fn require_no_control(params: &SystemParams, what: &'static str) -> Result<(), AnalyticError> {
    if params.has_control_overhead() {
        Err(AnalyticError::ControlNotNegligible(what))
    } else {
        Ok(())
    }
}

fn near(a: f64, b: f64) -> bool {
    (a - b).abs() <= COMPARISON_TOLERANCE * a.abs().max(b.abs()).max(1.0)
}

/// Input rate `g_s` at which the away-from-boundary drift is zero.
///
/// This is the positive root of the quadratic obtained by setting the drift
/// to zero; without control energy it collapses to `sum e / c`.
pub fn steady_input_rate(params: &SystemParams) -> Result<f64, AnalyticError> {
    let h = params.thresholds.total();
    let (c, ct, cr) = (params.packet_energy, params.status_energy, params.command_energy);
    let e = &params.harvest;
    let gs = match params.node_count() {
        2 => {
            let et = e[0] + e[1] - 2.0 * ct;
            let d2 = (e[1] - e[0]).powi(2);
            (h * et + (h * h * et * et + 8.0 * cr * (2.0 * cr + h) * d2).sqrt()) / (2.0 * c * (2.0 * cr + h))
        }
        3 => {
            let et = e.iter().sum::<f64>() - 3.0 * ct;
            let big_e = three::spread(e);
            (h * et + (h * h * et * et + 24.0 * cr * (6.0 * cr + h) * big_e).sqrt()) / (2.0 * c * (6.0 * cr + h))
        }
        n => return Err(AnalyticError::Topology { what: "steady input rate", expected: 2, got: n }),
    };
    if gs.is_finite() && gs > 0.0 {
        Ok(gs)
    } else {
        Err(AnalyticError::Singular("no positive steady input rate"))
    }
}

/// Input rate that zeroes the drift for a measured mean cycle length.
pub fn feedback_input_rate(measured_cycle_length: f64, params: &SystemParams) -> Result<f64, AnalyticError> {
    feedback_input_rate_with(measured_cycle_length, params, &params.harvest)
}

/// As [`feedback_input_rate`], with the harvest rates supplied separately
/// (the current slot of a profile, for instance).
///
/// Solving zero drift for `c*g` gives `sum e - N c_t - N^2 c_r / I`.
pub fn feedback_input_rate_with(measured_cycle_length: f64, params: &SystemParams, harvest: &[f64]) -> Result<f64, AnalyticError> {
    if !(measured_cycle_length > 0.0) {
        return Err(AnalyticError::CycleLength(measured_cycle_length));
    }
    let n = harvest.len() as f64;
    let cg = harvest.iter().sum::<f64>() - n * params.status_energy - n * n * params.command_energy / measured_cycle_length;
    if cg > 0.0 {
        Ok(cg / params.packet_energy)
    } else {
        Err(AnalyticError::NonPositiveRate(cg))
    }
}
