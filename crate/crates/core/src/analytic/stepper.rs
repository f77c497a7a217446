use super::{require_no_control, require_nodes, AnalyticError};
use crate::model::{CycleStats, SystemParams, ThresholdPolicy};

/// Battery levels at a switch instant, with the node that has just become
/// active.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleStepState {
    pub battery: Vec<f64>,
    pub active: usize,
    /// Time of this switch, slots (fractional in general).
    pub time: f64,
}

impl CycleStepState {
    pub fn new(battery: Vec<f64>, active: usize) -> Self {
        CycleStepState { battery, active, time: 0.0 }
    }
}

/// One active phase: from the switch that activates `v` to the switch that
/// hands over to its successor `x`.
///
/// Only one boundary is reached per phase: either `x` fills up, or `v`
/// empties, or neither.
fn phase(state: &CycleStepState, params: &SystemParams) -> Result<(CycleStepState, CycleStats), AnalyticError> {
    let n = params.node_count();
    let v = state.active;
    let x = (v + 1) % n;
    let b = &state.battery;
    let e = &params.harvest;
    let cg = params.slot_demand();
    let b_max = params.battery_max;
    if cg <= e[v] {
        return Err(AnalyticError::ActiveDoesNotDrain { node: v + 1, demand: cg, harvest: e[v] });
    }
    let drain = cg - e[v];

    // difference B_x - B_v still to be made up before the switch
    let gap = params.thresholds.threshold(v) + b[v] - b[x];
    let mut next = b.clone();
    let (length, packets) = if gap <= 0.0 {
        (0.0, 0.0)
    } else {
        let unbounded = gap / (cg + e[x] - e[v]);
        let to_full = if e[x] > 0.0 { (b_max - b[x]) / e[x] } else { f64::INFINITY };
        let to_empty = b[v] / drain;
        if to_full < unbounded {
            let len = (gap - (b_max - b[x])) / drain;
            next[v] = b[v] - len * drain;
            next[x] = b_max;
            (len, len * params.input_rate)
        } else if to_empty < unbounded {
            if e[x] <= 0.0 {
                return Err(AnalyticError::Singular("the next node never charges"));
            }
            let len = (gap - b[v]) / e[x];
            next[v] = 0.0;
            next[x] = b[x] + len * e[x];
            let sent = to_empty * params.input_rate + (len - to_empty) * e[v] / params.packet_energy;
            (len, sent)
        } else {
            next[v] = b[v] - unbounded * drain;
            next[x] = b[x] + unbounded * e[x];
            (unbounded, unbounded * params.input_rate)
        }
    };
    for u in (0..n).filter(|&u| u != v && u != x) {
        next[u] = (b[u] + length * e[u]).min(b_max);
    }

    let mut active_slots = vec![0.0; n];
    let mut sent = vec![0.0; n];
    active_slots[v] = length;
    sent[v] = packets;
    let stats = CycleStats {
        start: state.time,
        length,
        active_slots,
        packets: sent,
        drift: next.iter().zip(b).map(|(a, z)| a - z).collect(),
        end_battery: next.clone(),
    };
    let state = CycleStepState {
        battery: next,
        active: x,
        time: state.time + length,
    };
    Ok((state, stats))
}

fn check_state(state: &CycleStepState, params: &SystemParams) -> Result<(), AnalyticError> {
    let n = params.node_count();
    if state.battery.len() != n || state.active >= n {
        return Err(AnalyticError::Topology { what: "cycle step state", expected: n, got: state.battery.len() });
    }
    if state.battery.iter().any(|&b| !(0.0..=params.battery_max).contains(&b)) {
        return Err(AnalyticError::Singular("battery outside [0, B_max]"));
    }
    Ok(())
}

/// Advance the diamond by one active phase at cycle granularity.
///
/// Call twice for a full cycle; merge the two results with
/// [`CycleStats::extend`].
pub fn cycle_step_diamond(state: &CycleStepState, params: &SystemParams) -> Result<(CycleStepState, CycleStats), AnalyticError> {
    require_nodes(params, "diamond cycle stepper", 2)?;
    require_no_control(params, "the cycle stepper")?;
    check_state(state, params)?;
    phase(state, params)
}

/// Advance a three-node round-robin system by one active phase.
pub fn cycle_step_three(state: &CycleStepState, params: &SystemParams) -> Result<(CycleStepState, CycleStats), AnalyticError> {
    require_nodes(params, "three-node cycle stepper", 3)?;
    require_no_control(params, "the cycle stepper")?;
    if !matches!(params.thresholds, ThresholdPolicy::RoundRobin3 { .. }) {
        return Err(AnalyticError::NeedsRoundRobin("three-node cycle stepper"));
    }
    check_state(state, params)?;
    phase(state, params)
}
