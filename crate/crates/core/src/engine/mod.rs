//! Slot-level dynamics.
//!
//! Each [`step`] performs the control exchange at the end of one slot (switch
//! test, status messages, switch command) and then advances every battery
//! through the following slot of harvesting and forwarding.

mod cycles;
mod invariants;
mod trace_csv;

#[cfg(test)]
mod proptests;

use thiserror::Error;

use crate::model::{PacketMode, ParamError, Profile, SimState, SlotInputs, SlotRecord, SystemParams};

pub use cycles::{detect_cycles, mean_cycle_length, net_drift, summarize, RunSummary};
pub use invariants::{check_invariants, Violation, ViolationKind};
pub use trace_csv::{read_trace_csv, trace_csv_header, write_trace_csv, TraceCsvError};

/// Slack used when truncating a fractional packet entitlement, so that an
/// entitlement of `19.999999999999996` still counts as 20 packets.
const WHOLE_PACKET_SLACK: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid parameters: {0}")]
    Params(#[from] ParamError),
    #[error("horizon must be at least one slot")]
    ZeroHorizon,
    #[error("profile covers {len} slots but the horizon is {horizon}")]
    ProfileTooShort { len: usize, horizon: usize },
    #[error("profile has {profile} nodes, parameters have {params}")]
    ProfileNodeCount { profile: usize, params: usize },
    #[error("initial state has {state} batteries, parameters have {params} nodes")]
    StateNodeCount { state: usize, params: usize },
    #[error("initial active node {0} is out of range")]
    ActiveOutOfRange(usize),
    #[error("warmup ({warmup}) must be shorter than the trace ({len} slots)")]
    Warmup { warmup: usize, len: usize },
}

/// Ordered record of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub node_count: usize,
    /// Active node before the first record, when known.
    pub initial_active: Option<usize>,
    pub records: Vec<SlotRecord>,
    /// Inputs that drove each record; empty for traces read back from CSV.
    pub inputs: Vec<SlotInputs>,
    /// State after the last record; `None` for traces read back from CSV.
    pub final_state: Option<SimState>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn switch_count(&self) -> usize {
        self.records.iter().filter(|r| r.switched).count()
    }

    pub fn total_packets(&self) -> f64 {
        self.records.iter().map(|r| r.packets).sum()
    }

    /// Battery levels just before the end of slot `i + 1`, if recorded.
    pub fn next_pre(&self, i: usize) -> Option<&[f64]> {
        match self.records.get(i + 1) {
            Some(r) => Some(&r.pre),
            None if i + 1 == self.records.len() => self.final_state.as_ref().map(|s| s.battery.as_slice()),
            None => None,
        }
    }
}

/// One slot with the fixed rates of `params`.
pub fn step(state: &SimState, params: &SystemParams) -> (SimState, SlotRecord) {
    step_with(state, params, &params.harvest, params.input_rate)
}

/// One slot with explicit harvest and input rates for the forwarding slot.
pub fn step_with(state: &SimState, params: &SystemParams, harvest: &[f64], input_rate: f64) -> (SimState, SlotRecord) {
    let n = state.battery.len();
    let b_min = params.battery_min();
    let b_max = params.battery_max;
    let c = params.packet_energy;
    let pre = state.battery.clone();

    let target = params.thresholds.switch_target(&params.reported_levels(&pre), state.active);

    let mut post = pre.clone();
    let mut suppressed = vec![false; n];
    for u in 0..n {
        if pre[u] >= b_min {
            post[u] -= params.status_energy;
        } else {
            suppressed[u] = true;
        }
    }
    let active = match target {
        Some(x) => {
            for b in &mut post {
                *b = (*b - params.command_energy).max(0.0);
            }
            x
        }
        None => state.active,
    };

    let mut next = post.clone();
    for u in (0..n).filter(|&u| u != active) {
        next[u] = (post[u] + harvest[u]).min(b_max);
    }

    let level = post[active];
    let e_v = harvest[active];
    let demand = c * input_rate;
    let packets = if level < b_min {
        next[active] = (level + e_v).min(b_max);
        0.0
    } else {
        let drain = demand - e_v;
        let alpha = if drain <= 0.0 {
            1.0
        } else {
            ((level - b_min) / drain).clamp(0.0, 1.0)
        };
        let entitlement = alpha * input_rate + (1.0 - alpha) * e_v / c;
        match state.packet_mode {
            PacketMode::Fractional => {
                next[active] = (level + e_v - demand).max(b_min).min(b_max);
                entitlement
            }
            PacketMode::Whole => {
                let sent = (entitlement + WHOLE_PACKET_SLACK).floor();
                next[active] = (level + e_v - c * sent).max(b_min).min(b_max);
                sent
            }
        }
    };

    let mut delivered = state.delivered.clone();
    delivered[active] += packets;

    let record = SlotRecord {
        slot: state.slot,
        pre,
        post,
        active,
        switched: target.is_some(),
        packets,
        suppressed,
    };
    let next_state = SimState {
        slot: state.slot + 1,
        battery: next,
        active,
        delivered,
        packet_mode: state.packet_mode,
    };
    (next_state, record)
}

pub(crate) fn check_run_inputs(
    params: &SystemParams,
    initial: &SimState,
    horizon: usize,
    profile: Option<&Profile>,
) -> Result<(), EngineError> {
    params.validate()?;
    if horizon == 0 {
        return Err(EngineError::ZeroHorizon);
    }
    let n = params.node_count();
    if initial.battery.len() != n || initial.delivered.len() != n {
        return Err(EngineError::StateNodeCount {
            state: initial.battery.len(),
            params: n,
        });
    }
    if initial.active >= n {
        return Err(EngineError::ActiveOutOfRange(initial.active));
    }
    if let Some(p) = profile {
        if p.len() < horizon {
            return Err(EngineError::ProfileTooShort { len: p.len(), horizon });
        }
        if p.node_count() != n {
            return Err(EngineError::ProfileNodeCount {
                profile: p.node_count(),
                params: n,
            });
        }
    }
    Ok(())
}

/// Iterate [`step`] for `horizon` slots. With a profile, row `i` supplies the
/// harvest and input rates of record `i`; otherwise the rates in `params` are
/// used throughout.
pub fn run(params: &SystemParams, initial: &SimState, horizon: usize, profile: Option<&Profile>) -> Result<Trace, EngineError> {
    check_run_inputs(params, initial, horizon, profile)?;
    let mut records = Vec::with_capacity(horizon);
    let mut inputs = Vec::with_capacity(horizon);
    let mut state = initial.clone();
    for i in 0..horizon {
        let slot_inputs = match profile {
            Some(p) => p.inputs(i),
            None => SlotInputs::from_params(params),
        };
        let (next, record) = step_with(&state, params, &slot_inputs.harvest, slot_inputs.input_rate);
        records.push(record);
        inputs.push(slot_inputs);
        state = next;
    }
    Ok(Trace {
        node_count: params.node_count(),
        initial_active: Some(initial.active),
        records,
        inputs,
        final_state: Some(state),
    })
}

/// [`run`] with whole-packet forwarding.
pub fn run_whole_packets(params: &SystemParams, initial: &SimState, horizon: usize) -> Result<Trace, EngineError> {
    let initial = initial.clone().with_packet_mode(PacketMode::Whole);
    run(params, &initial, horizon, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ThresholdPolicy;

    fn diamond(h1: f64, h2: f64) -> SystemParams {
        SystemParams::diamond(0.8, 0.6, 0.08, 17.5, h1, h2, 100.0)
    }

    #[test]
    fn away_from_boundaries_batteries_move_linearly() {
        let p = diamond(4.0, 0.8);
        let s = SimState::with_battery(vec![50.0, 50.0], 0);
        let (next, rec) = step(&s, &p);
        assert!(!rec.switched);
        assert_eq!(rec.active, 0);
        assert!((next.battery[0] - (50.0 + 0.8 - 1.4)).abs() < 1e-12);
        assert!((next.battery[1] - 50.6).abs() < 1e-12);
        assert!((rec.packets - 17.5).abs() < 1e-12);
    }

    #[test]
    fn switch_swaps_roles_and_charges_command() {
        let p = diamond(4.0, 0.8).with_control(0.01, 0.05);
        let s = SimState::with_battery(vec![40.0, 45.0], 0);
        let (next, rec) = step(&s, &p);
        assert!(rec.switched);
        assert_eq!(rec.active, 1);
        assert!((rec.post[0] - (40.0 - 0.06)).abs() < 1e-12);
        assert!((rec.post[1] - (45.0 - 0.06)).abs() < 1e-12);
        // full rate on the new active node
        assert!((next.battery[1] - (45.0 - 0.06 + 0.6 - 1.4)).abs() < 1e-12);
        assert!((rec.packets - 17.5).abs() < 1e-12);
    }

    #[test]
    fn alpha_midpoint() {
        let p = diamond(100.0, 100.0);
        let drain = p.slot_demand() - 0.8;
        let s = SimState::with_battery(vec![0.5 * drain, 10.0], 0);
        let (next, rec) = step(&s, &p);
        let expected = 0.5 * 17.5 + 0.5 * 0.8 / 0.08;
        assert!((rec.packets - expected).abs() < 1e-12);
        assert_eq!(next.battery[0], 0.0);
    }

    #[test]
    fn node_below_min_skips_status_and_idles() {
        let p = diamond(100.0, 100.0).with_control(0.01, 0.05);
        let s = SimState::with_battery(vec![0.03, 10.0], 0);
        let (next, rec) = step(&s, &p);
        assert_eq!(rec.suppressed, vec![true, false]);
        assert_eq!(rec.post[0], 0.03);
        assert_eq!(rec.packets, 0.0);
        assert!((next.battery[0] - 0.83).abs() < 1e-12);
    }

    #[test]
    fn silent_node_is_taken_to_be_at_min() {
        // true difference 1.03 would cross h1 = 1; the destination sees 0.97
        let p = diamond(1.0, 1.0).with_control(0.01, 0.05);
        let (_, rec) = step(&SimState::with_battery(vec![0.0, 1.03], 0), &p);
        assert!(!rec.switched);
        let (_, rec) = step(&SimState::with_battery(vec![0.0, 1.07], 0), &p);
        assert!(rec.switched);
    }

    #[test]
    fn inactive_charge_is_clipped() {
        let p = diamond(100.0, 100.0);
        let s = SimState::with_battery(vec![50.0, 99.9], 0);
        let (next, _) = step(&s, &p);
        assert_eq!(next.battery[1], 100.0);
    }

    #[test]
    fn whole_packets_truncate_entitlement() {
        // entitlement 12.7 = alpha*17.5 + (1-alpha)*7.5 with e_v = 0.6
        let params = SystemParams::diamond(0.6, 0.8, 0.08, 17.5, 100.0, 100.0, 100.0);
        let alpha = 0.52;
        let level = alpha * (params.slot_demand() - 0.6);
        let s = SimState::with_battery(vec![level, 10.0], 0).with_packet_mode(PacketMode::Whole);
        let (next, rec) = step(&s, &params);
        assert_eq!(rec.packets, 12.0);
        assert!((next.battery[0] - (level + 0.6 - 12.0 * 0.08)).abs() < 1e-12);
    }

    #[test]
    fn horizon_zero_is_rejected() {
        let p = diamond(4.0, 0.8);
        let err = run(&p, &SimState::initial(&p), 0, None).unwrap_err();
        assert!(matches!(err, EngineError::ZeroHorizon));
    }

    #[test]
    fn short_profile_is_rejected() {
        let p = diamond(4.0, 0.8);
        let profile = Profile::constant(&p, 10);
        let err = run(&p, &SimState::initial(&p), 11, Some(&profile)).unwrap_err();
        assert!(matches!(err, EngineError::ProfileTooShort { len: 10, horizon: 11 }));
    }

    #[test]
    fn constant_profile_matches_fixed_rates() {
        let p = SystemParams::three([0.1, 0.7, 0.8], 0.08, 20.0, ThresholdPolicy::EarliestSwitch3 { h: [5.0, 10.0, 10.0] }, 60.0);
        let s = SimState::initial(&p);
        let fixed = run(&p, &s, 500, None).unwrap();
        let profiled = run(&p, &s, 500, Some(&Profile::constant(&p, 500))).unwrap();
        assert_eq!(fixed, profiled);
    }

    #[test]
    fn balanced_diamond_switch_pattern() {
        // e = (0.8, 0.6), c g = 1.4, h = 4.8: node 1 active 4 slots, node 2 for 3
        let p = diamond(2.4, 2.4);
        let s = SimState::with_battery(vec![51.2, 48.8], 1);
        let trace = run(&p, &s, 70, None).unwrap();
        let switches: Vec<u64> = trace.records.iter().filter(|r| r.switched).map(|r| r.slot).collect();
        let expected: Vec<u64> = (0..10).flat_map(|k| [7 * k, 7 * k + 4]).collect();
        assert_eq!(switches, expected);
    }
}
