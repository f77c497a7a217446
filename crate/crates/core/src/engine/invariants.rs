//! Per-slot replay checks over a finished trace.

use std::fmt;

use super::Trace;
use crate::model::SystemParams;

const TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    /// A battery left `[0, B_max]`.
    BatteryBounds,
    /// A status message was sent without leaving `c_r` for the command, or
    /// the suppression rule was not applied.
    ControlSafety,
    /// The recorded switch decision disagrees with the policy predicate.
    SwitchCorrectness,
    /// Battery change not explained by harvest, control and forwarding.
    EnergyLedger,
    /// More packets forwarded than the source offered.
    PacketBound,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub slot: u64,
    pub kind: ViolationKind,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "slot {}: {:?}: {}", self.slot, self.kind, self.detail)
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TOL * a.abs().max(b.abs()).max(1.0)
}

/// Replay every record of `trace` against `params` and report anything the
/// dynamics should never produce.
///
/// Inputs recorded in the trace are used when present, otherwise the fixed
/// rates of `params`. The energy ledger is skipped for nodes clipped at
/// `B_max` in that slot.
pub fn check_invariants(trace: &Trace, params: &SystemParams) -> Vec<Violation> {
    let mut out = Vec::new();
    let b_min = params.battery_min();
    let b_max = params.battery_max;
    let c = params.packet_energy;

    for (i, r) in trace.records.iter().enumerate() {
        let mut flag = |kind, detail: String| out.push(Violation { slot: r.slot, kind, detail });
        let (harvest, input_rate) = match trace.inputs.get(i) {
            Some(inp) => (inp.harvest.as_slice(), inp.input_rate),
            None => (params.harvest.as_slice(), params.input_rate),
        };

        for (u, (&pre, &post)) in r.pre.iter().zip(&r.post).enumerate() {
            if !(-TOL..=b_max + TOL).contains(&pre) || !(-TOL..=b_max + TOL).contains(&post) {
                flag(ViolationKind::BatteryBounds, format!("node {} pre {pre} post {post}", u + 1));
            }
            let should_suppress = pre < b_min;
            if r.suppressed[u] != should_suppress {
                flag(
                    ViolationKind::ControlSafety,
                    format!("node {} suppression {} at level {pre}", u + 1, r.suppressed[u]),
                );
            }
            if !r.suppressed[u] && pre - params.status_energy < params.command_energy - TOL {
                flag(
                    ViolationKind::ControlSafety,
                    format!("node {} left with {} after status", u + 1, pre - params.status_energy),
                );
            }
        }

        if !(-TOL..=input_rate + TOL).contains(&r.packets) {
            flag(ViolationKind::PacketBound, format!("{} packets offered {input_rate}", r.packets));
        }

        let previous = if i == 0 {
            trace.initial_active
        } else {
            Some(trace.records[i - 1].active)
        };
        if let Some(prev) = previous {
            let expected = params.thresholds.switch_target(&params.reported_levels(&r.pre), prev);
            let recorded = r.switched.then_some(r.active);
            if expected != recorded || (!r.switched && r.active != prev) {
                flag(
                    ViolationKind::SwitchCorrectness,
                    format!("policy says {expected:?}, trace says {recorded:?} (active {})", r.active),
                );
            }
        }

        let Some(next) = trace.next_pre(i) else {
            continue;
        };
        for u in 0..r.pre.len() {
            let status = if r.suppressed[u] { 0.0 } else { params.status_energy };
            let command = if r.switched { params.command_energy } else { 0.0 };
            let expected_post = r.pre[u] - status - command;
            if expected_post < -TOL {
                // command could not be paid in full
                continue;
            }
            if !close(r.post[u], expected_post) {
                flag(
                    ViolationKind::EnergyLedger,
                    format!("node {} post {} expected {expected_post}", u + 1, r.post[u]),
                );
                continue;
            }
            let spent = if u == r.active { c * r.packets } else { 0.0 };
            let expected_next = r.post[u] + harvest[u] - spent;
            if expected_next > b_max + TOL {
                continue;
            }
            if !close(next[u], expected_next) {
                flag(
                    ViolationKind::EnergyLedger,
                    format!("node {} next {} expected {expected_next}", u + 1, next[u]),
                );
            }
        }
    }
    out
}
