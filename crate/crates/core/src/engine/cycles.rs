use super::{EngineError, Trace};
use crate::model::CycleStats;

/// Split a trace into cycles.
///
/// A cycle runs from one activation of node 1 to the next. For the diamond
/// and for round-robin this is the usual "two switches in the same
/// direction"; for earliest-switch it is the interval between successive
/// activations of node 1, whichever node it came from.
pub fn detect_cycles(trace: &Trace) -> Vec<CycleStats> {
    let n = trace.node_count;
    let starts: Vec<usize> = trace
        .records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.switched && r.active == 0)
        .map(|(i, _)| i)
        .collect();

    starts
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let mut active_slots = vec![0.0; n];
            let mut packets = vec![0.0; n];
            for r in &trace.records[a..b] {
                active_slots[r.active] += 1.0;
                packets[r.active] += r.packets;
            }
            let open = &trace.records[a].post;
            let close = &trace.records[b].post;
            CycleStats {
                start: trace.records[a].slot as f64,
                length: (b - a) as f64,
                active_slots,
                packets,
                drift: close.iter().zip(open).map(|(c, o)| c - o).collect(),
                end_battery: close.clone(),
            }
        })
        .collect()
}

pub fn mean_cycle_length(cycles: &[CycleStats]) -> Option<f64> {
    if cycles.is_empty() {
        None
    } else {
        Some(cycles.iter().map(|c| c.length).sum::<f64>() / cycles.len() as f64)
    }
}

/// Battery change between the first and last cycle boundary, averaged over
/// nodes. Measuring at cycle boundaries removes the seesaw within a cycle.
pub fn net_drift(cycles: &[CycleStats]) -> f64 {
    let Some(first) = cycles.first() else {
        return 0.0;
    };
    let n = first.drift.len() as f64;
    cycles.iter().flat_map(|c| c.drift.iter()).sum::<f64>() / n
}

/// Steady-state statistics over the records at index `warmup` and later.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub slots: usize,
    pub warmup: usize,
    /// Packets per slot.
    pub throughput: f64,
    pub packets: Vec<f64>,
    /// Share of packets carried by each node.
    pub shares: Vec<f64>,
    pub switches: usize,
    pub cycles: usize,
    pub mean_cycle_length: Option<f64>,
}

impl RunSummary {
    /// `gamma_1 / gamma_2`.
    pub fn split_ratio(&self) -> f64 {
        self.packets[0] / self.packets[1]
    }

    pub fn csv_header(node_count: usize) -> String {
        let mut cols = vec!["slots".to_string(), "warmup".into(), "throughput".into()];
        cols.extend((1..=node_count).map(|u| format!("packets{u}")));
        cols.extend((1..=node_count).map(|u| format!("share{u}")));
        cols.extend(["switches".into(), "cycles".into(), "mean_cycle".into()]);
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let mut cols = vec![
            self.slots.to_string(),
            self.warmup.to_string(),
            crate::fmt_sig(self.throughput),
        ];
        cols.extend(self.packets.iter().map(|&x| crate::fmt_sig(x)));
        cols.extend(self.shares.iter().map(|&x| crate::fmt_sig(x)));
        cols.push(self.switches.to_string());
        cols.push(self.cycles.to_string());
        cols.push(self.mean_cycle_length.map(crate::fmt_sig).unwrap_or_default());
        cols.join(",")
    }

    /// `key = value` lines, fixed order.
    pub fn report(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        line("slots", self.slots.to_string());
        line("warmup", self.warmup.to_string());
        line("throughput", crate::fmt_sig(self.throughput));
        for (u, p) in self.packets.iter().enumerate() {
            line(&format!("packets_{}", u + 1), crate::fmt_sig(*p));
        }
        for (u, s) in self.shares.iter().enumerate() {
            line(&format!("share_{}", u + 1), crate::fmt_sig(*s));
        }
        line("switches", self.switches.to_string());
        line("cycles", self.cycles.to_string());
        line(
            "mean_cycle",
            self.mean_cycle_length.map(crate::fmt_sig).unwrap_or_else(|| "n/a".into()),
        );
        out
    }
}

pub fn summarize(trace: &Trace, warmup: usize) -> Result<RunSummary, EngineError> {
    if warmup >= trace.len() {
        return Err(EngineError::Warmup { warmup, len: trace.len() });
    }
    let window = &trace.records[warmup..];
    let mut packets = vec![0.0; trace.node_count];
    for r in window {
        packets[r.active] += r.packets;
    }
    let total: f64 = packets.iter().sum();
    let shares = packets
        .iter()
        .map(|p| if total > 0.0 { p / total } else { 0.0 })
        .collect();
    let cycles: Vec<_> = detect_cycles(trace)
        .into_iter()
        .filter(|c| c.start >= warmup as f64)
        .collect();
    Ok(RunSummary {
        slots: window.len(),
        warmup,
        throughput: total / window.len() as f64,
        packets,
        shares,
        switches: window.iter().filter(|r| r.switched).count(),
        cycles: cycles.len(),
        mean_cycle_length: mean_cycle_length(&cycles),
    })
}
