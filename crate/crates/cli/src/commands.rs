use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use hdr_core::analytic::{
    away_cycle_diamond, away_cycle_three, classify_regime_diamond, steady_input_rate, AnalyticError, SteadyStateSummary,
};
use hdr_core::engine::{detect_cycles, net_drift, run, summarize, write_trace_csv, RunSummary, Trace};
use hdr_core::fmt_sig;
use hdr_core::model::{CycleStats, COMPARISON_TOLERANCE};
use hdr_core::scenarios::{run_with_feedback, window_csv_header, windowed_stats, RateUpdate};
use rayon::prelude::*;

use crate::config::{Axis, Experiment, Overrides, PolicyName, RawConfig};

/// Why a command failed; decides the exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad config, flags or parameters. Exit 1.
    Config(anyhow::Error),
    /// Simulation or output failure. Exit 2.
    Runtime(anyhow::Error),
}

pub trait Classify<T> {
    fn config(self) -> Result<T, Failure>;
    fn runtime(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn config(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Config(e.into()))
    }
    fn runtime(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

fn write_file(dir: &Path, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let path = dir.join(name);
    let mut w = BufWriter::new(File::create(&path).with_context(|| format!("cannot create {}", path.display()))?);
    body(&mut w)?;
    w.flush()?;
    Ok(())
}

fn write_trace(dir: &Path, trace: &Trace) -> Result<()> {
    write_file(dir, "trace.csv", |w| Ok(write_trace_csv(trace, w)?))
}

fn simulate(exp: &Experiment) -> Result<Trace, Failure> {
    run(&exp.params, &exp.initial, exp.horizon, exp.profile.as_ref()).runtime()
}

pub fn cmd_run(exp: &Experiment) -> Result<(), Failure> {
    let trace = simulate(exp)?;
    let summary = summarize(&trace, exp.warmup).runtime()?;
    let report = summary.report();
    print!("{report}");
    if let Some(dir) = &exp.out {
        write_trace(dir, &trace).runtime()?;
        write_file(dir, "summary.csv", |w| {
            writeln!(w, "{}", RunSummary::csv_header(trace.node_count))?;
            writeln!(w, "{}", summary.csv_row())?;
            Ok(())
        })
        .runtime()?;
        write_file(dir, "summary.txt", |w| Ok(w.write_all(report.as_bytes())?)).runtime()?;
    }
    Ok(())
}

/// The closed-form steady state that applies to the experiment.
///
/// The diamond uses the regime table when control energy is zero and the
/// away-from-boundary cycle otherwise; three nodes need round-robin.
pub fn analytic_summary(exp: &Experiment) -> Result<SteadyStateSummary, AnalyticError> {
    match (exp.params.node_count(), exp.policy) {
        (3, PolicyName::Es3) => Err(AnalyticError::NeedsRoundRobin("the three-node steady state")),
        (3, _) => away_cycle_three(&exp.params),
        _ if exp.params.has_control_overhead() => away_cycle_diamond(&exp.params),
        _ => classify_regime_diamond(&exp.params),
    }
}

pub fn cmd_analytic(exp: &Experiment) -> Result<(), Failure> {
    let summary = analytic_summary(exp).config()?;
    let gs = steady_input_rate(&exp.params).config()?;
    print!("{}", summary.report());
    println!("g_s = {}", fmt_sig(gs));
    Ok(())
}

/// Cycle averages over the cycles that start at or after the warmup.
struct Measured {
    cycles: usize,
    active_slots: Vec<f64>,
    packets: Vec<f64>,
    length: f64,
    throughput: f64,
    drift: f64,
}

fn measure(trace: &Trace, warmup: usize) -> Option<Measured> {
    let cycles: Vec<CycleStats> = detect_cycles(trace).into_iter().filter(|c| c.start >= warmup as f64).collect();
    if cycles.is_empty() {
        return None;
    }
    let k = cycles.len() as f64;
    let n = trace.node_count;
    let mean = |f: &dyn Fn(&CycleStats) -> f64| cycles.iter().map(f).sum::<f64>() / k;
    let total_len: f64 = cycles.iter().map(|c| c.length).sum();
    let total_packets: f64 = cycles.iter().map(|c| c.total_packets()).sum();
    Some(Measured {
        cycles: cycles.len(),
        active_slots: (0..n).map(|u| mean(&|c| c.active_slots[u])).collect(),
        packets: (0..n).map(|u| mean(&|c| c.packets[u])).collect(),
        length: total_len / k,
        throughput: total_packets / total_len,
        drift: net_drift(&cycles) / k,
    })
}

fn deviation(analytic: f64, simulated: f64) -> f64 {
    if (simulated - analytic).abs() <= COMPARISON_TOLERANCE * analytic.abs().max(1.0) {
        0.0
    } else if analytic.abs() <= COMPARISON_TOLERANCE {
        f64::INFINITY.copysign(simulated)
    } else {
        (simulated - analytic) / analytic.abs()
    }
}

pub const COMPARE_HEADER: &str = "quantity,analytic,simulated,rel_dev,flag";

pub fn cmd_compare(exp: &Experiment) -> Result<(), Failure> {
    let ana = analytic_summary(exp).config()?;
    let trace = simulate(exp)?;
    let sim = measure(&trace, exp.warmup)
        .context("no complete cycle after the warmup; extend the horizon")
        .runtime()?;
    let n = exp.params.node_count();

    // analytic phase lengths that are not whole slots cannot be matched by
    // the slotted simulation
    let fractional = ana.active_slots.iter().any(|i| (i - i.round()).abs() > COMPARISON_TOLERANCE);
    let mut rows: Vec<(String, f64, f64)> = Vec::new();
    for u in 0..n {
        rows.push((format!("I_{}", u + 1), ana.active_slots[u], sim.active_slots[u]));
    }
    for u in 0..n {
        rows.push((format!("gamma_c_{}", u + 1), ana.cycle_packets[u], sim.packets[u]));
    }
    rows.push(("cycle_length".into(), ana.cycle_length, sim.length));
    rows.push(("throughput".into(), ana.throughput, sim.throughput));
    rows.push(("split".into(), ana.split_ratio(), sim.packets[0] / sim.packets[1]));
    rows.push(("drift".into(), ana.drift, sim.drift));

    let mut table = String::new();
    table.push_str(COMPARE_HEADER);
    table.push('\n');
    for (name, a, s) in rows {
        let dev = deviation(a, s);
        let flag = match (dev == 0.0, fractional) {
            (true, _) => "",
            (false, true) => "integer-slot",
            (false, false) => "deviation",
        };
        table += &format!("{name},{},{},{},{flag}\n", fmt_sig(a), fmt_sig(s), fmt_sig(dev));
    }
    print!("{table}");
    eprintln!("regime = {}", ana.regime);
    eprintln!("simulated_cycles = {}", sim.cycles);
    if let Some(dir) = &exp.out {
        write_file(dir, "compare.csv", |w| Ok(w.write_all(table.as_bytes())?)).runtime()?;
    }
    Ok(())
}

fn sweep_header(axis: &str, node_count: usize) -> String {
    format!("{axis},g_s,{},note", SteadyStateSummary::csv_header(node_count))
}

fn sweep_row(raw: &RawConfig, axis: &str, value: f64, overrides: &Overrides) -> String {
    let fields = SteadyStateSummary::csv_header(raw.harvest.len()).split(',').count();
    let blank = |gs: String, note: String| {
        format!("{},{gs},{}{}", fmt_sig(value), ",".repeat(fields), note.replace([',', '\n'], ";"))
    };
    let exp = match raw.with_axis(axis, value).and_then(|r| r.resolve(Path::new("."), overrides)) {
        Ok(exp) => exp,
        Err(e) => return blank(String::new(), format!("{e:#}")),
    };
    let gs = steady_input_rate(&exp.params).map(fmt_sig).unwrap_or_default();
    match analytic_summary(&exp) {
        Ok(s) => format!("{},{gs},{},", fmt_sig(value), s.csv_row()),
        Err(e) => blank(gs, e.to_string()),
    }
}

pub fn cmd_sweep(raw: &RawConfig, axis: &Axis, overrides: &Overrides) -> Result<(), Failure> {
    // validate the base point; the sweep itself never simulates
    let mut raw = raw.clone();
    raw.profile = None;
    let base = raw.resolve(Path::new("."), overrides).config()?;
    let rows: Vec<String> = axis
        .values
        .par_iter()
        .map(|&v| sweep_row(&raw, &axis.name, v, overrides))
        .collect();
    let mut table = sweep_header(&axis.name, raw.harvest.len());
    table.push('\n');
    for r in rows {
        table.push_str(&r);
        table.push('\n');
    }
    print!("{table}");
    if let Some(dir) = &base.out {
        write_file(dir, "sweep.csv", |w| Ok(w.write_all(table.as_bytes())?)).runtime()?;
    }
    Ok(())
}

pub fn cmd_scenario(exp: &Experiment, feedback: bool) -> Result<(), Failure> {
    if exp.profile.is_none() && !feedback {
        return Err(Failure::Config(anyhow::anyhow!("scenario needs a profile (set \"profile\" in the config)")));
    }
    let (trace, updates): (Trace, Vec<RateUpdate>) = if feedback {
        let fb = run_with_feedback(&exp.params, &exp.initial, exp.horizon, exp.estimator_window, exp.profile.as_ref())
            .runtime()?;
        (fb.trace, fb.updates)
    } else {
        (simulate(exp)?, Vec::new())
    };
    let windows = windowed_stats(&trace, exp.window);
    let mut table = window_csv_header(trace.node_count);
    table.push('\n');
    for w in &windows {
        table.push_str(&w.csv_row());
        table.push('\n');
    }
    print!("{table}");

    let offered: f64 = trace.inputs.iter().map(|i| i.input_rate).sum();
    let cycles = detect_cycles(&trace);
    eprintln!("offered = {}", fmt_sig(offered));
    eprintln!("delivered = {}", fmt_sig(trace.total_packets()));
    eprintln!("cycles = {}", cycles.len());
    eprintln!("net_drift = {}", fmt_sig(net_drift(&cycles)));
    if feedback {
        eprintln!("rate_updates = {}", updates.len());
    }

    if let Some(dir) = &exp.out {
        write_file(dir, "windows.csv", |w| Ok(w.write_all(table.as_bytes())?)).runtime()?;
        write_trace(dir, &trace).runtime()?;
        if feedback {
            write_file(dir, "rate_updates.csv", |w| {
                writeln!(w, "slot,cycle_estimate,input_rate,held")?;
                for u in &updates {
                    writeln!(w, "{},{},{},{}", u.slot, fmt_sig(u.cycle_estimate), fmt_sig(u.input_rate), u.held)?;
                }
                Ok(())
            })
            .runtime()?;
        }
    }
    Ok(())
}
