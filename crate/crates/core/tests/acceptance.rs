//! Acceptance suite. Prints one `[PASS]`/`[FAIL]` line per criterion and
//! exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use hdr_core::analytic::{classify_regime_diamond, cycle_step_diamond, cycle_step_three, drift_diamond, steady_input_rate, CycleStepState, Regime, SubCase};
use hdr_core::engine::{check_invariants, detect_cycles, mean_cycle_length, net_drift, run, run_whole_packets, summarize, Trace};
use hdr_core::model::{CycleStats, SimState, SystemParams, ThresholdPolicy};
use hdr_core::scenarios::run_with_feedback;

struct Suite {
    failed: usize,
    /// Every trace produced along the way, for the invariant check.
    traces: Vec<(String, Trace, SystemParams)>,
}

impl Suite {
    fn report(&mut self, n: usize, ok: bool, what: &str, detail: String) {
        if !ok {
            self.failed += 1;
        }
        println!("[{}] criterion {n}: {what}: {detail}", if ok { "PASS" } else { "FAIL" });
    }

    fn keep(&mut self, label: impl Into<String>, trace: &Trace, params: &SystemParams) {
        self.traces.push((label.into(), trace.clone(), params.clone()));
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn switch_pattern(suite: &mut Suite) {
    let rows: [(f64, f64, f64, &[u64], &[f64]); 4] = [
        (4.0, 0.8, 0.8, &[0, 3, 7], &[0.8, -4.0, 0.8]),
        (2.0, 1.0, 1.4, &[0, 3, 7], &[1.4, -3.4, 1.4]),
        (6.2, 5.0, 5.0, &[0, 7, 17, 25, 35], &[5.0, -6.2, 5.8, -7.0, 5.0]),
        (5.0, 5.0, 5.0, &[0, 7, 17, 24, 33, 40, 49], &[5.0, -6.2, 5.8, -5.4, 5.4, -5.8, 5.0]),
    ];
    let t0 = Instant::now();
    let mut mismatches = Vec::new();
    for (h1, h2, d0, slots, diffs) in rows {
        let p = SystemParams::diamond(0.6, 0.8, 0.08, 17.5, h1, h2, 100.0);
        let init = SimState::with_battery(vec![50.0 + d0 / 2.0, 50.0 - d0 / 2.0], 1);
        let trace = run(&p, &init, 60, None).unwrap();
        let got: Vec<(u64, f64)> = trace
            .records
            .iter()
            .filter(|r| r.switched)
            .map(|r| (r.slot, r.pre[0] - r.pre[1]))
            .take(slots.len())
            .collect();
        let same = got.len() == slots.len()
            && got.iter().zip(slots.iter().zip(diffs)).all(|(g, (s, d))| g.0 == *s && (g.1 - d).abs() < 1e-9);
        if !same {
            mismatches.push(format!("h=({h1},{h2}) got {got:?}"));
        }
        suite.keep(format!("patterns h=({h1},{h2})"), &trace, &p);
    }
    let elapsed = t0.elapsed().as_secs_f64();
    let ok = mismatches.is_empty() && elapsed < 1.0;
    let detail = if mismatches.is_empty() {
        format!("4/4 rows reproduced in {elapsed:.3} s")
    } else {
        format!("{} in {elapsed:.3} s", mismatches.join("; "))
    };
    suite.report(1, ok, "switch-pattern table", detail);
}

fn control_case() -> SystemParams {
    SystemParams::diamond(0.8, 0.6, 0.08, 17.0, 6.2, 5.0, 100.0).with_control(0.01, 0.05)
}

fn steady_rate(suite: &mut Suite) {
    let p = control_case();
    let gs = steady_input_rate(&p).unwrap();
    let drift = drift_diamond(&p, gs).unwrap();
    let ok = (gs - 17.10).abs() <= 0.005 && drift.abs() < 1e-9;
    suite.report(2, ok, "steady input rate", format!("g_s = {gs:.6}, drift at g_s = {drift:.3e}"));
}

fn open_vs_feedback(suite: &mut Suite) {
    let base = control_case();
    let gs = steady_input_rate(&base).unwrap();
    let p = base.with_input_rate(gs);
    let init = SimState::initial(&p);

    let open = run(&p, &init, 1000, None).unwrap();
    let cycles = detect_cycles(&open);
    let mean = mean_cycle_length(&cycles).unwrap_or(f64::NAN);
    let open_drift = net_drift(&cycles);

    let fb = run_with_feedback(&p, &init, 1000, 4, None).unwrap();
    let fb_drift = net_drift(&detect_cycles(&fb.trace));

    let ok = (18.2..=19.2).contains(&mean) && (0.2..=1.0).contains(&open_drift.abs()) && fb_drift.abs() < 0.1;
    suite.report(
        3,
        ok,
        "open-loop vs feedback drift",
        format!("open-loop mean cycle {mean:.3} slots, net drift {open_drift:+.4} mJ; feedback net drift {fb_drift:+.4} mJ"),
    );
    suite.keep("open loop at g_s", &open, &p);
    suite.keep("feedback", &fb.trace, &p);
}

/// Slots after `warmup` in which node `u` sits at `level` from start to end.
fn sitting(trace: &Trace, warmup: usize, u: usize, level: f64) -> usize {
    (warmup..trace.len())
        .filter(|&i| {
            let next = trace.next_pre(i).unwrap();
            (trace.records[i].pre[u] - level).abs() < 1e-9 && (next[u] - level).abs() < 1e-9
        })
        .count()
}

fn regimes(suite: &mut Suite) {
    const B_MAX: f64 = 40.0;
    const HORIZON: usize = 5000;
    const WARMUP: usize = 500;
    let start = SimState::with_battery(vec![20.0, 20.0], 0);
    let mut problems = Vec::new();
    let mut notes = Vec::new();

    for (case, h1, h2) in [(SubCase::A, 3.0, 6.0), (SubCase::B, 6.0, 3.0), (SubCase::C, 5.0, 5.0)] {
        let p = SystemParams::diamond(0.8, 0.6, 0.08, 20.0, h1, h2, B_MAX);
        let regime = classify_regime_diamond(&p).unwrap().regime;
        let trace = run(&p, &start, HORIZON, None).unwrap();
        let s = summarize(&trace, WARMUP).unwrap();
        let zero = [sitting(&trace, WARMUP, 0, 0.0), sitting(&trace, WARMUP, 1, 0.0)];
        let pattern_ok = match case {
            SubCase::A => zero[0] == 0 && zero[1] > 0,
            SubCase::B => zero[1] == 0 && zero[0] > 0,
            SubCase::C => zero[0] > 0 && zero[1] > 0,
        };
        let name = format!("DownDrift-{case:?}");
        if regime != Regime::DownDrift(case) {
            problems.push(format!("{name} classified as {regime}"));
        }
        if rel(s.throughput, 17.5) > 0.01 {
            problems.push(format!("{name} throughput {:.4}", s.throughput));
        }
        if rel(s.split_ratio(), 4.0 / 3.0) > 0.02 {
            problems.push(format!("{name} split {:.4}", s.split_ratio()));
        }
        if !pattern_ok {
            problems.push(format!("{name} slots at zero {zero:?}"));
        }
        notes.push(format!("{name} gamma {:.3} split {:.4} zero-slots {zero:?}", s.throughput, s.split_ratio()));
        suite.keep(name, &trace, &p);
    }

    {
        let p = SystemParams::diamond(0.8, 0.6, 0.08, 17.5, 2.4, 2.4, B_MAX);
        let trace = run(&p, &SimState::with_battery(vec![21.2, 18.8], 1), HORIZON, None).unwrap();
        let cycles = detect_cycles(&trace);
        let exact = cycles
            .iter()
            .all(|c| c.active_slots == [4.0, 3.0] && c.drift.iter().all(|d| d.abs() < 1e-9));
        if !exact || cycles.len() < 700 {
            problems.push(format!("Balanced cycles not all (4, 3) with zero drift ({} cycles)", cycles.len()));
        }
        notes.push(format!("Balanced {} cycles of (4, 3)", cycles.len()));
        suite.keep("Balanced", &trace, &p);
    }

    {
        let p = SystemParams::diamond(0.8, 0.6, 0.08, 15.0, 5.0, 5.0, B_MAX);
        let regime = classify_regime_diamond(&p).unwrap().regime;
        let trace = run(&p, &start, HORIZON, None).unwrap();
        let s = summarize(&trace, WARMUP).unwrap();
        let full = [sitting(&trace, WARMUP, 0, B_MAX), sitting(&trace, WARMUP, 1, B_MAX)];
        if regime != Regime::UpDrift(SubCase::C) {
            problems.push(format!("UpDrift classified as {regime}"));
        }
        if rel(s.throughput, 15.0) > 0.01 {
            problems.push(format!("UpDrift-C throughput {:.4}", s.throughput));
        }
        if rel(s.split_ratio(), 1.5) > 0.02 {
            problems.push(format!("UpDrift-C split {:.4} (target 1.5)", s.split_ratio()));
        }
        if full[0] == 0 || full[1] == 0 {
            problems.push(format!("UpDrift-C slots at B_max {full:?}"));
        }
        notes.push(format!("UpDrift-C gamma {:.3} split {:.4} full-slots {full:?}", s.throughput, s.split_ratio()));
        suite.keep("UpDrift-C", &trace, &p);
    }

    let ok = problems.is_empty();
    let detail = if ok { notes.join("; ") } else { problems.join("; ") };
    suite.report(4, ok, "regime properties", detail);
}

fn is_whole(x: f64) -> bool {
    (x - x.round()).abs() < 1e-9 && x.round() >= 1.0
}

/// Run the cycle stepper for `cycles` full cycles from an exact switch into
/// node 1. Returns `None` unless every phase lasts a whole number (at least
/// one) of slots and at most one boundary is met per phase.
fn oracle_cycles(params: &SystemParams, start: &[f64], cycles: usize) -> Option<Vec<CycleStats>> {
    let n = params.node_count();
    let mut state = CycleStepState::new(start.to_vec(), 0);
    let mut out = Vec::with_capacity(cycles);
    for _ in 0..cycles {
        let mut cycle: Option<CycleStats> = None;
        for _ in 0..n {
            let (next, phase) = if n == 2 {
                cycle_step_diamond(&state, params).ok()?
            } else {
                cycle_step_three(&state, params).ok()?
            };
            if !is_whole(phase.length) {
                return None;
            }
            if next.battery.iter().any(|&b| !(-1e-12..=params.battery_max + 1e-12).contains(&b)) {
                return None;
            }
            match cycle.as_mut() {
                Some(c) => c.extend(&phase),
                None => cycle = Some(phase),
            }
            state = next;
        }
        out.push(cycle.unwrap());
    }
    Some(out)
}

fn engine_matches_oracle(params: &SystemParams, start: &[f64], want: &[CycleStats]) -> Result<Trace, String> {
    let n = params.node_count();
    let horizon = want.iter().map(|c| c.length).sum::<f64>() as usize + 1;
    let trace = run(params, &SimState::with_battery(start.to_vec(), n - 1), horizon, None).map_err(|e| e.to_string())?;
    let got = detect_cycles(&trace);
    if got.len() < want.len() {
        return Err(format!("engine found {} cycles, oracle {}", got.len(), want.len()));
    }
    let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-9);
    for (k, (g, w)) in got.iter().zip(want).enumerate() {
        if !close(&g.active_slots, &w.active_slots) || !close(&g.packets, &w.packets) || !close(&g.end_battery, &w.end_battery) {
            return Err(format!("cycle {k}: engine {g:?} vs oracle {w:?}"));
        }
    }
    Ok(trace)
}

fn oracle_equivalence(suite: &mut Suite) {
    const CYCLES: usize = 20;
    const WANT_SETS: usize = 24;
    let q = 0.125;
    let c = 0.125;
    let mut results = Vec::new();

    // diamond: energies, demand and thresholds on a q grid
    let mut grid = Vec::new();
    for a1 in 1..=6 {
        for a2 in 1..=6 {
            for k in [a1.max(a2) + 1, a1 + a2 - 1, a1 + a2, a1 + a2 + 1, a1 + a2 + 3] {
                for m1 in [4, 6, 9, 12] {
                    for m2 in [3, 5, 8, 12] {
                        grid.push((a1, a2, k, m1, m2));
                    }
                }
            }
        }
    }
    let mut diamond_sets = 0;
    let mut problems = Vec::new();
    for idx in (0..grid.len()).map(|i| (i * 7919) % grid.len()) {
        if diamond_sets == WANT_SETS {
            break;
        }
        let (a1, a2, k, m1, m2) = grid[idx];
        if k <= a1.max(a2) {
            continue;
        }
        let (h1, h2) = (m1 as f64 * q, m2 as f64 * q);
        let b_max = 4.0 * (h1 + h2) + q * (idx % 5) as f64;
        let g = k as f64 * q / c;
        let p = SystemParams::diamond(a1 as f64 * q, a2 as f64 * q, c, g, h1, h2, b_max);
        let b1 = q * ((idx * 13) % (4 * m1)) as f64;
        let start = [b1 + h2, b1];
        if start[0] > b_max {
            continue;
        }
        let Some(want) = oracle_cycles(&p, &start, CYCLES) else { continue };
        diamond_sets += 1;
        match engine_matches_oracle(&p, &start, &want) {
            Ok(trace) => suite.keep(format!("oracle diamond #{diamond_sets}"), &trace, &p),
            Err(e) => problems.push(format!("diamond {:?}: {e}", (a1, a2, k, m1, m2))),
        }
    }
    results.push(format!("{diamond_sets} diamond sets"));

    let mut grid = Vec::new();
    for a in [[1, 5, 6], [2, 3, 4], [1, 1, 2], [3, 3, 3], [1, 1, 1], [1, 2, 1], [2, 1, 2], [1, 1, 3]] {
        let sum: i32 = a.iter().sum();
        let top = *a.iter().max().unwrap();
        for k in [top + 1, sum - 1, sum, sum + 1, sum + 4, sum + 8, sum + 13] {
            for h in [[4, 8, 8], [6, 6, 6], [3, 9, 5], [8, 4, 12], [12, 12, 6]] {
                for j in 0..6 {
                    grid.push((a, k, h, j));
                }
            }
        }
    }
    let mut three_sets = 0;
    for idx in (0..grid.len()).map(|i| (i * 7919) % grid.len()) {
        if three_sets == WANT_SETS {
            break;
        }
        let (a, k, h, j) = grid[idx];
        if k <= *a.iter().max().unwrap() {
            continue;
        }
        let e = a.map(|x| x as f64 * q);
        let hs = h.map(|x| x as f64 * q);
        let total: f64 = hs.iter().sum();
        let b_max = 4.0 * total + q * (idx % 3) as f64;
        let p = SystemParams::three(e, c, k as f64 * q / c, ThresholdPolicy::RoundRobin3 { h: hs }, b_max);
        let b3 = q * ((j * 3) % (h[0] + 1)) as f64;
        let b2 = q * ((j * 5 + 1) % (h[0] + 1)) as f64;
        let start = [b3 + hs[2], b2, b3];
        if start.iter().any(|&b| b > b_max) {
            continue;
        }
        let Some(want) = oracle_cycles(&p, &start, CYCLES) else { continue };
        three_sets += 1;
        match engine_matches_oracle(&p, &start, &want) {
            Ok(trace) => suite.keep(format!("oracle three-node #{three_sets}"), &trace, &p),
            Err(e) => problems.push(format!("three-node {:?}: {e}", (a, k, h, j))),
        }
    }
    results.push(format!("{three_sets} three-node sets"));

    let ok = problems.is_empty() && diamond_sets >= 20 && three_sets >= 20;
    let detail = if problems.is_empty() {
        format!("{}, {CYCLES} cycles each, all within 1e-9", results.join(", "))
    } else {
        problems.join("; ")
    };
    suite.report(5, ok, "engine equals cycle-stepper oracle", detail);
}

fn three_node_table(suite: &mut Suite) {
    // (name, c*g, e, h, B_max, [throughput RR, ES], [switches RR, ES])
    let configs: [(&str, f64, [f64; 3], [f64; 3], f64, [f64; 2], [f64; 2]); 7] = [
        ("A", 1.6, [0.1, 0.7, 0.8], [5.0, 10.0, 10.0], 100.0, [20.0, 20.0], [163.0, 156.0]),
        ("B", 1.6, [0.1, 0.7, 0.8], [5.0, 10.0, 10.0], 12.0, [18.75, 19.91], [163.0, 157.0]),
        ("C", 2.4, [0.1, 0.7, 0.8], [5.0, 10.0, 10.0], 100.0, [20.0, 20.0], [109.0, 152.0]),
        ("D", 1.2, [0.1, 0.7, 0.8], [5.0, 10.0, 10.0], 100.0, [15.0, 15.0], [100.0, 91.0]),
        ("E", 0.2, [0.1, 0.01, 0.01], [5.0, 10.0, 10.0], 60.0, [20.0, 20.0], [163.0, 156.0]),
        ("F", 1.2, [0.1, 0.7, 0.8], [10.0, 10.0, 10.0], 100.0, [15.0, 15.0], [82.0, 85.0]),
        ("G", 1.6, [0.1, 0.7, 0.8], [5.0, 10.0, 10.0], 60.0, [20.0, 20.0], [163.0, 153.0]),
    ];
    let t0 = Instant::now();
    let mut cells = Vec::new();
    let mut problems = Vec::new();
    for (name, cg, e, h, b_max, thr, sw) in configs {
        for (k, policy) in [ThresholdPolicy::RoundRobin3 { h }, ThresholdPolicy::EarliestSwitch3 { h }].into_iter().enumerate() {
            let tag = policy.short_name();
            let p = SystemParams::three(e, 0.08, cg / 0.08, policy, b_max);
            let trace = run_whole_packets(&p, &SimState::initial(&p), 2000).unwrap();
            let s = summarize(&trace, 300).unwrap();
            cells.push(format!("{name}/{tag} {:.2}/{}", s.throughput, s.switches));
            if rel(s.throughput, thr[k]) > 0.05 {
                problems.push(format!("{name}/{tag} throughput {:.3} vs {}", s.throughput, thr[k]));
            }
            if rel(s.switches as f64, sw[k]) > 0.15 {
                problems.push(format!("{name}/{tag} switches {} vs {}", s.switches, sw[k]));
            }
            suite.keep(format!("config {name} {tag}"), &trace, &p);
        }
    }
    let elapsed = t0.elapsed().as_secs_f64();
    if elapsed >= 5.0 {
        problems.push(format!("took {elapsed:.2} s"));
    }
    let ok = problems.is_empty();
    let detail = if ok {
        format!("{} ({elapsed:.2} s)", cells.join(", "))
    } else {
        format!("{} | measured {}", problems.join("; "), cells.join(", "))
    };
    suite.report(6, ok, "three-node RR/ES table", detail);
}

fn sweep(suite: &mut Suite) {
    let mut prev = f64::NEG_INFINITY;
    let mut monotone = true;
    let mut last = 0.0;
    for k in 1..=50 {
        let h = k as f64;
        let p = SystemParams::diamond(0.8, 0.6, 0.08, 17.0, h / 2.0, h / 2.0, 100.0).with_control(0.01, 0.05);
        let gs = steady_input_rate(&p).unwrap();
        monotone &= gs >= prev;
        prev = gs;
        last = gs;
    }
    let ok = monotone && rel(last, 17.25) <= 0.02;
    suite.report(7, ok, "g_s sweep over h", format!("monotone {monotone}, g_s(50) = {last:.4} vs 17.25"));
}

fn invariants(suite: &mut Suite) {
    let mut total = 0;
    let mut slots = 0;
    let mut first = Vec::new();
    for (label, trace, params) in &suite.traces {
        let v = check_invariants(trace, params);
        slots += trace.len();
        total += v.len();
        if let Some(x) = v.first() {
            first.push(format!("{label}: {x}"));
        }
    }
    let runs = suite.traces.len();
    let ok = total == 0;
    let detail = if ok {
        format!("{runs} runs, {slots} slots, no violations")
    } else {
        format!("{total} violations; first per run: {}", first.join("; "))
    };
    suite.report(8, ok, "slot invariants", detail);
}

fn main() -> ExitCode {
    let mut suite = Suite { failed: 0, traces: Vec::new() };
    switch_pattern(&mut suite);
    steady_rate(&mut suite);
    open_vs_feedback(&mut suite);
    regimes(&mut suite);
    oracle_equivalence(&mut suite);
    three_node_table(&mut suite);
    sweep(&mut suite);
    invariants(&mut suite);
    println!("acceptance: {} of 8 criteria passed", 8 - suite.failed);
    if suite.failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
