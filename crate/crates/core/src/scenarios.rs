//! Time-varying experiments: harvest/input profiles, windowed statistics and
//! the closed-loop input-rate controller.

use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::analytic::{feedback_input_rate_with, AnalyticError};
use crate::engine::{check_run_inputs, detect_cycles, step_with, EngineError, Trace};
use crate::model::{ParamError, Profile, SimState, SlotInputs, SystemParams};

const SYNTHETIC_FLAT: &str = include_str!("../data/synthetic_flat.csv");
const SYNTHETIC_SCHEDULED: &str = include_str!("../data/synthetic_scheduled.csv");

/// Names accepted by [`bundled_profile`].
pub const BUNDLED_PROFILES: [&str; 2] = ["synthetic_flat", "synthetic_scheduled"];

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("profile is empty")]
    Empty,
    #[error("line {line}: {msg}")]
    Row { line: u64, msg: String },
    #[error("line {line}: slots {start}-{end} overlap the previous range ending at {prev_end}")]
    Overlap { line: u64, start: usize, end: usize, prev_end: usize },
    #[error("no rows cover slots {from}-{to}")]
    Gap { from: usize, to: usize },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Params(#[from] ParamError),
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("estimator window must be at least one cycle")]
    EstimatorWindow,
}

struct Segment {
    line: u64,
    start: usize,
    end: usize,
    harvest: Vec<f64>,
    input_rate: f64,
}

fn parse_range(text: &str) -> Option<(usize, usize)> {
    let (a, b) = text.split_once('-')?;
    let (a, b) = (a.trim().parse().ok()?, b.trim().parse().ok()?);
    (a <= b).then_some((a, b))
}

/// Parse a profile CSV.
///
/// Columns are `slot_range,e1,e2[,e3],g` with `slot_range` written `a-b`
/// (inclusive). The header line is optional. Rows may appear in any order
/// but together must cover `0..=last` exactly once.
pub fn load_profile(text: &str) -> Result<Profile, ProfileError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());

    let mut segments = Vec::new();
    let mut width = None;
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.iter().all(str::is_empty) {
            continue;
        }
        if segments.is_empty() && width.is_none() && row.get(0) == Some("slot_range") {
            width = Some(row.len());
            continue;
        }
        let bad = |msg: String| ProfileError::Row { line, msg };
        let w = *width.get_or_insert(row.len());
        if row.len() != w || !(4..=5).contains(&w) {
            return Err(bad(format!("expected {} columns (slot_range, 2 or 3 harvest rates, g), got {}", w.clamp(4, 5), row.len())));
        }
        let (start, end) = parse_range(&row[0]).ok_or_else(|| bad(format!("bad slot range {:?}", &row[0])))?;
        let mut values = Vec::with_capacity(w - 1);
        for field in row.iter().skip(1) {
            let x: f64 = field.parse().map_err(|_| bad(format!("not a number: {field:?}")))?;
            if !x.is_finite() || x < 0.0 {
                return Err(bad(format!("values must be finite and non-negative, got {x}")));
            }
            values.push(x);
        }
        let input_rate = values.pop().unwrap_or_default();
        segments.push(Segment { line, start, end, harvest: values, input_rate });
    }
    if segments.is_empty() {
        return Err(ProfileError::Empty);
    }

    segments.sort_by_key(|s| s.start);
    let mut next = 0;
    for s in &segments {
        if s.start < next {
            return Err(ProfileError::Overlap { line: s.line, start: s.start, end: s.end, prev_end: next - 1 });
        }
        if s.start > next {
            return Err(ProfileError::Gap { from: next, to: s.start - 1 });
        }
        next = s.end + 1;
    }

    let mut harvest = Vec::with_capacity(next);
    let mut input_rate = Vec::with_capacity(next);
    for s in &segments {
        let len = s.end - s.start + 1;
        harvest.extend(std::iter::repeat_n(s.harvest.clone(), len));
        input_rate.extend(std::iter::repeat_n(s.input_rate, len));
    }
    Ok(Profile::new(harvest, input_rate)?)
}

pub fn load_profile_path(path: &Path) -> Result<Profile, ProfileError> {
    let text = std::fs::read_to_string(path).map_err(|source| ProfileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_profile(&text)
}

/// Bundled synthetic 8000-slot profiles for two nodes.
///
/// Both share the same harvest: node 1 harvests nothing for the first 1000
/// slots, the node totals are 2553 and 1595 mJ, and slots 3000-3499 run at
/// 0.40754 / 0.4 mJ/slot. `synthetic_flat` offers 6 packets/slot throughout;
/// `synthetic_scheduled` offers the same 48000 packets shaped to the harvest.
pub fn bundled_profile(name: &str) -> Option<Profile> {
    let text = match name {
        "synthetic_flat" => SYNTHETIC_FLAT,
        "synthetic_scheduled" => SYNTHETIC_SCHEDULED,
        _ => return None,
    };
    Some(load_profile(text).expect("bundled profile parses"))
}

/// Parameters that go with the bundled profiles: `c = 0.08`, `c_t = 0.01`,
/// `c_r = 0.05`, `B_max = 200`, `h_1 = h_2 = 10`. Harvest and input rate
/// are the profile's first row.
pub fn synthetic_scenario_params() -> SystemParams {
    SystemParams::diamond(0.0, 0.086, 0.08, 6.0, 10.0, 10.0, 200.0).with_control(0.01, 0.05)
}

/// Both nodes start at 10 mJ with node 1 active.
pub fn synthetic_initial_state() -> SimState {
    SimState::with_battery(vec![10.0, 10.0], 0)
}

/// Write a profile in the loader's format, merging runs of identical rows.
pub fn write_profile_csv<W: Write>(profile: &Profile, out: W) -> Result<(), ProfileError> {
    let n = profile.node_count();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["slot_range".to_string()];
    header.extend((1..=n).map(|u| format!("e{u}")));
    header.push("g".into());
    w.write_record(&header)?;

    let mut start = 0;
    while start < profile.len() {
        let key = profile.inputs(start);
        let mut end = start;
        while end + 1 < profile.len() && profile.inputs(end + 1) == key {
            end += 1;
        }
        let mut row = vec![format!("{start}-{end}")];
        row.extend(key.harvest.iter().map(f64::to_string));
        row.push(key.input_rate.to_string());
        w.write_record(&row)?;
        start = end + 1;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Offered vs delivered packets over one window of slots.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowStats {
    pub index: usize,
    pub start_slot: u64,
    /// Slots in this window; the last window may be short.
    pub length: usize,
    pub offered: f64,
    pub delivered: f64,
    /// Energy harvested per node, mJ.
    pub harvested: Vec<f64>,
    /// Mean pre-status battery level over nodes and slots, mJ.
    pub mean_battery: f64,
}

/// Split a trace into consecutive windows of `window` slots.
///
/// Offered input and harvest come from the inputs recorded with the trace;
/// for a trace without them (one read back from CSV) they are NaN.
/// A zero window yields no windows.
pub fn windowed_stats(trace: &Trace, window: usize) -> Vec<WindowStats> {
    if window == 0 {
        return Vec::new();
    }
    let n = trace.node_count;
    let have_inputs = trace.inputs.len() == trace.records.len();
    trace
        .records
        .chunks(window)
        .enumerate()
        .map(|(index, recs)| {
            let first = index * window;
            let (offered, harvested) = if have_inputs {
                let inputs: &[SlotInputs] = &trace.inputs[first..first + recs.len()];
                let mut harvested = vec![0.0; n];
                for inp in inputs {
                    for (h, e) in harvested.iter_mut().zip(&inp.harvest) {
                        *h += e;
                    }
                }
                (inputs.iter().map(|i| i.input_rate).sum(), harvested)
            } else {
                (f64::NAN, vec![f64::NAN; n])
            };
            let battery_sum: f64 = recs.iter().flat_map(|r| r.pre.iter()).sum();
            WindowStats {
                index,
                start_slot: recs[0].slot,
                length: recs.len(),
                offered,
                delivered: recs.iter().map(|r| r.packets).sum(),
                harvested,
                mean_battery: battery_sum / (recs.len() * n) as f64,
            }
        })
        .collect()
}

pub fn window_csv_header(node_count: usize) -> String {
    let mut cols = vec!["window".to_string(), "offered".into(), "delivered".into()];
    cols.extend((1..=node_count).map(|u| format!("harvest{u}")));
    cols.join(",")
}

impl WindowStats {
    pub fn csv_row(&self) -> String {
        let mut cols = vec![
            self.index.to_string(),
            crate::fmt_sig(self.offered),
            crate::fmt_sig(self.delivered),
        ];
        cols.extend(self.harvested.iter().map(|&h| crate::fmt_sig(h)));
        cols.join(",")
    }
}

/// A controller decision, taken at the switch that closed a cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct RateUpdate {
    pub slot: u64,
    /// Mean length of the last `estimator_window` cycles, slots.
    pub cycle_estimate: f64,
    /// Input rate in force from the next slot on.
    pub input_rate: f64,
    /// The controller produced a non-positive rate and kept the old one.
    pub held: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackRun {
    pub trace: Trace,
    pub updates: Vec<RateUpdate>,
}

/// Run with the input rate set by cycle-length feedback.
///
/// Whenever a cycle completes and at least `estimator_window` cycles are
/// available, the mean of the last `estimator_window` lengths is fed to
/// [`feedback_input_rate_with`] with the current slot's harvest. Until the
/// first update the input rate comes from the profile, or from `params`.
pub fn run_with_feedback(
    params: &SystemParams,
    initial: &SimState,
    horizon: usize,
    estimator_window: usize,
    profile: Option<&Profile>,
) -> Result<FeedbackRun, ScenarioError> {
    if estimator_window == 0 {
        return Err(ScenarioError::EstimatorWindow);
    }
    check_run_inputs(params, initial, horizon, profile)?;

    let mut records = Vec::with_capacity(horizon);
    let mut inputs = Vec::with_capacity(horizon);
    let mut updates = Vec::new();
    let mut controlled: Option<f64> = None;
    let mut cycle_starts: Vec<usize> = Vec::new();
    let mut state = initial.clone();

    for i in 0..horizon {
        let mut slot_inputs = match profile {
            Some(p) => p.inputs(i),
            None => SlotInputs::from_params(params),
        };
        if let Some(g) = controlled {
            slot_inputs.input_rate = g;
        }
        let (next, record) = step_with(&state, params, &slot_inputs.harvest, slot_inputs.input_rate);

        if record.switched && record.active == 0 {
            cycle_starts.push(i);
            let completed = cycle_starts.len().saturating_sub(1);
            if completed >= estimator_window {
                let recent = &cycle_starts[cycle_starts.len() - 1 - estimator_window..];
                let estimate = (recent[recent.len() - 1] - recent[0]) as f64 / estimator_window as f64;
                let current = controlled.unwrap_or(slot_inputs.input_rate);
                // the slot recorded here already used the old rate
                let update = match feedback_input_rate_with(estimate, params, &slot_inputs.harvest) {
                    Ok(g) => RateUpdate { slot: record.slot, cycle_estimate: estimate, input_rate: g, held: false },
                    Err(AnalyticError::NonPositiveRate(_)) => {
                        RateUpdate { slot: record.slot, cycle_estimate: estimate, input_rate: current, held: true }
                    }
                    Err(e) => unreachable!("cycle estimate is positive: {e}"),
                };
                controlled = Some(update.input_rate);
                updates.push(update);
            }
        }

        records.push(record);
        inputs.push(slot_inputs);
        state = next;
    }

    let trace = Trace {
        node_count: params.node_count(),
        initial_active: Some(initial.active),
        records,
        inputs,
        final_state: Some(state),
    };
    debug_assert_eq!(detect_cycles(&trace).len(), cycle_starts.len().saturating_sub(1));
    Ok(FeedbackRun { trace, updates })
}
