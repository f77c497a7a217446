//! Hysteresis-driven routing over two or three energy-harvesting relays:
//! a slot-level simulator, closed-form steady-state models and
//! harvest-profile scenarios.

pub mod analytic;
pub mod engine;
pub mod model;
pub mod scenarios;

pub use engine::{run, run_whole_packets, step, summarize, RunSummary, Trace};
pub use model::{PacketMode, Profile, SimState, SystemParams, ThresholdPolicy};

/// Format with 12 significant digits, trailing zeros trimmed. Magnitudes
/// below `1e-6` use exponent notation.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let mag = x.abs().log10().floor() as i32;
    if mag < -6 {
        let s = format!("{x:.11e}");
        let (mantissa, exp) = s.split_once('e').unwrap();
        let mantissa = mantissa.trim_end_matches('0').trim_end_matches('.');
        return format!("{mantissa}e{exp}");
    }
    let decimals = (11 - mag).max(0) as usize;
    let s = format!("{x:.decimals$}");
    let s = if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    };
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}
