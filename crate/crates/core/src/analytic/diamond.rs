use super::{near, require_no_control, require_nodes, AnalyticError, Regime, SteadyStateSummary, SubCase};
use crate::model::{SystemParams, COMPARISON_TOLERANCE};

struct Diamond {
    e1: f64,
    e2: f64,
    cg: f64,
    h1: f64,
    h2: f64,
    g: f64,
    c: f64,
}

impl Diamond {
    fn new(params: &SystemParams, what: &'static str) -> Result<Self, AnalyticError> {
        require_nodes(params, what, 2)?;
        Ok(Diamond {
            e1: params.harvest[0],
            e2: params.harvest[1],
            cg: params.slot_demand(),
            h1: params.thresholds.threshold(0),
            h2: params.thresholds.threshold(1),
            g: params.input_rate,
            c: params.packet_energy,
        })
    }

    fn h(&self) -> f64 {
        self.h1 + self.h2
    }

    /// Net rate at which the battery difference closes while node 1 (resp. 2)
    /// is active.
    fn rates(&self) -> Result<(f64, f64), AnalyticError> {
        let r1 = self.cg + self.e2 - self.e1;
        let r2 = self.cg + self.e1 - self.e2;
        if r1 > 0.0 && r2 > 0.0 {
            Ok((r1, r2))
        } else {
            Err(AnalyticError::Singular("c*g must exceed |e1 - e2|"))
        }
    }
}

fn half_drift(params: &SystemParams, cycle_length: f64, cg: f64) -> f64 {
    let et = params.total_harvest() - 2.0 * params.status_energy;
    -2.0 * params.command_energy + (et - cg) * cycle_length / 2.0
}

fn away_regime(drift: f64) -> Regime {
    if near(drift, 0.0) {
        Regime::Balanced
    } else {
        Regime::Transient { drift_up: drift > 0.0 }
    }
}

/// Away-from-boundary cycle when the thresholds are crossed exactly at slot
/// ends: `I_1 = h/(c g + e_2 - e_1)`, `I_2 = h/(c g + e_1 - e_2)`, throughput
/// `g`.
pub fn away_cycle_diamond(params: &SystemParams) -> Result<SteadyStateSummary, AnalyticError> {
    let d = Diamond::new(params, "diamond away-from-boundary cycle")?;
    let (r1, r2) = d.rates()?;
    let slots = vec![d.h() / r1, d.h() / r2];
    let drift = drift_diamond(params, d.g)?;
    let packets = slots.iter().map(|i| i * d.g).collect();
    SteadyStateSummary::from_slots(away_regime(drift), slots, packets, drift)
}

/// Away-from-boundary cycle in whole slots, for arbitrary thresholds.
///
/// `initial_diff` is `B1 - B2` on the pre-status levels at the switch that
/// activates node 1. Each phase lasts the smallest whole number of slots
/// (at least one) after which the difference reaches the next threshold.
pub fn away_cycle_diamond_ceil(params: &SystemParams, initial_diff: f64) -> Result<SteadyStateSummary, AnalyticError> {
    let d = Diamond::new(params, "diamond away-from-boundary cycle")?;
    let (r1, r2) = d.rates()?;
    let whole = |x: f64| (x - COMPARISON_TOLERANCE).ceil().max(1.0);
    let i1 = whole((d.h1 + initial_diff) / r1);
    let diff_21 = i1 * r1 - initial_diff;
    let i2 = whole((d.h2 + diff_21) / r2);
    let slots = vec![i1, i2];
    let drift = half_drift(params, i1 + i2, d.cg);
    let packets = slots.iter().map(|i| i * d.g).collect();
    SteadyStateSummary::from_slots(away_regime(drift), slots, packets, drift)
}

/// Per-node drift per away-from-boundary cycle at input rate `g`.
pub fn drift_diamond(params: &SystemParams, g: f64) -> Result<f64, AnalyticError> {
    require_nodes(params, "diamond drift", 2)?;
    let cg = params.packet_energy * g;
    let h = params.thresholds.total();
    let denom = cg * cg - (params.harvest[1] - params.harvest[0]).powi(2);
    if denom <= 0.0 {
        return Err(AnalyticError::Singular("c*g must exceed |e1 - e2|"));
    }
    Ok(half_drift(params, 2.0 * cg * h / denom, cg))
}

/// Steady state near the battery boundaries for negligible control.
///
/// Balanced when `e_1 + e_2 = c g`; otherwise the drift direction and the
/// threshold ratio `h_1/h_2` select one of three sub-cases on each side.
/// A ratio exactly at an endpoint goes to the single-boundary case (A or B).
pub fn classify_regime_diamond(params: &SystemParams) -> Result<SteadyStateSummary, AnalyticError> {
    require_no_control(params, "the regime table")?;
    let d = Diamond::new(params, "regime classification")?;
    let Diamond { e1, e2, cg, h1, h2, g, c } = d;
    let h = h1 + h2;
    for (node, e) in [(1, e1), (2, e2)] {
        if cg <= e {
            return Err(AnalyticError::ActiveDoesNotDrain { node, demand: cg, harvest: e });
        }
    }
    let tol = COMPARISON_TOLERANCE;

    if near(e1 + e2, cg) {
        let slots = vec![h / (2.0 * e2), h / (2.0 * e1)];
        let packets = slots.iter().map(|i| i * g).collect();
        return SteadyStateSummary::from_slots(Regime::Balanced, slots, packets, 0.0);
    }

    if e1 + e2 < cg {
        // node 1 never sits at zero / node 2 never sits at zero / both do
        let case = if h1 * (cg - e1) <= h2 * e2 + tol {
            SubCase::A
        } else if h1 * e1 >= h2 * (cg - e2) - tol {
            SubCase::B
        } else {
            SubCase::C
        };
        let (slots, packets) = match case {
            SubCase::A => {
                let r = cg + e2 - e1;
                (
                    vec![h / r, h * (cg - e1) / (e1 * r)],
                    vec![g * h / r, e2 * g * h / (e1 * r)],
                )
            }
            SubCase::B => {
                let r = cg + e1 - e2;
                (
                    vec![h * (cg - e2) / (e2 * r), h / r],
                    vec![e1 * g * h / (e2 * r), g * h / r],
                )
            }
            SubCase::C => {
                let w = e1 * h1 + e2 * h2;
                (vec![h1 / e2, h2 / e1], vec![w / (c * e2), w / (c * e1)])
            }
        };
        return SteadyStateSummary::from_slots(Regime::DownDrift(case), slots, packets, 0.0);
    }

    // node 1 never sits at B_max / node 2 never does / both do
    let case = if h1 * (cg - e2) >= h2 * e1 - tol {
        SubCase::A
    } else if h1 * e2 <= h2 * (cg - e1) + tol {
        SubCase::B
    } else {
        SubCase::C
    };
    let slots = match case {
        SubCase::A => {
            let r = cg + e1 - e2;
            vec![e1 * h / ((cg - e1) * r), h / r]
        }
        SubCase::B => {
            let r = cg + e2 - e1;
            vec![h / r, e2 * h / ((cg - e2) * r)]
        }
        SubCase::C => vec![h1 / (cg - e1), h2 / (cg - e2)],
    };
    let packets = slots.iter().map(|i| i * g).collect();
    SteadyStateSummary::from_slots(Regime::UpDrift(case), slots, packets, 0.0)
}
