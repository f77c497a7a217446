use nalgebra::{DMatrix, DVector};

use super::{near, require_nodes, AnalyticError, Regime, SteadyStateSummary};
use crate::model::SystemParams;

/// `E = sum e_u^2 - sum_{u<w} e_u e_w`.
pub(super) fn spread(e: &[f64]) -> f64 {
    let sq: f64 = e.iter().map(|x| x * x).sum();
    sq - e[0] * e[1] - e[1] * e[2] - e[2] * e[0]
}

fn denominator(params: &SystemParams, g: f64) -> Result<f64, AnalyticError> {
    let cg = params.packet_energy * g;
    let d = cg * cg - spread(&params.harvest);
    if d > 0.0 {
        Ok(d)
    } else {
        Err(AnalyticError::Singular("c^2 g^2 must exceed E"))
    }
}

/// Round-robin cycle of three nodes away from the boundaries.
///
/// `I_u = h (c g + 2 e_u - e_w - e_z) / (2 (c^2 g^2 - E))`; throughput `g`.
pub fn away_cycle_three(params: &SystemParams) -> Result<SteadyStateSummary, AnalyticError> {
    require_nodes(params, "three-node away-from-boundary cycle", 3)?;
    let g = params.input_rate;
    let cg = params.slot_demand();
    let h = params.thresholds.total();
    let d = denominator(params, g)?;
    let sum: f64 = params.harvest.iter().sum();
    let slots: Vec<f64> = params.harvest.iter().map(|e| h * (cg + 3.0 * e - sum) / (2.0 * d)).collect();
    if slots.iter().any(|&i| i <= 0.0) {
        return Err(AnalyticError::Singular("a node would never be active"));
    }
    let drift = drift_three(params, g)?;
    let regime = if near(drift, 0.0) {
        Regime::Balanced
    } else {
        Regime::Transient { drift_up: drift > 0.0 }
    };
    let packets = slots.iter().map(|i| i * g).collect();
    SteadyStateSummary::from_slots(regime, slots, packets, drift)
}

/// Per-node drift per round-robin cycle at input rate `g`.
pub fn drift_three(params: &SystemParams, g: f64) -> Result<f64, AnalyticError> {
    require_nodes(params, "three-node drift", 3)?;
    let cg = params.packet_energy * g;
    let h = params.thresholds.total();
    let et = params.total_harvest() - 3.0 * params.status_energy;
    let d = denominator(params, g)?;
    Ok(-3.0 * params.command_energy - cg * h * (cg - et) / (2.0 * d))
}

/// Post-switch battery levels over one round-robin cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct ThreeNodeLevels {
    /// Levels just after the switches into node 1, 2, 3 and back into node 1.
    pub levels: [[f64; 3]; 4],
    pub active_slots: [f64; 3],
    pub drift: f64,
}

/// Solve the full steady-state cycle for a given `B_1(0)`.
///
/// Fifteen unknowns: `B_2(0)`, `B_3(0)`, the three levels after each of the
/// three switches, `I_1..I_3` and the drift. The equations are the three
/// threshold conditions, nine per-phase battery updates and the requirement
/// that every node drifts by the same amount.
pub fn three_node_levels(params: &SystemParams, b10: f64) -> Result<ThreeNodeLevels, AnalyticError> {
    require_nodes(params, "three-node battery levels", 3)?;
    let cg = params.slot_demand();
    let (ct, cr) = (params.status_energy, params.command_energy);
    let e = &params.harvest;
    let h = params.thresholds.thresholds();

    // level of node u after phase k (k = 0 is the opening switch)
    let lvl = |k: usize, u: usize| -> Option<usize> {
        match (k, u) {
            (0, 0) => None,
            (0, u) => Some(u - 1),
            (k, u) => Some(2 + 3 * (k - 1) + u),
        }
    };
    let slot_var = |k: usize| 11 + k;
    const DRIFT: usize = 14;

    let mut a = DMatrix::<f64>::zeros(15, 15);
    let mut b = DVector::<f64>::zeros(15);
    let mut row = 0;
    // adds coef * level(k, u), folding the known B_1(0) into the right side
    let put = |a: &mut DMatrix<f64>, b: &mut DVector<f64>, row: usize, k: usize, u: usize, coef: f64| match lvl(k, u) {
        Some(j) => a[(row, j)] += coef,
        None => b[row] -= coef * b10,
    };

    // B_1(0) - B_3(0) = h_3 ; B_2(t1) - B_1(t1) = h_1 ; B_3(t2) - B_2(t2) = h_2
    for (k, ahead, behind, thr) in [(0, 0, 2, h[2]), (1, 1, 0, h[0]), (2, 2, 1, h[1])] {
        put(&mut a, &mut b, row, k, ahead, 1.0);
        put(&mut a, &mut b, row, k, behind, -1.0);
        b[row] += thr;
        row += 1;
    }
    for k in 0..3 {
        for u in 0..3 {
            let rate = if u == k { e[u] - cg - ct } else { e[u] - ct };
            put(&mut a, &mut b, row, k + 1, u, 1.0);
            put(&mut a, &mut b, row, k, u, -1.0);
            a[(row, slot_var(k))] -= rate;
            b[row] -= cr;
            row += 1;
        }
    }
    for u in 0..3 {
        put(&mut a, &mut b, row, 3, u, 1.0);
        put(&mut a, &mut b, row, 0, u, -1.0);
        a[(row, DRIFT)] = -1.0;
        row += 1;
    }

    let x = a.lu().solve(&b).ok_or(AnalyticError::LinearSystem)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(AnalyticError::LinearSystem);
    }
    let mut levels = [[0.0; 3]; 4];
    for (k, level) in levels.iter_mut().enumerate() {
        for (u, v) in level.iter_mut().enumerate() {
            *v = lvl(k, u).map_or(b10, |j| x[j]);
        }
    }
    Ok(ThreeNodeLevels {
        levels,
        active_slots: [x[11], x[12], x[13]],
        drift: x[DRIFT],
    })
}
