//! Randomised checks over the whole parameter space the engine accepts.

use proptest::prelude::*;

use super::*;
use crate::model::{PacketMode, ThresholdPolicy};

fn any_params() -> impl Strategy<Value = SystemParams> {
    let policy = prop_oneof![
        (0.5..15.0f64, 0.5..15.0f64).prop_map(|(h1, h2)| ThresholdPolicy::Hysteresis2 { h1, h2 }),
        prop::array::uniform3(0.5..15.0f64).prop_map(|h| ThresholdPolicy::RoundRobin3 { h }),
        prop::array::uniform3(0.5..15.0f64).prop_map(|h| ThresholdPolicy::EarliestSwitch3 { h }),
    ];
    (
        policy,
        prop::collection::vec(0.0..1.5f64, 3),
        0.02..0.2f64,
        0.0..40.0f64,
        prop_oneof![Just((0.0, 0.0)), (0.0..0.05f64, 0.0..0.1f64)],
        10.0..120.0f64,
    )
        .prop_map(|(thresholds, e, c, g, (ct, cr), b_max)| SystemParams {
            harvest: e[..thresholds.node_count()].to_vec(),
            input_rate: g,
            packet_energy: c,
            status_energy: ct,
            command_energy: cr,
            battery_max: b_max,
            thresholds,
        })
}

fn any_setup() -> impl Strategy<Value = (SystemParams, SimState)> {
    (any_params(), prop::collection::vec(0.0..=1.0f64, 3), 0usize..3, any::<bool>()).prop_map(|(p, frac, active, whole)| {
        let n = p.node_count();
        let battery = frac[..n].iter().map(|f| f * p.battery_max).collect();
        let mode = if whole { PacketMode::Whole } else { PacketMode::Fractional };
        let state = SimState::with_battery(battery, active % n).with_packet_mode(mode);
        (p, state)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_run_satisfies_the_slot_invariants((p, s) in any_setup()) {
        let trace = run(&p, &s, 400, None).unwrap();
        let violations = check_invariants(&trace, &p);
        prop_assert!(violations.is_empty(), "{:?}", &violations[..violations.len().min(3)]);
    }

    #[test]
    fn constant_profile_is_bit_identical((p, s) in any_setup()) {
        let fixed = run(&p, &s, 200, None).unwrap();
        let profiled = run(&p, &s, 200, Some(&Profile::constant(&p, 200))).unwrap();
        prop_assert_eq!(fixed.records, profiled.records);
        prop_assert_eq!(fixed.final_state, profiled.final_state);
    }

    #[test]
    fn trace_csv_round_trip_preserves_summary((p, s) in any_setup()) {
        let trace = run(&p, &s, 300, None).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&trace, &mut buf).unwrap();
        let back = read_trace_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(&back.records, &trace.records);
        prop_assert_eq!(summarize(&back, 50).unwrap(), summarize(&trace, 50).unwrap());
    }

    #[test]
    fn delivered_packets_match_records((p, s) in any_setup()) {
        let trace = run(&p, &s, 300, None).unwrap();
        let fin = trace.final_state.as_ref().unwrap();
        for u in 0..p.node_count() {
            let sum: f64 = trace.records.iter().filter(|r| r.active == u).map(|r| r.packets).sum();
            prop_assert!((fin.delivered[u] - sum).abs() <= 1e-9 * sum.max(1.0));
        }
    }
}
