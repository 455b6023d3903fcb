mod common;

use common::*;
use consensus_lab::metrics::{compute_report, theoretical_throughput, Finalization, MetricsReport};
use consensus_lab::stats::gini;
use consensus_lab::trace::SimulationTrace;
use consensus_lab::{simnet, ScenarioConfig};
use proptest::prelude::*;

fn report(cfg: &ScenarioConfig) -> MetricsReport {
    compute_report(&simnet::run(cfg)).unwrap()
}

#[test]
fn bounded_fields_on_every_shipped_scenario() {
    for name in shipped_scenarios() {
        let r = report(&scenario(&name));
        assert!((0.0..=1.0).contains(&r.stale_rate), "{name}");
        assert!((0.0..=1.0).contains(&r.gini_stake), "{name}");
        assert!(r.throughput >= 0.0, "{name}");
        assert!(
            r.throughput <= r.capacity_at_observed_interval + 1e-9,
            "{name}: {} > {}",
            r.throughput,
            r.capacity_at_observed_interval
        );
        let share: f64 = r.block_share.values().sum();
        assert!((share - 1.0).abs() < 1e-9, "{name}: shares sum to {share}");
        assert!(r.canonical_height + r.stale_blocks == r.blocks_proposed, "{name}");
    }
}

#[test]
fn single_miner_chain_has_no_stale_blocks() {
    let r = report(&pow_config(2, 1, 500.0, 2.0, 0.3, 100, ""));
    assert_eq!(r.stale_blocks, 0);
    assert_eq!(r.stale_rate, 0.0);
    assert_eq!(r.canonical_height, 100);
    assert_eq!(r.block_share["a0"], 1.0);
    assert_eq!(r.finalization, Finalization::Converged);
}

#[test]
fn equal_miners_have_zero_gini() {
    let r = report(&pow_config(2, 4, 500.0, 2.0, 0.05, 20, ""));
    assert_eq!(r.gini_stake, 0.0);
}

#[test]
fn report_is_a_pure_function_of_the_trace() {
    for name in ["pow-baseline", "pos-nothing-at-stake"] {
        let trace = simnet::run(&scenario(name));
        let reparsed = SimulationTrace::parse(&trace.to_ndjson()).unwrap();
        let a = compute_report(&trace).unwrap();
        let b = compute_report(&reparsed).unwrap();
        assert_eq!(a.to_json(), b.to_json(), "{name}");
        assert_eq!(a.trace_digest, trace.digest());
    }
}

#[test]
fn empty_trace_gives_zeroed_converged_report() {
    let r = compute_report(&SimulationTrace::default()).unwrap();
    assert_eq!(r.blocks_proposed, 0);
    assert_eq!(r.throughput, 0.0);
    assert_eq!(r.finalization, Finalization::Converged);
}

#[test]
fn window_means_cover_the_canonical_chain() {
    let r = report(&scenario("pow-baseline"));
    assert!(r.window_intervals.len() >= 6);
    let total: f64 =
        r.window_intervals.iter().map(|w| w.mean_interval * (w.last_height - w.first_height + 1) as f64).sum();
    let covered: u64 = r.window_intervals.iter().map(|w| w.last_height - w.first_height + 1).sum();
    assert_eq!(covered, r.canonical_height);
    assert!((total - r.duration).abs() < 1e-6 * r.duration);
}

#[test]
fn throughput_formula_cases() {
    let t = theoretical_throughput(1_000_000.0, 250.0, 600.0);
    assert!((t - 20.0 / 3.0).abs() < 1e-12);
    assert_eq!(theoretical_throughput(500.0, 500.0, 8.0), 1.0 / 8.0);
    assert_eq!(theoretical_throughput(1000.0, 100.0, 20.0), theoretical_throughput(1000.0, 100.0, 10.0) / 2.0);
}

proptest! {
    #[test]
    fn gini_in_unit_interval_and_scale_free(xs in prop::collection::vec(0.0f64..1e6, 1..40), k in 0.01f64..100.0) {
        let g = gini(&xs);
        prop_assert!((0.0..=1.0).contains(&g));
        let scaled: Vec<f64> = xs.iter().map(|x| x * k).collect();
        if xs.iter().any(|&x| x > 0.0) {
            prop_assert!((gini(&scaled) - g).abs() < 1e-9);
        }
    }

    #[test]
    fn gini_equal_and_single_holder(n in 1usize..50, v in 1.0f64..1e6) {
        prop_assert!(gini(&vec![v; n]).abs() < 1e-12);
        let mut one = vec![0.0; n];
        one[0] = v;
        prop_assert!((gini(&one) - (1.0 - 1.0 / n as f64)).abs() < 1e-12);
    }

    #[test]
    fn throughput_scales_inversely_with_interval(size in 1.0f64..1e7, tx in 1.0f64..1e4, dt in 0.1f64..1e4) {
        let a = theoretical_throughput(size, tx, dt);
        prop_assert!(a > 0.0);
        prop_assert!((theoretical_throughput(size, tx, 2.0 * dt) * 2.0 - a).abs() <= 1e-12 * a);
    }
}
