//! Runs every example and checks what it demonstrates.

#[path = "../examples/share_reconstruct.rs"]
mod share_reconstruct;
#[path = "../examples/spectral_gap.rs"]
mod spectral_gap;
#[path = "../examples/key_distribution.rs"]
mod key_distribution;
#[path = "../examples/cycle_consensus.rs"]
mod cycle_consensus;
#[path = "../examples/collusion_attack.rs"]
mod collusion_attack;
#[path = "../examples/eavesdrop_attack.rs"]
mod eavesdrop_attack;
#[path = "../examples/nonaverage_update.rs"]
mod nonaverage_update;

use shamir_consensus::protocol::UpdateRule;
use shamir_consensus::shamir::Certificate;
use shamir_consensus::simnet::Verdict;

#[test]
fn share_and_reconstruct() {
    let s = share_reconstruct::run_example().unwrap();
    assert!((s.recovered - s.secret).abs() < 1e-9);
    assert_eq!(s.below_threshold, Certificate::Free { dimension: 1 });
}

#[test]
fn spectral_norms() {
    let gammas = spectral_gap::run_example().unwrap();
    let c5 = 0.5 + 0.5 * (2.0 * std::f64::consts::PI / 5.0).cos();
    let expect = [0.0, c5, 0.4];
    for ((_, got), want) in gammas.iter().zip(expect) {
        assert!((got - want).abs() < 1e-8, "{got} vs {want}");
    }
    assert!(gammas[3].1 > gammas[1].1);
}

#[test]
fn key_distribution_agrees() {
    let out = key_distribution::run_example().unwrap();
    let key = out.key.elements();
    assert_eq!(key.len(), 4);
    assert!(out.node_keys.iter().all(|k| k == key));
    assert!(key.iter().all(|k| (1..=20).contains(k)));
    assert_eq!(out.iterations % 15, 0);
}

#[test]
fn cycle_reaches_the_mean() {
    let trace = cycle_consensus::run_example().unwrap();
    assert!(trace.converged_at.is_some());
    let mean = trace.mean_x0();
    assert!(trace.last().unwrap().states.iter().all(|x| (x - mean).abs() < 1e-6));
    let first = &trace.rounds[0].channel_sums;
    for r in &trace.rounds {
        for (a, b) in r.channel_sums.iter().zip(first) {
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
    }
}

#[test]
fn collusion_threshold() {
    let (weak, strong, x0) = collusion_attack::run_example().unwrap();
    assert!(weak.pre_convergence().all(|v| !v.verdict.is_determined()));
    match strong.verdicts[0].verdict {
        Verdict::Determined(v) => assert!((v - x0).abs() < 1e-6),
        other => panic!("expected the opening round to leak, got {other:?}"),
    }
}

#[test]
fn eavesdrop_needs_key_and_enough_links() {
    let rows = eavesdrop_attack::run_example().unwrap();
    for (knows_key, tapped, first) in rows {
        if knows_key && tapped == 2 {
            assert_eq!(first, Some(0));
        } else {
            assert_eq!(first, None, "knows_key {knows_key}, {tapped} links");
        }
    }
}

#[test]
fn nonaverage_misses_the_mean() {
    let rows = nonaverage_update::run_example().unwrap();
    let (rule, avg, mean) = rows[0];
    assert_eq!(rule, UpdateRule::Average);
    assert!((avg - mean).abs() < 1e-6);
    let (rule, value, mean) = rows[1];
    assert_eq!(rule, UpdateRule::NonAverage);
    assert!((value - mean).abs() > 1e-3);
}
