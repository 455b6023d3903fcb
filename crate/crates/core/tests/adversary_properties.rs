mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::*;
use consensus_lab::adversary::{detect_equivocation, slash, MarginAccount, SignedClaim};
use consensus_lab::hashcore::Digest256;
use consensus_lab::ledger::AccountId;
use consensus_lab::metrics::{compute_report, Finalization};
use consensus_lab::trace::{EventKind, SimulationTrace};
use consensus_lab::{simnet, ScenarioConfig};
use proptest::prelude::*;

fn signed_at(trace: &SimulationTrace) -> BTreeMap<(String, u64), BTreeSet<Digest256>> {
    let mut out: BTreeMap<(String, u64), BTreeSet<Digest256>> = BTreeMap::new();
    for (hash, p) in proposals(trace) {
        if let Some(signer) = p.signer {
            out.entry((signer, p.height)).or_default().insert(hash);
        }
    }
    out
}

fn attack(seed: u64, slashing: bool) -> SimulationTrace {
    let cfg = scenario("pos-nothing-at-stake");
    simnet::run(&ScenarioConfig { seed, slashing, ..cfg })
}

#[test]
fn every_slash_is_backed_by_two_signatures_at_one_height() {
    for seed in 1..=5 {
        let trace = attack(seed, true);
        let signed = signed_at(&trace);
        let slashes: Vec<_> = trace.of_kind(EventKind::Slash).collect();
        assert!(!slashes.is_empty(), "seed {seed}: attacker was never caught");
        for s in slashes {
            let offender = s.details["offender"].as_str().unwrap().to_string();
            let blocks = &signed[&(offender.clone(), s.height.unwrap())];
            assert!(blocks.len() >= 2, "seed {seed}: {offender} slashed on one signature");
        }
    }
}

#[test]
fn every_equivocation_is_reported_once_and_slashed_once() {
    for seed in 1..=5 {
        let trace = attack(seed, true);
        let double_signed: BTreeSet<(String, u64)> =
            signed_at(&trace).into_iter().filter(|(_, b)| b.len() >= 2).map(|(k, _)| k).collect();
        let reported: Vec<(String, u64)> = trace
            .of_kind(EventKind::Equivocation)
            .map(|r| (r.details["offender"].as_str().unwrap().to_string(), r.height.unwrap()))
            .collect();
        let unique: BTreeSet<_> = reported.iter().cloned().collect();
        assert_eq!(unique.len(), reported.len(), "seed {seed}: duplicate reports");
        assert_eq!(unique, double_signed, "seed {seed}");

        let mut per_owner: BTreeMap<String, u64> = BTreeMap::new();
        for s in trace.of_kind(EventKind::Slash) {
            *per_owner.entry(s.details["offender"].as_str().unwrap().to_string()).or_default() += 1;
        }
        assert!(per_owner.values().all(|&n| n == 1), "seed {seed}: {per_owner:?}");
    }
}

#[test]
fn slashed_owner_stops_signing() {
    let trace = attack(2, true);
    let slash = trace.of_kind(EventKind::Slash).next().unwrap();
    let offender = slash.details["offender"].as_str().unwrap();
    let later = proposals(&trace).values().filter(|p| p.signer.as_deref() == Some(offender) && p.t > slash.t).count();
    assert_eq!(later, 0);
    let report = compute_report(&trace).unwrap();
    assert_eq!(report.confiscated, 100);
    assert_eq!(report.finalization, Finalization::Converged);
}

#[test]
fn without_slashing_the_attacker_keeps_forks_alive() {
    let trace = attack(4, false);
    let report = compute_report(&trace).unwrap();
    assert_eq!(report.slash_events, 0);
    assert!(report.equivocations > 10, "{}", report.equivocations);
    assert_eq!(report.finalization, Finalization::ForkedAtEnd);
}

#[test]
fn honest_seed_matrix_never_slashes() {
    let mut runs = 0;
    for name in shipped_scenarios() {
        let cfg = scenario(&name);
        let honest = cfg.nodes.iter().all(|n| n.role != consensus_lab::config::NodeRole::NothingAtStake);
        if !honest || name.contains("bitcoin-scale") {
            continue;
        }
        for seed in 1..=3 {
            let trace = simnet::run(&ScenarioConfig { seed, slashing: true, ..cfg.clone() });
            assert_eq!(trace.of_kind(EventKind::Equivocation).count(), 0, "{name} seed {seed}");
            assert_eq!(trace.of_kind(EventKind::Slash).count(), 0, "{name} seed {seed}");
            runs += 1;
        }
    }
    assert!(runs >= 9);
}

fn arb_claims() -> impl Strategy<Value = Vec<SignedClaim>> {
    prop::collection::vec((0u32..4, 0u64..6, 0u8..3), 0..60).prop_map(|v| {
        v.into_iter()
            .map(|(o, h, b)| SignedClaim {
                owner: AccountId(o),
                height: h,
                block_hash: consensus_lab::double_sha256(&[o as u8, h as u8, b]),
            })
            .collect()
    })
}

proptest! {
    /// The detector reports exactly the (owner, height) pairs with two or
    /// more distinct blocks, once each, and every proof verifies.
    #[test]
    fn detector_is_sound_and_complete(claims in arb_claims()) {
        let mut distinct: BTreeMap<(AccountId, u64), BTreeSet<Digest256>> = BTreeMap::new();
        for c in &claims {
            distinct.entry((c.owner, c.height)).or_default().insert(c.block_hash);
        }
        let expected: BTreeSet<_> = distinct.into_iter().filter(|(_, b)| b.len() > 1).map(|(k, _)| k).collect();
        let proofs = detect_equivocation(claims);
        let found: BTreeSet<_> = proofs.iter().map(|p| (p.offender, p.height)).collect();
        prop_assert_eq!(found.len(), proofs.len());
        prop_assert_eq!(found, expected);
        for p in &proofs {
            prop_assert!(p.verify().is_ok());
            let out = slash(&MarginAccount::new(p.offender, 77), p).unwrap();
            prop_assert_eq!(out.confiscated, 77);
            prop_assert_eq!(slash(&out.margin, p).unwrap().confiscated, 0);
        }
    }
}
