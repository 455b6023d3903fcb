#![allow(dead_code)]

use std::collections::HashMap;
use std::path::PathBuf;

use consensus_lab::hashcore::Digest256;
use consensus_lab::trace::{EventKind, SimulationTrace};
use consensus_lab::ScenarioConfig;

pub fn scenarios_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

pub fn scenario(name: &str) -> ScenarioConfig {
    ScenarioConfig::load(&scenarios_dir().join(format!("{name}.toml"))).unwrap()
}

pub fn shipped_scenarios() -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(scenarios_dir())
        .unwrap()
        .filter_map(|e| {
            let p = e.ok()?.path();
            (p.extension()? == "toml").then(|| p.file_stem().unwrap().to_string_lossy().into_owned())
        })
        .collect();
    names.sort();
    names
}

/// A proof-of-work scenario with `miners` equal miners of `rate` attempts/s,
/// a fixed target giving `interval` seconds per block, and a constant link
/// delay.
pub fn pow_config(
    seed: u64,
    miners: usize,
    rate: f64,
    interval: f64,
    delay: f64,
    max_height: u64,
    extra: &str,
) -> ScenarioConfig {
    let fraction = 1.0 / (interval * rate * miners as f64);
    let mut text = format!(
        r#"
        seed = {seed}
        [bounds]
        max_height = {max_height}
        [network]
        base_delay = {delay}
        [ledger]
        block_size_limit = 25000
        block_reward = 50
        [pow]
        retarget_interval_blocks = 1000000000
        target_block_interval = {interval}
        initial_target_fraction = {fraction:e}
        {extra}
        "#
    );
    for i in 0..miners {
        text.push_str(&format!(
            "[[accounts]]\nname = \"a{i}\"\nbalance = 100000000\n[[nodes]]\nname = \"m{i}\"\nrole = \"honest-miner\"\nhash_rate = {rate}\naccount = \"a{i}\"\n"
        ));
    }
    ScenarioConfig::from_toml_str(&text).unwrap()
}

pub struct ProposeInfo {
    pub t: f64,
    pub node: String,
    pub height: u64,
    pub parent: Digest256,
    pub signer: Option<String>,
    pub beneficiary: Option<String>,
    pub attempts: Option<u64>,
    pub txs: u64,
}

pub fn proposals(trace: &SimulationTrace) -> HashMap<Digest256, ProposeInfo> {
    trace
        .of_kind(EventKind::Propose)
        .map(|r| {
            let d = &r.details;
            (
                r.block_hash.unwrap(),
                ProposeInfo {
                    t: r.t,
                    node: r.node.clone(),
                    height: r.height.unwrap(),
                    parent: d["parent"].as_str().unwrap().parse().unwrap(),
                    signer: d["signer"].as_str().map(String::from),
                    beneficiary: d["beneficiary"].as_str().map(String::from),
                    attempts: d["attempts"].as_u64(),
                    txs: d["txs"].as_u64().unwrap(),
                },
            )
        })
        .collect()
}

/// Canonical chain (genesis excluded) ending at the tip of the first node.
pub fn canonical_chain(trace: &SimulationTrace, tip: Digest256) -> Vec<Digest256> {
    let props = proposals(trace);
    let mut chain = Vec::new();
    let mut cur = tip;
    while let Some(p) = props.get(&cur) {
        chain.push(cur);
        cur = p.parent;
    }
    chain.reverse();
    chain
}

pub fn end_tips(trace: &SimulationTrace) -> Vec<(String, Digest256, u64)> {
    trace.of_kind(EventKind::End).map(|r| (r.node.clone(), r.block_hash.unwrap(), r.height.unwrap())).collect()
}
