//! Run-level measurements, computed from a trace alone.
//!
//! The first trace record embeds the full scenario, so a saved trace is
//! enough to reproduce the report byte-for-byte.
//!
//! Conventions:
//! * The final canonical chain ends at the highest tip reported by the
//!   per-node `end` records (earliest proposal breaks ties).
//! * `mean_block_interval` is the time of the last canonical block divided by
//!   its height. `throughput` is the number of confirmed user transactions
//!   divided by that same time.
//! * `theoretical_throughput` is `(block_size_limit / tx_bytes) /
//!   target_block_interval`. Proof of stake has no configured interval, so
//!   the observed mean interval is used there.
//! * `total_hash_attempts` is an energy proxy, not joules. It sums the
//!   per-node counters in the `end` records. Exact mining counts hashes;
//!   statistical mining imputes `hash_rate * elapsed`.
//! * Gini uses the discrete pairwise formula, so a single holder among `n`
//!   gives `1 - 1/n`. It weighs staked amounts (PoS) or hash rates (PoW).

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::config::{Consensus, ScenarioConfig};
use crate::hashcore::Digest256;
use crate::stats::gini;
use crate::trace::{EventKind, SimulationTrace};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Finalization {
    #[default]
    Converged,
    ForkedAtEnd,
}

impl Finalization {
    pub fn as_str(&self) -> &'static str {
        match self {
            Finalization::Converged => "converged",
            Finalization::ForkedAtEnd => "forked-at-end",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WindowStat {
    pub window: u64,
    pub first_height: u64,
    pub last_height: u64,
    pub mean_interval: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub seed: u64,
    pub consensus: String,
    pub trace_digest: String,
    pub duration: f64,
    pub blocks_proposed: u64,
    pub canonical_height: u64,
    pub mean_block_interval: f64,
    pub confirmed_transactions: u64,
    pub throughput: f64,
    pub theoretical_throughput: f64,
    /// Capacity at the observed mean interval; an upper bound on `throughput`.
    pub capacity_at_observed_interval: f64,
    pub stale_blocks: u64,
    pub stale_rate: f64,
    /// Blocks that share a signer and height with another block.
    pub equivocation_blocks: u64,
    pub equivocations: u64,
    pub rejected_deliveries: u64,
    pub orphaned_deliveries: u64,
    pub total_hash_attempts: u64,
    pub block_share: BTreeMap<String, f64>,
    pub gini_stake: f64,
    /// Longest branch off the final canonical chain, in blocks.
    pub max_fork_persistence: u64,
    /// First height of that branch.
    pub fork_height: Option<u64>,
    pub final_tips_agree: bool,
    pub finalization: Finalization,
    pub slash_events: u64,
    pub confiscated: u64,
    pub first_slash_time: Option<f64>,
    /// Height of the first common, never-abandoned tip after the first slash,
    /// minus the highest block proposed by the time of that slash.
    pub convergence_after_slash_blocks: Option<u64>,
    pub mempool_final_max: u64,
    pub window_intervals: Vec<WindowStat>,
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("trace does not start with a scenario record")]
    MissingScenario,
    #[error("trace has no end records; it is incomplete")]
    MissingEnd,
    #[error("malformed {event} record: {message}")]
    BadRecord { event: String, message: String },
}

fn bad(event: EventKind, message: impl Into<String>) -> MetricsError {
    MetricsError::BadRecord { event: event.to_string(), message: message.into() }
}

struct ProposedBlock {
    t: f64,
    height: u64,
    parent: Digest256,
    beneficiary: Option<String>,
    signer: Option<String>,
    txs: u64,
}

/// Parent-linked view of every proposed block.
struct BlockIndex {
    genesis: Digest256,
    blocks: HashMap<Digest256, ProposedBlock>,
    order: Vec<Digest256>,
}

impl BlockIndex {
    fn height(&self, h: &Digest256) -> u64 {
        self.blocks.get(h).map_or(0, |b| b.height)
    }

    fn time(&self, h: &Digest256) -> f64 {
        self.blocks.get(h).map_or(0.0, |b| b.t)
    }

    fn parent(&self, h: &Digest256) -> Option<Digest256> {
        self.blocks.get(h).map(|b| b.parent)
    }

    fn is_ancestor_or_self(&self, ancestor: &Digest256, of: &Digest256) -> bool {
        let target = self.height(ancestor);
        let mut cur = *of;
        while self.height(&cur) > target {
            match self.parent(&cur) {
                Some(p) => cur = p,
                None => return false,
            }
        }
        cur == *ancestor
    }

    fn chain_to(&self, tip: &Digest256) -> Vec<Digest256> {
        let mut chain = vec![*tip];
        let mut cur = *tip;
        while let Some(p) = self.parent(&cur) {
            chain.push(p);
            cur = p;
        }
        chain.reverse();
        chain
    }
}

fn detail_str(v: &Value, key: &str) -> Option<String> {
    v.get(key).and_then(Value::as_str).map(str::to_string)
}

pub fn compute_report(trace: &SimulationTrace) -> Result<MetricsReport, MetricsError> {
    if trace.is_empty() {
        return Ok(MetricsReport::default());
    }
    let first = &trace.records[0];
    if first.event != EventKind::Scenario {
        return Err(MetricsError::MissingScenario);
    }
    let cfg: ScenarioConfig = serde_json::from_value(first.details.get("config").cloned().unwrap_or(Value::Null))
        .map_err(|e| bad(EventKind::Scenario, e.to_string()))?;
    let genesis = first.block_hash.ok_or_else(|| bad(EventKind::Scenario, "missing genesis hash"))?;

    let mut index = BlockIndex { genesis, blocks: HashMap::new(), order: Vec::new() };
    for r in trace.of_kind(EventKind::Propose) {
        let hash = r.block_hash.ok_or_else(|| bad(EventKind::Propose, "missing block_hash"))?;
        let parent = r
            .details
            .get("parent")
            .and_then(Value::as_str)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(EventKind::Propose, "missing parent"))?;
        index.blocks.insert(
            hash,
            ProposedBlock {
                t: r.t,
                height: r.height.ok_or_else(|| bad(EventKind::Propose, "missing height"))?,
                parent,
                beneficiary: detail_str(&r.details, "beneficiary"),
                signer: detail_str(&r.details, "signer"),
                txs: r.details.get("txs").and_then(Value::as_u64).unwrap_or(0),
            },
        );
        index.order.push(hash);
    }

    let ends: Vec<_> = trace.of_kind(EventKind::End).collect();
    if ends.is_empty() {
        return Err(MetricsError::MissingEnd);
    }
    let final_tips: Vec<Digest256> = ends
        .iter()
        .map(|r| r.block_hash.ok_or_else(|| bad(EventKind::End, "missing block_hash")))
        .collect::<Result<_, _>>()?;
    let final_tip = *final_tips
        .iter()
        .max_by(|a, b| {
            index.height(a).cmp(&index.height(b)).then(index.time(b).total_cmp(&index.time(a))).then(b.cmp(a))
        })
        .expect("non-empty");
    let final_tips_agree = final_tips.iter().all(|t| *t == final_tip);
    let total_hash_attempts = ends.iter().filter_map(|r| r.details.get("hash_attempts").and_then(Value::as_u64)).sum();
    let mempool_final_max =
        ends.iter().filter_map(|r| r.details.get("mempool").and_then(Value::as_u64)).max().unwrap_or(0);

    // Canonical chain.
    let chain = index.chain_to(&final_tip);
    debug_assert_eq!(chain[0], index.genesis);
    let canonical: std::collections::HashSet<Digest256> = chain.iter().copied().collect();
    let canonical_height = index.height(&final_tip);
    let duration = index.time(&final_tip);
    let mean_block_interval = if canonical_height > 0 { duration / canonical_height as f64 } else { 0.0 };
    let confirmed_transactions: u64 = chain.iter().filter_map(|h| index.blocks.get(h)).map(|b| b.txs).sum();
    let throughput = if duration > 0.0 { confirmed_transactions as f64 / duration } else { 0.0 };
    let per_block = cfg.ledger.block_size_limit as f64 / f64::from(cfg.injection.tx_bytes);
    let capacity_at_observed_interval = if mean_block_interval > 0.0 { per_block / mean_block_interval } else { 0.0 };
    let theoretical_throughput = match &cfg.consensus {
        Consensus::Pow { params, .. } => theoretical_throughput(
            cfg.ledger.block_size_limit as f64,
            f64::from(cfg.injection.tx_bytes),
            params.target_block_interval,
        ),
        Consensus::Pos { .. } => capacity_at_observed_interval,
    };

    // Stale blocks and equivocation.
    let blocks_proposed = index.order.len() as u64;
    let stale_blocks = index.order.iter().filter(|h| !canonical.contains(*h)).count() as u64;
    let stale_rate = if blocks_proposed > 0 { stale_blocks as f64 / blocks_proposed as f64 } else { 0.0 };
    let mut by_signer_height: BTreeMap<(String, u64), u64> = BTreeMap::new();
    for b in index.blocks.values() {
        if let Some(s) = &b.signer {
            *by_signer_height.entry((s.clone(), b.height)).or_insert(0) += 1;
        }
    }
    let equivocation_blocks = by_signer_height.values().filter(|&&n| n > 1).sum();

    // Block share over the canonical chain (genesis excluded).
    let mut block_share = BTreeMap::new();
    if canonical_height > 0 {
        for h in &chain[1..] {
            if let Some(name) = index.blocks.get(h).and_then(|b| b.beneficiary.clone()) {
                *block_share.entry(name).or_insert(0.0) += 1.0;
            }
        }
        for v in block_share.values_mut() {
            *v /= canonical_height as f64;
        }
    }

    let weights: Vec<f64> = match &cfg.consensus {
        Consensus::Pos { .. } => cfg.nodes.iter().flat_map(|n| n.lots.iter().map(|l| l.amount as f64)).collect(),
        Consensus::Pow { .. } => cfg.nodes.iter().map(|n| n.hash_rate).collect(),
    };
    let gini_stake = gini(&weights);

    // Fork persistence: branch length from the canonical fork point.
    let mut fork_point: HashMap<Digest256, Digest256> = HashMap::new();
    let mut branch_last: HashMap<Digest256, (u64, f64)> = HashMap::new();
    for h in &index.order {
        if canonical.contains(h) {
            continue;
        }
        let parent = index.blocks[h].parent;
        let fp = if canonical.contains(&parent) || parent == index.genesis {
            parent
        } else {
            fork_point.get(&parent).copied().unwrap_or(parent)
        };
        fork_point.insert(*h, fp);
        let len = index.height(h) - index.height(&fp);
        let entry = branch_last.entry(fp).or_insert((0, 0.0));
        entry.0 = entry.0.max(len);
        entry.1 = entry.1.max(index.blocks[h].t);
    }
    let (max_fork_persistence, fork_height) = branch_last
        .iter()
        .map(|(fp, (len, _))| (*len, index.height(fp) + 1))
        .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)))
        .map_or((0, None), |(len, h)| (len, Some(h)));
    let persist = cfg.fork_persist_blocks;
    let recent_since =
        if canonical_height >= persist { index.time(&chain[(canonical_height - persist) as usize]) } else { 0.0 };
    let live_long_fork = branch_last.values().any(|&(len, last)| len >= persist && last >= recent_since);
    let finalization =
        if !final_tips_agree || live_long_fork { Finalization::ForkedAtEnd } else { Finalization::Converged };

    // Slashing.
    let slashes: Vec<_> = trace.of_kind(EventKind::Slash).collect();
    let slash_events = slashes.len() as u64;
    let confiscated = slashes.iter().filter_map(|r| r.details.get("confiscated").and_then(Value::as_u64)).sum();
    let first_slash_time = slashes.first().map(|r| r.t);
    let convergence_after_slash_blocks = first_slash_time.and_then(|t| convergence_after(trace, &index, &cfg, t));

    let rejected_deliveries = trace.of_kind(EventKind::Reject).count() as u64;
    let orphaned_deliveries = trace.of_kind(EventKind::Orphan).count() as u64;
    let equivocations = trace.of_kind(EventKind::Equivocation).count() as u64;

    Ok(MetricsReport {
        scenario: cfg.name.clone(),
        seed: cfg.seed,
        consensus: cfg.consensus.name().to_string(),
        trace_digest: trace.digest(),
        duration,
        blocks_proposed,
        canonical_height,
        mean_block_interval,
        confirmed_transactions,
        throughput,
        theoretical_throughput,
        capacity_at_observed_interval,
        stale_blocks,
        stale_rate,
        equivocation_blocks,
        equivocations,
        rejected_deliveries,
        orphaned_deliveries,
        total_hash_attempts,
        block_share,
        gini_stake,
        max_fork_persistence,
        fork_height,
        final_tips_agree,
        finalization,
        slash_events,
        confiscated,
        first_slash_time,
        convergence_after_slash_blocks,
        mempool_final_max,
        window_intervals: window_intervals(&index, &chain, cfg.window_blocks),
    })
}

/// `(block_size_bytes / avg_tx_bytes) / block_interval_seconds`.
pub fn theoretical_throughput(block_size_bytes: f64, avg_tx_bytes: f64, block_interval_seconds: f64) -> f64 {
    assert!(block_size_bytes > 0.0 && avg_tx_bytes > 0.0 && block_interval_seconds > 0.0, "arguments must be positive");
    (block_size_bytes / avg_tx_bytes) / block_interval_seconds
}

fn window_intervals(index: &BlockIndex, chain: &[Digest256], w: u64) -> Vec<WindowStat> {
    let full = (chain.len() as u64 - 1) / w;
    (0..full)
        .map(|k| {
            let (first_height, last_height) = (k * w + 1, (k + 1) * w);
            let start = index.time(&chain[(first_height - 1) as usize]);
            let end = index.time(&chain[last_height as usize]);
            WindowStat { window: k, first_height, last_height, mean_interval: (end - start) / w as f64 }
        })
        .collect()
}

/// Blocks between the first slash and the first moment at which every node
/// holds the same tip and never again switches to a chain that abandons it.
fn convergence_after(trace: &SimulationTrace, index: &BlockIndex, cfg: &ScenarioConfig, slash_t: f64) -> Option<u64> {
    let node_ix: HashMap<&str, usize> = cfg.nodes.iter().enumerate().map(|(i, n)| (n.name.as_str(), i)).collect();
    let mut tips = vec![index.genesis; cfg.nodes.len()];
    let tip_records: Vec<(f64, usize, Digest256)> = trace
        .records
        .iter()
        .filter(|r| matches!(r.event, EventKind::Tip | EventKind::End))
        .filter_map(|r| Some((r.t, *node_ix.get(r.node.as_str())?, r.block_hash?)))
        .collect();
    let max_height_at_slash =
        index.order.iter().filter(|h| index.blocks[*h].t <= slash_t).map(|h| index.blocks[h].height).max().unwrap_or(0);

    let split = tip_records.partition_point(|r| r.0 <= slash_t);
    for &(_, n, tip) in &tip_records[..split] {
        tips[n] = tip;
    }
    let holds_from =
        |k: usize, common: &Digest256| tip_records[k..].iter().all(|(_, _, t)| index.is_ancestor_or_self(common, t));
    let agreed = |tips: &[Digest256]| tips.iter().all(|t| *t == tips[0]);
    if agreed(&tips) && holds_from(split, &tips[0]) {
        return Some(index.height(&tips[0]).saturating_sub(max_height_at_slash));
    }
    for (k, &(_, n, tip)) in tip_records.iter().enumerate().skip(split) {
        tips[n] = tip;
        if agreed(&tips) && holds_from(k + 1, &tips[0]) {
            return Some(index.height(&tips[0]).saturating_sub(max_height_at_slash));
        }
    }
    None
}

/// `(t, mempool size)` after each block proposal; the proposer's backlog.
pub fn backlog_series(trace: &SimulationTrace) -> Vec<(f64, u64)> {
    trace.of_kind(EventKind::Propose).filter_map(|r| Some((r.t, r.details.get("mempool")?.as_u64()?))).collect()
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    fn rows(&self) -> Vec<(String, String)> {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "-".into());
        let mut rows = vec![
            ("scenario".into(), self.scenario.clone()),
            ("seed".into(), self.seed.to_string()),
            ("consensus".into(), self.consensus.clone()),
            ("trace_digest".into(), self.trace_digest.clone()),
            ("duration".into(), format!("{:.3}", self.duration)),
            ("blocks_proposed".into(), self.blocks_proposed.to_string()),
            ("canonical_height".into(), self.canonical_height.to_string()),
            ("mean_block_interval".into(), format!("{:.4}", self.mean_block_interval)),
            ("confirmed_transactions".into(), self.confirmed_transactions.to_string()),
            ("throughput".into(), format!("{:.4}", self.throughput)),
            ("theoretical_throughput".into(), format!("{:.4}", self.theoretical_throughput)),
            ("capacity_at_observed_interval".into(), format!("{:.4}", self.capacity_at_observed_interval)),
            ("stale_blocks".into(), self.stale_blocks.to_string()),
            ("stale_rate".into(), format!("{:.4}", self.stale_rate)),
            ("equivocation_blocks".into(), self.equivocation_blocks.to_string()),
            ("equivocations".into(), self.equivocations.to_string()),
            ("rejected_deliveries".into(), self.rejected_deliveries.to_string()),
            ("orphaned_deliveries".into(), self.orphaned_deliveries.to_string()),
            ("total_hash_attempts".into(), self.total_hash_attempts.to_string()),
            ("gini_stake".into(), format!("{:.4}", self.gini_stake)),
            ("max_fork_persistence".into(), self.max_fork_persistence.to_string()),
            ("fork_height".into(), opt(self.fork_height.map(|h| h.to_string()))),
            ("final_tips_agree".into(), self.final_tips_agree.to_string()),
            ("finalization".into(), self.finalization.as_str().into()),
            ("slash_events".into(), self.slash_events.to_string()),
            ("confiscated".into(), self.confiscated.to_string()),
            ("first_slash_time".into(), opt(self.first_slash_time.map(|t| format!("{t:.3}")))),
            ("convergence_after_slash_blocks".into(), opt(self.convergence_after_slash_blocks.map(|b| b.to_string()))),
            ("mempool_final_max".into(), self.mempool_final_max.to_string()),
        ];
        for (name, share) in &self.block_share {
            rows.push((format!("block_share[{name}]"), format!("{share:.4}")));
        }
        rows
    }

    /// Aligned two-column text.
    pub fn to_text(&self) -> String {
        let rows = self.rows();
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<width$}  {v}");
        }
        if !self.window_intervals.is_empty() {
            let _ = writeln!(out, "\nwindow  heights      mean_interval");
            for w in &self.window_intervals {
                let _ = writeln!(
                    out,
                    "{:>6}  {:>5}-{:<5}  {:.4}",
                    w.window, w.first_height, w.last_height, w.mean_interval
                );
            }
        }
        out
    }

    /// `metric,value` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        for (k, v) in self.rows() {
            let _ = writeln!(out, "{k},{v}");
        }
        out
    }

    /// Per-window interval series for plotting.
    pub fn windows_csv(&self) -> String {
        let mut out = String::from("window,first_height,last_height,mean_interval\n");
        for w in &self.window_intervals {
            let _ = writeln!(out, "{},{},{},{}", w.window, w.first_height, w.last_height, w.mean_interval);
        }
        out
    }
}
