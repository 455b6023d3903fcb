//! Scenario files.
//!
//! A scenario is a single TOML document. Unknown keys are rejected, every
//! cross-reference (account names, node names) is checked, and all problems
//! are reported together as field-level diagnostics.
//!
//! ```toml
//! name = "pow-baseline"
//! seed = 7
//! consensus = "pow"            # or "pos"; exactly one of [pow] / [pos]
//!
//! [bounds]                     # at least one bound
//! max_height = 256
//! max_seconds = 5000.0
//!
//! [network]
//! base_delay = 0.05            # seconds
//! jitter = 0.05                # uniform extra delay in [0, jitter)
//! orphan_capacity = 256
//! links = [{ from = "m1", to = "m2", base_delay = 1.0 }]
//!
//! [ledger]
//! block_size_limit = 25000     # bytes of user transactions
//! block_reward = 50
//!
//! [injection]
//! rate = 0.0                   # transactions per simulated second
//! tx_bytes = 250
//! max_amount = 10
//!
//! [pow]
//! backend = "statistical"      # or "exact"
//! retarget_interval_blocks = 32
//! target_block_interval = 2.0
//! initial_target_fraction = 1e-4   # or initial_zero_bits / initial_target (hex)
//! clamp_factor = 4.0
//!
//! [pos]
//! min_age_days = 30.0
//! max_age_days = 90.0
//! seconds_per_day = 1.0
//! base_target_fraction = 1e-5      # or base_zero_bits / base_target (hex)
//!
//! [slashing]
//! enabled = true
//!
//! [[accounts]]
//! name = "alice"
//! balance = 1000000
//!
//! [[nodes]]
//! name = "m1"
//! role = "honest-miner"        # honest-staker, nothing-at-stake
//! hash_rate = 1000.0
//! account = "alice"            # block reward recipient (miners)
//! lots = [{ owner = "alice", amount = 100, acquired_at = 0.0, margin = 100 }]
//! ```

// Range checks are written as `!(x > 0.0)` on purpose so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hashcore::Target256;
use crate::ledger::{AccountId, LedgerRules};
use crate::pos::PosParams;
use crate::pow::PowParams;

/// Exact hashing inside a simulation is only practical for easy targets.
pub const EXACT_MIN_PROBABILITY: f64 = 1.0 / (1u64 << 24) as f64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid scenario:\n{}", .0.iter().map(|d| format!("  - {d}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Diagnostic>),
}

impl ConfigError {
    pub fn diagnostics(&self) -> Vec<String> {
        match self {
            ConfigError::Invalid(ds) => ds.iter().map(ToString::to_string).collect(),
            other => vec![other.to_string()],
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Option<String>,
    description: Option<String>,
    seed: Option<u64>,
    consensus: Option<String>,
    bounds: Option<RawBounds>,
    #[serde(default)]
    network: RawNetwork,
    ledger: Option<RawLedger>,
    #[serde(default)]
    injection: RawInjection,
    pow: Option<RawPow>,
    pos: Option<RawPos>,
    #[serde(default)]
    slashing: RawSlashing,
    #[serde(default)]
    report: RawReport,
    #[serde(default)]
    outputs: RawOutputs,
    #[serde(default)]
    accounts: Vec<RawAccount>,
    #[serde(default)]
    nodes: Vec<RawNode>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBounds {
    max_height: Option<u64>,
    max_seconds: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNetwork {
    #[serde(default = "default_delay")]
    base_delay: f64,
    #[serde(default)]
    jitter: f64,
    #[serde(default = "default_orphans")]
    orphan_capacity: usize,
    #[serde(default)]
    links: Vec<RawLink>,
}

impl Default for RawNetwork {
    fn default() -> Self {
        RawNetwork { base_delay: default_delay(), jitter: 0.0, orphan_capacity: default_orphans(), links: vec![] }
    }
}

fn default_delay() -> f64 {
    0.05
}

fn default_orphans() -> usize {
    256
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLink {
    from: String,
    to: String,
    base_delay: f64,
    #[serde(default)]
    symmetric: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLedger {
    block_size_limit: u64,
    block_reward: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInjection {
    #[serde(default)]
    rate: f64,
    #[serde(default = "default_tx_bytes")]
    tx_bytes: u32,
    #[serde(default = "default_max_amount")]
    max_amount: u64,
    senders: Option<Vec<String>>,
    stop_at: Option<f64>,
}

impl Default for RawInjection {
    fn default() -> Self {
        RawInjection {
            rate: 0.0,
            tx_bytes: default_tx_bytes(),
            max_amount: default_max_amount(),
            senders: None,
            stop_at: None,
        }
    }
}

fn default_tx_bytes() -> u32 {
    250
}

fn default_max_amount() -> u64 {
    10
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPow {
    #[serde(default)]
    backend: MiningBackend,
    retarget_interval_blocks: u64,
    target_block_interval: f64,
    initial_target: Option<String>,
    initial_zero_bits: Option<u32>,
    initial_target_fraction: Option<f64>,
    #[serde(default = "default_clamp")]
    clamp_factor: f64,
    #[serde(default)]
    strict: bool,
}

fn default_clamp() -> f64 {
    4.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPos {
    #[serde(default = "default_min_age")]
    min_age_days: f64,
    #[serde(default = "default_max_age")]
    max_age_days: f64,
    #[serde(default = "default_seconds_per_day")]
    seconds_per_day: f64,
    base_target: Option<String>,
    base_zero_bits: Option<u32>,
    base_target_fraction: Option<f64>,
}

fn default_min_age() -> f64 {
    30.0
}

fn default_max_age() -> f64 {
    90.0
}

fn default_seconds_per_day() -> f64 {
    1.0
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSlashing {
    #[serde(default)]
    enabled: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawReport {
    #[serde(default = "default_persist")]
    fork_persist_blocks: u64,
    window_blocks: Option<u64>,
}

impl Default for RawReport {
    fn default() -> Self {
        RawReport { fork_persist_blocks: default_persist(), window_blocks: None }
    }
}

fn default_persist() -> u64 {
    20
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutputs {
    #[serde(default = "default_trace")]
    trace: String,
    #[serde(default = "default_report")]
    report: String,
    #[serde(default = "default_series")]
    series: String,
}

impl Default for RawOutputs {
    fn default() -> Self {
        RawOutputs { trace: default_trace(), report: default_report(), series: default_series() }
    }
}

fn default_trace() -> String {
    "trace.ndjson".into()
}

fn default_report() -> String {
    "report.json".into()
}

fn default_series() -> String {
    "intervals.csv".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAccount {
    name: String,
    #[serde(default)]
    balance: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    name: String,
    role: NodeRole,
    hash_rate: Option<f64>,
    account: Option<String>,
    #[serde(default)]
    lots: Vec<RawLot>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLot {
    owner: String,
    amount: u64,
    #[serde(default)]
    acquired_at: f64,
    #[serde(default)]
    margin: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MiningBackend {
    #[default]
    Statistical,
    Exact,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeRole {
    HonestMiner,
    HonestStaker,
    NothingAtStake,
}

impl NodeRole {
    pub fn as_str(&self) -> &'static str {
        match self {
            NodeRole::HonestMiner => "honest-miner",
            NodeRole::HonestStaker => "honest-staker",
            NodeRole::NothingAtStake => "nothing-at-stake",
        }
    }

    pub fn is_staker(&self) -> bool {
        matches!(self, NodeRole::HonestStaker | NodeRole::NothingAtStake)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Consensus {
    Pow { params: PowParams, backend: MiningBackend },
    Pos { params: PosParams },
}

impl Consensus {
    pub fn name(&self) -> &'static str {
        match self {
            Consensus::Pow { .. } => "pow",
            Consensus::Pos { .. } => "pos",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LotSpec {
    pub owner: AccountId,
    pub amount: u64,
    pub acquired_at: f64,
    pub margin: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub name: String,
    pub role: NodeRole,
    pub hash_rate: f64,
    /// Reward recipient for mined blocks.
    pub account: Option<AccountId>,
    pub lots: Vec<LotSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccountSpec {
    pub name: String,
    pub balance: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkOverride {
    pub from: usize,
    pub to: usize,
    pub base_delay: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub base_delay: f64,
    pub jitter: f64,
    pub orphan_capacity: usize,
    pub links: Vec<LinkOverride>,
}

impl NetworkConfig {
    pub fn base_delay(&self, from: usize, to: usize) -> f64 {
        self.links.iter().rev().find(|l| l.from == from && l.to == to).map_or(self.base_delay, |l| l.base_delay)
    }

    /// Upper bound on any single message delay.
    pub fn max_delay(&self) -> f64 {
        self.links.iter().map(|l| l.base_delay).fold(self.base_delay, f64::max) + self.jitter
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InjectionConfig {
    pub rate: f64,
    pub tx_bytes: u32,
    pub max_amount: u64,
    pub senders: Vec<AccountId>,
    pub stop_at: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub max_height: Option<u64>,
    pub max_seconds: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outputs {
    pub trace: String,
    pub report: String,
    pub series: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub description: String,
    pub seed: u64,
    pub consensus: Consensus,
    pub accounts: Vec<AccountSpec>,
    pub nodes: Vec<NodeSpec>,
    pub network: NetworkConfig,
    pub ledger: LedgerRules,
    pub injection: InjectionConfig,
    pub bounds: Bounds,
    pub slashing: bool,
    pub fork_persist_blocks: u64,
    pub window_blocks: u64,
    pub outputs: Outputs,
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        build(raw)
    }

    pub fn account_name(&self, id: AccountId) -> &str {
        if id == AccountId::MINT {
            return "mint";
        }
        self.accounts.get(id.0 as usize).map_or("?", |a| a.name.as_str())
    }

    pub fn account_id(&self, name: &str) -> Option<AccountId> {
        self.accounts.iter().position(|a| a.name == name).map(|i| AccountId(i as u32))
    }

    pub fn pow(&self) -> Option<(&PowParams, MiningBackend)> {
        match &self.consensus {
            Consensus::Pow { params, backend } => Some((params, *backend)),
            Consensus::Pos { .. } => None,
        }
    }

    pub fn pos(&self) -> Option<&PosParams> {
        match &self.consensus {
            Consensus::Pos { params } => Some(params),
            Consensus::Pow { .. } => None,
        }
    }
}

struct Diags(Vec<Diagnostic>);

impl Diags {
    fn push(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.0.push(Diagnostic { field: field.into(), message: message.into() });
    }
}

fn pick_target(
    diags: &mut Diags,
    section: &str,
    hex: Option<&String>,
    zero_bits: Option<u32>,
    fraction: Option<f64>,
    keys: [&str; 3],
) -> Option<Target256> {
    let given = [hex.is_some(), zero_bits.is_some(), fraction.is_some()].iter().filter(|&&b| b).count();
    if given != 1 {
        diags.push(section, format!("exactly one of {}, {}, {} is required", keys[0], keys[1], keys[2]));
        return None;
    }
    if let Some(h) = hex {
        return match Target256::from_hex(h) {
            Ok(t) => Some(t),
            Err(e) => {
                diags.push(format!("{section}.{}", keys[0]), e.to_string());
                None
            }
        };
    }
    if let Some(z) = zero_bits {
        return match Target256::from_zero_bits(z) {
            Ok(t) => Some(t),
            Err(e) => {
                diags.push(format!("{section}.{}", keys[1]), e.to_string());
                None
            }
        };
    }
    let f = fraction.expect("one key given");
    if !(f > 0.0 && f <= 1.0) {
        diags.push(format!("{section}.{}", keys[2]), "must be in (0, 1]");
        return None;
    }
    Some(Target256::from_fraction(f))
}

fn build(raw: RawScenario) -> Result<ScenarioConfig, ConfigError> {
    let mut d = Diags(Vec::new());

    let seed = raw.seed;
    if seed.is_none() {
        d.push("seed", "seed required for reproducibility");
    }

    // accounts
    let mut account_ids = BTreeMap::new();
    for (i, a) in raw.accounts.iter().enumerate() {
        if a.name.is_empty() {
            d.push(format!("accounts[{i}].name"), "must not be empty");
        }
        if account_ids.insert(a.name.clone(), AccountId(i as u32)).is_some() {
            d.push(format!("accounts[{i}].name"), format!("duplicate account {:?}", a.name));
        }
    }
    let resolve = |d: &mut Diags, field: String, name: &str| -> Option<AccountId> {
        let id = account_ids.get(name).copied();
        if id.is_none() {
            d.push(field, format!("unknown account {name:?}"));
        }
        id
    };

    // consensus
    let consensus = match (raw.pow.as_ref(), raw.pos.as_ref()) {
        (Some(_), Some(_)) => {
            d.push("consensus", "both [pow] and [pos] sections given; exactly one consensus mode is allowed");
            None
        }
        (None, None) => {
            d.push("consensus", "one of [pow] or [pos] is required");
            None
        }
        (Some(p), None) => {
            let mut ok = true;
            if p.retarget_interval_blocks < 1 {
                d.push("pow.retarget_interval_blocks", "must be at least 1");
                ok = false;
            }
            if !(p.target_block_interval > 0.0) {
                d.push("pow.target_block_interval", "must be positive");
                ok = false;
            }
            if !(p.clamp_factor >= 1.0) || !p.clamp_factor.is_finite() {
                d.push("pow.clamp_factor", "must be a finite number >= 1");
                ok = false;
            }
            let target = pick_target(
                &mut d,
                "pow",
                p.initial_target.as_ref(),
                p.initial_zero_bits,
                p.initial_target_fraction,
                ["initial_target", "initial_zero_bits", "initial_target_fraction"],
            );
            if let Some(t) = target {
                if p.backend == MiningBackend::Exact && t.success_probability() < EXACT_MIN_PROBABILITY {
                    d.push(
                        "pow.backend",
                        "exact hashing needs an initial target of at most 24 zero bits; use the statistical backend",
                    );
                    ok = false;
                }
            }
            match (ok, target) {
                (true, Some(t)) => Some(Consensus::Pow {
                    params: PowParams {
                        retarget_interval_blocks: p.retarget_interval_blocks,
                        target_block_interval: p.target_block_interval,
                        initial_target: t.round_trip_compact(),
                        clamp_factor: p.clamp_factor,
                        strict: p.strict,
                    },
                    backend: p.backend,
                }),
                _ => None,
            }
        }
        (None, Some(p)) => {
            let mut ok = true;
            if !(p.min_age_days > 0.0 && p.min_age_days <= p.max_age_days) {
                d.push("pos.min_age_days", "require 0 < min_age_days <= max_age_days");
                ok = false;
            }
            if !(p.seconds_per_day > 0.0) {
                d.push("pos.seconds_per_day", "must be positive");
                ok = false;
            }
            let target = pick_target(
                &mut d,
                "pos",
                p.base_target.as_ref(),
                p.base_zero_bits,
                p.base_target_fraction,
                ["base_target", "base_zero_bits", "base_target_fraction"],
            );
            match (ok, target) {
                (true, Some(t)) => Some(Consensus::Pos {
                    params: PosParams {
                        min_age_days: p.min_age_days,
                        max_age_days: p.max_age_days,
                        seconds_per_day: p.seconds_per_day,
                        base_target: t,
                    },
                }),
                _ => None,
            }
        }
    };
    if let (Some(mode), Some(c)) = (raw.consensus.as_deref(), consensus.as_ref()) {
        if mode != c.name() {
            d.push("consensus", format!("consensus = {mode:?} but the [{}] section is given", c.name()));
        }
    } else if let Some(mode) = raw.consensus.as_deref() {
        if mode != "pow" && mode != "pos" {
            d.push("consensus", format!("unknown consensus {mode:?}; expected \"pow\" or \"pos\""));
        }
    }
    let is_pow = matches!(consensus, Some(Consensus::Pow { .. })) || (consensus.is_none() && raw.pow.is_some());

    // nodes
    if raw.nodes.is_empty() {
        d.push("nodes", "at least one node is required");
    }
    let mut node_names = BTreeMap::new();
    let mut lot_owners = BTreeSet::new();
    let mut nodes = Vec::new();
    for (i, n) in raw.nodes.iter().enumerate() {
        let field = |k: &str| format!("nodes[{i}].{k}");
        if node_names.insert(n.name.clone(), i).is_some() {
            d.push(field("name"), format!("duplicate node {:?}", n.name));
        }
        let account = n.account.as_ref().and_then(|a| resolve(&mut d, field("account"), a));
        let hash_rate = n.hash_rate.unwrap_or(0.0);
        match n.role {
            NodeRole::HonestMiner => {
                if !is_pow {
                    d.push(field("role"), "honest-miner requires pow consensus");
                }
                if !(hash_rate > 0.0) {
                    d.push(field("hash_rate"), "miners need a positive hash_rate");
                }
                if n.account.is_none() {
                    d.push(field("account"), "miners need a reward account");
                }
            }
            NodeRole::HonestStaker | NodeRole::NothingAtStake => {
                if is_pow {
                    d.push(field("role"), format!("{} requires pos consensus", n.role.as_str()));
                }
                if n.lots.is_empty() {
                    d.push(field("lots"), "stakers need at least one coin lot");
                }
            }
        }
        let mut lots = Vec::new();
        for (j, lot) in n.lots.iter().enumerate() {
            let lf = |k: &str| format!("nodes[{i}].lots[{j}].{k}");
            if lot.amount == 0 {
                d.push(lf("amount"), "must be positive");
            }
            if !(lot.acquired_at >= 0.0) {
                d.push(lf("acquired_at"), "must be >= 0");
            }
            if let Some(owner) = resolve(&mut d, lf("owner"), &lot.owner) {
                if !lot_owners.insert(owner) {
                    d.push(lf("owner"), format!("account {:?} already owns a lot", lot.owner));
                }
                lots.push(LotSpec { owner, amount: lot.amount, acquired_at: lot.acquired_at, margin: lot.margin });
            }
        }
        nodes.push(NodeSpec { name: n.name.clone(), role: n.role, hash_rate, account, lots });
    }

    // network
    let net = &raw.network;
    if !(net.base_delay >= 0.0) {
        d.push("network.base_delay", "must be >= 0");
    }
    if !(net.jitter >= 0.0) {
        d.push("network.jitter", "must be >= 0");
    }
    if net.orphan_capacity == 0 {
        d.push("network.orphan_capacity", "must be positive");
    }
    let mut links = Vec::new();
    for (i, l) in net.links.iter().enumerate() {
        let from = node_names.get(&l.from).copied();
        let to = node_names.get(&l.to).copied();
        if from.is_none() {
            d.push(format!("network.links[{i}].from"), format!("unknown node {:?}", l.from));
        }
        if to.is_none() {
            d.push(format!("network.links[{i}].to"), format!("unknown node {:?}", l.to));
        }
        if !(l.base_delay >= 0.0) {
            d.push(format!("network.links[{i}].base_delay"), "must be >= 0");
        }
        if let (Some(from), Some(to)) = (from, to) {
            links.push(LinkOverride { from, to, base_delay: l.base_delay });
            if l.symmetric {
                links.push(LinkOverride { from: to, to: from, base_delay: l.base_delay });
            }
        }
    }

    // ledger
    let ledger = match raw.ledger {
        Some(l) => {
            if l.block_size_limit == 0 {
                d.push("ledger.block_size_limit", "must be positive");
            }
            LedgerRules { block_size_limit: l.block_size_limit, block_reward: l.block_reward }
        }
        None => {
            d.push("ledger", "[ledger] section is required");
            LedgerRules { block_size_limit: 1, block_reward: 0 }
        }
    };

    // injection
    let inj = &raw.injection;
    if !(inj.rate >= 0.0) || !inj.rate.is_finite() {
        d.push("injection.rate", "must be a finite number >= 0");
    }
    if inj.tx_bytes == 0 {
        d.push("injection.tx_bytes", "must be positive");
    }
    if inj.max_amount == 0 {
        d.push("injection.max_amount", "must be positive");
    }
    let senders: Vec<AccountId> = match &inj.senders {
        Some(names) => names
            .iter()
            .enumerate()
            .filter_map(|(i, s)| resolve(&mut d, format!("injection.senders[{i}]"), s))
            .collect(),
        None => {
            (0..raw.accounts.len() as u32).map(AccountId).filter(|a| raw.accounts[a.0 as usize].balance > 0).collect()
        }
    };
    if inj.rate > 0.0 {
        if senders.is_empty() {
            d.push("injection.senders", "transaction injection needs at least one funded sender");
        }
        if raw.accounts.len() < 2 {
            d.push("accounts", "transaction injection needs at least two accounts");
        }
    }

    // bounds
    let bounds = match raw.bounds {
        Some(b) if b.max_height.is_some() || b.max_seconds.is_some() => {
            if b.max_height == Some(0) {
                d.push("bounds.max_height", "must be positive");
            }
            if let Some(s) = b.max_seconds {
                if !(s > 0.0) || !s.is_finite() {
                    d.push("bounds.max_seconds", "must be a finite positive number");
                }
            }
            Bounds { max_height: b.max_height, max_seconds: b.max_seconds }
        }
        _ => {
            d.push("bounds", "at least one of bounds.max_height or bounds.max_seconds is required");
            Bounds { max_height: None, max_seconds: None }
        }
    };

    if raw.report.fork_persist_blocks == 0 {
        d.push("report.fork_persist_blocks", "must be positive");
    }
    if raw.report.window_blocks == Some(0) {
        d.push("report.window_blocks", "must be positive");
    }

    if !d.0.is_empty() {
        return Err(ConfigError::Invalid(d.0));
    }
    let consensus = consensus.expect("validated");
    let window_blocks = raw.report.window_blocks.unwrap_or(match &consensus {
        Consensus::Pow { params, .. } => params.retarget_interval_blocks,
        Consensus::Pos { .. } => 32,
    });
    Ok(ScenarioConfig {
        name: raw.name.unwrap_or_else(|| "unnamed".into()),
        description: raw.description.unwrap_or_default(),
        seed: seed.expect("validated"),
        consensus,
        accounts: raw.accounts.into_iter().map(|a| AccountSpec { name: a.name, balance: a.balance }).collect(),
        nodes,
        network: NetworkConfig {
            base_delay: net.base_delay,
            jitter: net.jitter,
            orphan_capacity: net.orphan_capacity,
            links,
        },
        ledger,
        injection: InjectionConfig {
            rate: inj.rate,
            tx_bytes: inj.tx_bytes,
            max_amount: inj.max_amount,
            senders,
            stop_at: inj.stop_at,
        },
        bounds,
        slashing: raw.slashing.enabled,
        fork_persist_blocks: raw.report.fork_persist_blocks,
        window_blocks,
        outputs: Outputs { trace: raw.outputs.trace, report: raw.outputs.report, series: raw.outputs.series },
    })
}
