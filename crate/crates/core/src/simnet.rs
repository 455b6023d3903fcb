//! Deterministic discrete-event network simulation.
//!
//! Every node keeps its own block tree, orphan buffer and mempool. Blocks and
//! transactions are broadcast directly to every other node with a per-link
//! delay plus seeded jitter. Events execute in `(fire_at, seq)` order on a
//! single thread, so a seed and a config fully determine the trace.
//!
//! Randomness comes from three independent ChaCha8 streams derived from the
//! seed (network delays, mining, transaction generation) so that changing,
//! say, the injection rate does not perturb mining times.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashSet};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::adversary::{slash, stake_on_tips, EquivocationDetector, MarginAccount, MarginStatus, SignedClaim};
use crate::config::{Consensus, LotSpec, MiningBackend, NodeRole, ScenarioConfig};
use crate::hashcore::{merkle_root, Digest256, Target256};
use crate::ledger::{
    genesis_block, AccountId, Block, BlockHeader, BlockTree, LedgerState, OrphanPool, RejectReason, Transaction,
};
use crate::pos::{coin_days, kernel_check, trade_data, CoinLot, PosParams};
use crate::pow::{check_pow, mine, retarget, statistical_mine, MineOutcome, PowParams};
use crate::trace::{EventKind, SimulationTrace, TraceRecord, GLOBAL};

/// Without a time bound, production stops after this many simulated seconds
/// without a new block.
pub const STALL_SECONDS: f64 = 1_000_000.0;

/// Cap on the nonces one exact-mining session will try.
const EXACT_MAX_ATTEMPTS: u64 = 1 << 28;

const STREAM_NETWORK: u64 = 1;
const STREAM_MINING: u64 = 2;
const STREAM_TX: u64 = 3;

#[derive(Clone, Debug)]
pub enum SimEventKind {
    DeliverTx { node: usize, tx: Arc<Transaction> },
    DeliverBlock { node: usize, block: Arc<Block> },
    MiningSuccess { node: usize, session: u64 },
    KernelTick { node: usize },
    TxInjection,
    ScenarioEnd,
}

#[derive(Clone, Debug)]
pub struct SimEvent {
    pub fire_at: f64,
    pub seq: u64,
    pub kind: SimEventKind,
}

impl PartialEq for SimEvent {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for SimEvent {}

impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SimEvent {
    /// Reversed so that `BinaryHeap` pops the earliest `(fire_at, seq)`.
    fn cmp(&self, other: &Self) -> Ordering {
        other.fire_at.total_cmp(&self.fire_at).then(other.seq.cmp(&self.seq))
    }
}

/// Pending transactions ordered by creation time.
#[derive(Clone, Debug, Default)]
struct Mempool {
    queue: BTreeMap<(u64, Digest256), Arc<Transaction>>,
    ids: HashSet<Digest256>,
}

impl Mempool {
    fn key(tx: &Transaction) -> (u64, Digest256) {
        (tx.created_at.to_bits(), tx.id)
    }

    fn insert(&mut self, tx: Arc<Transaction>) {
        if self.ids.insert(tx.id) {
            self.queue.insert(Self::key(&tx), tx);
        }
    }

    fn remove(&mut self, tx: &Transaction) {
        if self.ids.remove(&tx.id) {
            self.queue.remove(&Self::key(tx));
        }
    }

    fn contains(&self, id: &Digest256) -> bool {
        self.ids.contains(id)
    }

    fn len(&self) -> usize {
        self.ids.len()
    }
}

struct Node {
    name: String,
    role: NodeRole,
    hash_rate: f64,
    account: Option<AccountId>,
    lots: Vec<CoinLot>,
    tree: BlockTree,
    orphans: OrphanPool,
    mempool: Mempool,
    arrivals: u64,
    session: u64,
    session_start: f64,
    /// Exact backend: block found by the current session and its cost.
    pending: Option<(Block, u64)>,
    hash_attempts: u64,
}

impl Node {
    fn next_arrival(&mut self) -> u64 {
        self.arrivals += 1;
        self.arrivals
    }
}

struct Sim<'a> {
    cfg: &'a ScenarioConfig,
    nodes: Vec<Node>,
    queue: BinaryHeap<SimEvent>,
    seq: u64,
    now: f64,
    net_rng: ChaCha8Rng,
    mine_rng: ChaCha8Rng,
    tx_rng: ChaCha8Rng,
    trace: SimulationTrace,
    lots: BTreeMap<AccountId, LotSpec>,
    detector: EquivocationDetector,
    margins: BTreeMap<AccountId, MarginAccount>,
    slashed: BTreeSet<AccountId>,
    producing: bool,
    production_end: Option<f64>,
    stalled: bool,
    last_block_at: f64,
    tx_seq: u64,
    blocks_proposed: u64,
    kernel_evaluations: u64,
    events: u64,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Runs a validated scenario to completion and returns its trace.
pub fn run(config: &ScenarioConfig) -> SimulationTrace {
    let mut sim = Sim::new(config);
    sim.start();
    sim.event_loop();
    sim.finish();
    sim.trace
}

impl<'a> Sim<'a> {
    fn new(cfg: &'a ScenarioConfig) -> Self {
        let allocations: Vec<(AccountId, u64)> =
            cfg.accounts.iter().enumerate().map(|(i, a)| (AccountId(i as u32), a.balance)).collect();
        let bits = match &cfg.consensus {
            Consensus::Pow { params, .. } => params.initial_target.to_compact(),
            Consensus::Pos { params } => params.base_target.to_compact(),
        };
        let (genesis, state) = genesis_block(&allocations, bits);
        let mut lots = BTreeMap::new();
        let mut margins = BTreeMap::new();
        let nodes = cfg
            .nodes
            .iter()
            .map(|spec| {
                for lot in &spec.lots {
                    lots.insert(lot.owner, lot.clone());
                    margins.insert(lot.owner, MarginAccount::new(lot.owner, lot.margin));
                }
                Node {
                    name: spec.name.clone(),
                    role: spec.role,
                    hash_rate: spec.hash_rate,
                    account: spec.account,
                    lots: spec.lots.iter().map(|l| CoinLot::new(l.owner, l.amount, l.acquired_at)).collect(),
                    tree: BlockTree::new(genesis.clone(), state.clone()),
                    orphans: OrphanPool::new(cfg.network.orphan_capacity),
                    mempool: Mempool::default(),
                    arrivals: 0,
                    session: 0,
                    session_start: 0.0,
                    pending: None,
                    hash_attempts: 0,
                }
            })
            .collect();
        Sim {
            cfg,
            nodes,
            queue: BinaryHeap::new(),
            seq: 0,
            now: 0.0,
            net_rng: stream(cfg.seed, STREAM_NETWORK),
            mine_rng: stream(cfg.seed, STREAM_MINING),
            tx_rng: stream(cfg.seed, STREAM_TX),
            trace: SimulationTrace::default(),
            lots,
            detector: EquivocationDetector::new(),
            margins,
            slashed: BTreeSet::new(),
            producing: true,
            production_end: None,
            stalled: false,
            last_block_at: 0.0,
            tx_seq: 0,
            blocks_proposed: 0,
            kernel_evaluations: 0,
            events: 0,
        }
    }

    fn schedule(&mut self, fire_at: f64, kind: SimEventKind) {
        self.seq += 1;
        self.queue.push(SimEvent { fire_at, seq: self.seq, kind });
    }

    fn record(&mut self, node: &str, event: EventKind, block: Option<(Digest256, u64)>, details: Value) {
        self.trace.push(TraceRecord {
            t: self.now,
            node: node.to_string(),
            event,
            block_hash: block.map(|b| b.0),
            height: block.map(|b| b.1),
            details,
        });
    }

    fn delay(&mut self, from: Option<usize>, to: usize) -> f64 {
        let net = &self.cfg.network;
        let base = match from {
            Some(f) => net.base_delay(f, to),
            None => net.base_delay,
        };
        let jitter = if net.jitter > 0.0 { net.jitter * self.net_rng.random::<f64>() } else { 0.0 };
        base + jitter
    }

    fn account_name(&self, id: AccountId) -> String {
        self.cfg.account_name(id).to_string()
    }

    fn start(&mut self) {
        let genesis = self.nodes[0].tree.genesis();
        let config = serde_json::to_value(self.cfg).expect("config serializes");
        self.record(GLOBAL, EventKind::Scenario, Some((genesis, 0)), json!({ "config": config }));

        for i in 0..self.nodes.len() {
            match self.nodes[i].role {
                NodeRole::HonestMiner => self.start_session(i),
                NodeRole::HonestStaker | NodeRole::NothingAtStake => {
                    self.schedule(1.0, SimEventKind::KernelTick { node: i })
                }
            }
        }
        if self.cfg.injection.rate > 0.0 {
            let first = self.next_injection_gap();
            self.schedule(first, SimEventKind::TxInjection);
        }
        if let Some(end) = self.cfg.bounds.max_seconds {
            self.schedule(end, SimEventKind::ScenarioEnd);
        }
    }

    fn event_loop(&mut self) {
        while let Some(ev) = self.queue.pop() {
            self.now = ev.fire_at;
            self.events += 1;
            match ev.kind {
                SimEventKind::ScenarioEnd => self.stop_production(),
                SimEventKind::TxInjection => self.inject(),
                SimEventKind::DeliverTx { node, tx } => self.receive_tx(node, tx),
                SimEventKind::DeliverBlock { node, block } => self.receive_block(node, block),
                SimEventKind::MiningSuccess { node, session } => self.mining_success(node, session),
                SimEventKind::KernelTick { node } => self.kernel_tick(node),
            }
        }
    }

    fn stop_production(&mut self) {
        if !self.producing {
            return;
        }
        self.producing = false;
        self.production_end = Some(self.now);
        let exact = matches!(self.cfg.pow(), Some((_, MiningBackend::Exact)));
        let now = self.now;
        for node in self.nodes.iter_mut().filter(|n| n.role == NodeRole::HonestMiner) {
            if exact {
                node.hash_attempts += interrupted_attempts(node, now);
                node.pending = None;
            } else {
                node.hash_attempts = (node.hash_rate * now).round() as u64;
            }
        }
    }

    fn finish(&mut self) {
        if self.producing {
            self.stop_production();
        }
        for i in 0..self.nodes.len() {
            let node = &self.nodes[i];
            let best = node.tree.best_entry();
            let details = json!({
                "hash_attempts": node.hash_attempts,
                "mempool": node.mempool.len(),
                "blocks_known": node.tree.len(),
                "tips": node.tree.tip_count(),
                "orphans": node.orphans.len(),
            });
            let (name, tip) = (node.name.clone(), (node.tree.best(), best.height));
            self.record(&name, EventKind::End, Some(tip), details);
        }
        let details = json!({
            "production_end": self.production_end.unwrap_or(self.now),
            "stalled": self.stalled,
            "blocks_proposed": self.blocks_proposed,
            "kernel_evaluations": self.kernel_evaluations,
            "transactions_injected": self.tx_seq,
            "events": self.events,
        });
        self.record(GLOBAL, EventKind::ScenarioEnd, None, details);
    }

    // ---- transactions -------------------------------------------------

    fn next_injection_gap(&mut self) -> f64 {
        let u: f64 = self.tx_rng.random();
        -(1.0 - u).ln() / self.cfg.injection.rate
    }

    fn inject(&mut self) {
        let inj = &self.cfg.injection;
        if !self.producing || inj.stop_at.is_some_and(|s| self.now >= s) {
            return;
        }
        let n_accounts = self.cfg.accounts.len() as u32;
        let sender = inj.senders[self.tx_rng.random_range(0..inj.senders.len())];
        // Uniform over the other accounts.
        let mut recipient = self.tx_rng.random_range(0..n_accounts - 1);
        if recipient >= sender.0 {
            recipient += 1;
        }
        let amount = self.tx_rng.random_range(1..=inj.max_amount);
        self.tx_seq += 1;
        let tx =
            Arc::new(Transaction::transfer(self.tx_seq, sender, AccountId(recipient), amount, inj.tx_bytes, self.now));
        for node in 0..self.nodes.len() {
            let at = self.now + self.delay(None, node);
            self.schedule(at, SimEventKind::DeliverTx { node, tx: Arc::clone(&tx) });
        }
        let next = self.now + self.next_injection_gap();
        self.schedule(next, SimEventKind::TxInjection);
    }

    fn receive_tx(&mut self, i: usize, tx: Arc<Transaction>) {
        let node = &mut self.nodes[i];
        let best = node.tree.best();
        if !node.mempool.contains(&tx.id) && !node.tree.is_included(&tx.id, &best) {
            node.mempool.insert(tx);
        }
    }

    // ---- block construction ------------------------------------------

    /// Coinbase plus mempool transactions (oldest first) that fit the size
    /// limit, are not yet on the `parent` chain, and are funded there.
    fn assemble(&self, i: usize, parent: &Digest256, beneficiary: AccountId) -> Vec<Transaction> {
        let node = &self.nodes[i];
        let state = &node.tree.get(parent).expect("parent in tree").state;
        let on_canonical = *parent == node.tree.best();
        let limit = self.cfg.ledger.block_size_limit;
        let mut txs = vec![Transaction::coinbase(beneficiary, parent, self.cfg.ledger.block_reward, self.now)];
        let mut spent: BTreeMap<AccountId, u64> = BTreeMap::new();
        let mut used = 0u64;
        for tx in node.mempool.queue.values() {
            if used + u64::from(tx.size_bytes) > limit {
                break;
            }
            if !on_canonical && node.tree.is_included(&tx.id, parent) {
                continue;
            }
            let out = spent.entry(tx.sender).or_insert(0);
            if state.balance(tx.sender) < *out + tx.amount {
                continue;
            }
            *out += tx.amount;
            used += u64::from(tx.size_bytes);
            txs.push((**tx).clone());
        }
        // Credits are ignored above, so a sender never relies on funds
        // received earlier in the same block.
        txs
    }

    fn make_block(&self, txs: Vec<Transaction>, header: BlockHeader, signer: Option<(AccountId, u64)>) -> Block {
        let ids: Vec<Digest256> = txs.iter().map(|t| t.id).collect();
        let header = BlockHeader { merkle_root: merkle_root(&ids).expect("coinbase present"), ..header };
        Block { header, transactions: txs, signer: signer.map(|s| s.0), coin_days_claimed: signer.map(|s| s.1) }
    }

    // ---- proof of work -------------------------------------------------

    fn pow_params(&self) -> (&'a PowParams, MiningBackend) {
        let (p, b) = self.cfg.pow().expect("pow scenario");
        (p, b)
    }

    fn start_session(&mut self, i: usize) {
        if !self.producing {
            return;
        }
        let now = self.now;
        let (params, backend) = self.pow_params();
        let node = &mut self.nodes[i];
        if backend == MiningBackend::Exact && node.session > 0 {
            node.hash_attempts += interrupted_attempts(node, now);
        }
        node.session += 1;
        node.session_start = now;
        node.pending = None;
        let session = node.session;
        let parent = node.tree.best();
        let target = required_target(&node.tree, &parent, params);
        let rate = node.hash_rate;
        let delay = match backend {
            MiningBackend::Statistical => statistical_mine(rate, &target, &mut self.mine_rng),
            MiningBackend::Exact => {
                let beneficiary = node.account.expect("miner account");
                let txs = self.assemble(i, &parent, beneficiary);
                let header = BlockHeader {
                    version: 1,
                    prev_hash: parent,
                    merkle_root: Digest256::ZERO,
                    timestamp: now.floor() as u32,
                    bits: target.to_compact(),
                    nonce: 0,
                };
                let template = self.make_block(txs, header, None);
                match mine(&template.header, &target, 0, EXACT_MAX_ATTEMPTS, params.strict) {
                    MineOutcome::Found { header, attempts } => {
                        self.nodes[i].pending = Some((Block { header, ..template }, attempts));
                        attempts as f64 / rate
                    }
                    MineOutcome::Exhausted { .. } => return,
                }
            }
        };
        self.schedule(now + delay, SimEventKind::MiningSuccess { node: i, session });
    }

    fn mining_success(&mut self, i: usize, session: u64) {
        if !self.producing || self.nodes[i].session != session {
            return;
        }
        let (params, backend) = self.pow_params();
        let (block, attempts) = match backend {
            MiningBackend::Exact => {
                let (block, attempts) = self.nodes[i].pending.take().expect("exact session has a block");
                self.nodes[i].hash_attempts += attempts;
                (block, Some(attempts))
            }
            MiningBackend::Statistical => {
                let node = &self.nodes[i];
                let parent = node.tree.best();
                let target = required_target(&node.tree, &parent, params);
                let txs = self.assemble(i, &parent, node.account.expect("miner account"));
                let header = BlockHeader {
                    version: 1,
                    prev_hash: parent,
                    merkle_root: Digest256::ZERO,
                    timestamp: self.now.floor() as u32,
                    bits: target.to_compact(),
                    nonce: self.mine_rng.random(),
                };
                (self.make_block(txs, header, None), None)
            }
        };
        self.propose(i, block, attempts);
    }

    // ---- proof of stake ------------------------------------------------

    fn pos_params(&self) -> &'a PosParams {
        self.cfg.pos().expect("pos scenario")
    }

    fn kernel_tick(&mut self, i: usize) {
        if !self.producing {
            return;
        }
        if self.cfg.bounds.max_seconds.is_none() && self.now - self.last_block_at > STALL_SECONDS {
            self.stalled = true;
            self.stop_production();
            return;
        }
        let params = self.pos_params();
        let now = self.now as u64;
        let node = &self.nodes[i];
        let tips: Vec<Digest256> = match node.role {
            NodeRole::NothingAtStake => node.tree.tips().copied().collect(),
            _ => vec![node.tree.best()],
        };
        let slashed = &self.slashed;
        let eligible = node.lots.iter().filter(|l| !slashed.contains(&l.owner)).count();
        let mut claims = stake_on_tips(
            &node.lots,
            tips.iter().map(|t| (*t, &node.tree.get(t).expect("tip in tree").state)),
            now,
            params,
            |owner| !slashed.contains(&owner),
        );
        self.kernel_evaluations += (eligible * tips.len()) as u64;
        if node.role == NodeRole::HonestStaker {
            claims.truncate(1);
        }
        for (tip, claim) in claims {
            let txs = self.assemble(i, &tip, claim.owner);
            let header = BlockHeader {
                version: 1,
                prev_hash: tip,
                merkle_root: Digest256::ZERO,
                timestamp: now as u32,
                bits: params.base_target.to_compact(),
                nonce: 0,
            };
            let block = self.make_block(txs, header, Some((claim.owner, claim.coin_days)));
            self.propose(i, block, None);
        }
        self.schedule(self.now + 1.0, SimEventKind::KernelTick { node: i });
    }

    // ---- block handling ------------------------------------------------

    /// Consensus-rule check followed by ledger validation against the parent.
    fn validate(&self, i: usize, block: &Block) -> Result<LedgerState, RejectReason> {
        let tree = &self.nodes[i].tree;
        let parent = tree.get(&block.header.prev_hash).ok_or(RejectReason::UnknownParent)?;
        match &self.cfg.consensus {
            Consensus::Pow { params, backend } => {
                let target = required_target(tree, &block.header.prev_hash, params);
                if block.header.bits != target.to_compact() {
                    return Err(RejectReason::BadDifficulty);
                }
                // Statistical blocks carry no real proof; their delay was
                // already drawn from the correct distribution.
                if *backend == MiningBackend::Exact && !check_pow(&block.header, &target, params.strict) {
                    return Err(RejectReason::BadProof);
                }
            }
            Consensus::Pos { params } => {
                if block.header.bits != params.base_target.to_compact() {
                    return Err(RejectReason::BadDifficulty);
                }
                let owner = block.signer.ok_or(RejectReason::BadProof)?;
                let spec = self.lots.get(&owner).ok_or(RejectReason::BadProof)?;
                let lot = CoinLot {
                    owner,
                    amount: spec.amount,
                    acquired_at: spec.acquired_at,
                    last_signed_at: parent.state.last_signed.get(&owner).map(|&t| f64::from(t)),
                };
                let ts = u64::from(block.header.timestamp);
                let weight = coin_days(&lot, ts as f64, params);
                if block.coin_days_claimed != Some(weight)
                    || !kernel_check(&trade_data(&block.header.prev_hash, owner), ts, params, weight)
                {
                    return Err(RejectReason::BadProof);
                }
                if block.beneficiary() != Some(owner) {
                    return Err(RejectReason::BadCoinbase);
                }
            }
        }
        tree.validate(block, &self.cfg.ledger)
    }

    fn propose(&mut self, i: usize, block: Block, attempts: Option<u64>) {
        let state = match self.validate(i, &block) {
            Ok(s) => s,
            Err(reason) => panic!("node {} built an invalid block: {reason}", self.nodes[i].name),
        };
        let block = Arc::new(block);
        let hash = block.hash();
        let node = &mut self.nodes[i];
        let old_best = node.tree.best();
        let height = node.tree.height(&block.header.prev_hash).expect("parent") + 1;
        let arrival = node.next_arrival();
        node.tree.insert(Arc::clone(&block), state, arrival);
        self.blocks_proposed += 1;
        self.last_block_at = self.now;

        let signer = block.signer.map(|s| self.account_name(s));
        let beneficiary = block.beneficiary().map(|b| self.account_name(b));
        let details = json!({
            "parent": block.header.prev_hash,
            "beneficiary": beneficiary,
            "signer": signer,
            "coin_days": block.coin_days_claimed,
            "attempts": attempts,
            "txs": block.user_tx_count(),
            "bytes": block.payload_bytes(),
            "timestamp": block.header.timestamp,
            "bits": format!("{:08x}", block.header.bits),
            "mempool": self.nodes[i].mempool.len(),
        });
        let name = self.nodes[i].name.clone();
        self.record(&name, EventKind::Propose, Some((hash, height)), details);

        for peer in 0..self.nodes.len() {
            if peer != i {
                let at = self.now + self.delay(Some(i), peer);
                self.schedule(at, SimEventKind::DeliverBlock { node: peer, block: Arc::clone(&block) });
            }
        }
        if let Some(owner) = block.signer {
            self.observe_claim(SignedClaim { owner, height, block_hash: hash });
        }
        self.update_canonical(i, old_best);
        if self.cfg.bounds.max_height.is_some_and(|h| height >= h) {
            self.stop_production();
        }
    }

    /// Global equivocation monitor, fed at proposal time.
    fn observe_claim(&mut self, claim: SignedClaim) {
        let Some(proof) = self.detector.observe(claim) else { return };
        let offender = self.account_name(proof.offender);
        self.record(
            GLOBAL,
            EventKind::Equivocation,
            Some((proof.claim_b.block_hash, proof.height)),
            json!({
                "offender": offender,
                "claim_a": proof.claim_a.block_hash,
                "claim_b": proof.claim_b.block_hash,
            }),
        );
        if !self.cfg.slashing {
            return;
        }
        let Some(margin) = self.margins.get(&proof.offender).copied() else { return };
        let outcome = slash(&margin, &proof).expect("detector emits valid proofs");
        if margin.status == MarginStatus::Active {
            self.margins.insert(proof.offender, outcome.margin);
            self.slashed.insert(proof.offender);
            self.record(
                GLOBAL,
                EventKind::Slash,
                Some((proof.claim_b.block_hash, proof.height)),
                json!({ "offender": offender, "confiscated": outcome.confiscated }),
            );
        }
    }

    fn receive_block(&mut self, i: usize, block: Arc<Block>) {
        let hash = block.hash();
        let node = &mut self.nodes[i];
        if node.tree.contains(&hash) {
            return;
        }
        let old_best = node.tree.best();
        if !node.tree.contains(&block.header.prev_hash) {
            let arrival = node.next_arrival();
            if node.orphans.add(block, arrival) {
                let name = node.name.clone();
                self.record(&name, EventKind::Orphan, Some((hash, 0)), json!({}));
            }
            return;
        }
        let mut ready = vec![block];
        while let Some(block) = ready.pop() {
            let hash = block.hash();
            if self.nodes[i].tree.contains(&hash) {
                continue;
            }
            let name = self.nodes[i].name.clone();
            match self.validate(i, &block) {
                Ok(state) => {
                    let node = &mut self.nodes[i];
                    let height = node.tree.height(&block.header.prev_hash).expect("parent") + 1;
                    let arrival = node.next_arrival();
                    node.tree.insert(block, state, arrival);
                    let children = node.orphans.take_children(&hash);
                    self.record(&name, EventKind::Accept, Some((hash, height)), json!({}));
                    // Reverse so that the earliest-buffered child is handled first.
                    ready.extend(children.into_iter().rev().map(|(_, b)| b));
                }
                Err(reason) => {
                    let height = self.nodes[i].tree.height(&block.header.prev_hash).map(|h| h + 1);
                    self.trace.push(TraceRecord {
                        t: self.now,
                        node: name,
                        event: EventKind::Reject,
                        block_hash: Some(hash),
                        height,
                        details: json!({ "reason": reason.as_str() }),
                    });
                }
            }
        }
        self.update_canonical(i, old_best);
    }

    /// Moves the mempool across a reorg, records the new tip, and restarts
    /// mining on it.
    fn update_canonical(&mut self, i: usize, old_best: Digest256) {
        let node = &mut self.nodes[i];
        let new_best = node.tree.best();
        if new_best == old_best {
            return;
        }
        let (removed, added) = node.tree.reorg_path(&old_best, &new_best);
        for hash in &removed {
            let block = Arc::clone(&node.tree.get(hash).expect("known").block);
            for tx in block.transactions.iter().skip(1) {
                if !node.tree.is_included(&tx.id, &new_best) {
                    node.mempool.insert(Arc::new(tx.clone()));
                }
            }
        }
        for hash in &added {
            let block = Arc::clone(&node.tree.get(hash).expect("known").block);
            for tx in block.transactions.iter().skip(1) {
                node.mempool.remove(tx);
            }
        }
        let height = node.tree.height(&new_best).expect("known");
        let name = node.name.clone();
        let role = node.role;
        self.record(&name, EventKind::Tip, Some((new_best, height)), json!({ "reorg_depth": removed.len() }));
        if role == NodeRole::HonestMiner {
            self.start_session(i);
        }
    }
}

/// Attempts spent by an exact-mining session that is abandoned at `now`.
fn interrupted_attempts(node: &Node, now: f64) -> u64 {
    match &node.pending {
        Some((_, needed)) => {
            (((now - node.session_start) * node.hash_rate).floor() as u64).min(needed.saturating_sub(1))
        }
        None => 0,
    }
}

/// Target a child of `parent` must meet: the parent's own target, or a
/// retargeted one when the child opens a new window.
pub fn required_target(tree: &BlockTree, parent: &Digest256, params: &PowParams) -> Target256 {
    let entry = tree.get(parent).expect("parent in tree");
    let current = Target256::from_compact(entry.block.header.bits).unwrap_or(params.initial_target);
    let height = entry.height + 1;
    if !params.is_retarget_height(height) {
        return current;
    }
    let first =
        tree.ancestor_at(parent, height - 1 - params.retarget_interval_blocks).expect("window start is an ancestor");
    let first_ts = tree.get(&first).expect("known").block.header.timestamp;
    let elapsed = f64::from(entry.block.header.timestamp.saturating_sub(first_ts));
    retarget(elapsed, params, &current).round_trip_compact()
}
