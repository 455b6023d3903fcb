//! Transactions, blocks, the 80-byte header codec, block validation against an
//! account-balance ledger, and the fork-aware [`BlockTree`].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hashcore::{double_sha256, merkle_root, Digest256};

pub const HEADER_LEN: usize = 80;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AccountId(pub u32);

impl AccountId {
    /// Sender of coinbase and genesis allocation transactions.
    pub const MINT: AccountId = AccountId(u32::MAX);

    pub fn to_le_bytes(self) -> [u8; 4] {
        self.0.to_le_bytes()
    }
}

impl fmt::Display for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == AccountId::MINT {
            f.write_str("mint")
        } else {
            write!(f, "acct{}", self.0)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transaction {
    pub id: Digest256,
    pub sender: AccountId,
    pub recipient: AccountId,
    pub amount: u64,
    pub size_bytes: u32,
    pub created_at: f64,
}

impl Transaction {
    /// A user transfer. `seq` must be unique within a scenario; the id is
    /// derived from it.
    pub fn transfer(
        seq: u64,
        sender: AccountId,
        recipient: AccountId,
        amount: u64,
        size_bytes: u32,
        created_at: f64,
    ) -> Self {
        let mut buf = Vec::with_capacity(26);
        buf.extend_from_slice(b"tx");
        buf.extend_from_slice(&seq.to_le_bytes());
        buf.extend_from_slice(&sender.to_le_bytes());
        buf.extend_from_slice(&recipient.to_le_bytes());
        buf.extend_from_slice(&amount.to_le_bytes());
        Transaction { id: double_sha256(&buf), sender, recipient, amount, size_bytes: size_bytes.max(1), created_at }
    }

    /// Block reward paid to `beneficiary`. Bound to the parent so that
    /// templates on different forks never share a coinbase id.
    pub fn coinbase(beneficiary: AccountId, parent: &Digest256, reward: u64, created_at: f64) -> Self {
        let mut buf = Vec::with_capacity(52);
        buf.extend_from_slice(b"coinbase");
        buf.extend_from_slice(&beneficiary.to_le_bytes());
        buf.extend_from_slice(&parent.0);
        buf.extend_from_slice(&reward.to_le_bytes());
        Transaction {
            id: double_sha256(&buf),
            sender: AccountId::MINT,
            recipient: beneficiary,
            amount: reward,
            size_bytes: 1,
            created_at,
        }
    }

    fn allocation(index: u32, recipient: AccountId, amount: u64) -> Self {
        let mut buf = Vec::with_capacity(18);
        buf.extend_from_slice(b"genesis");
        buf.extend_from_slice(&index.to_le_bytes());
        buf.extend_from_slice(&recipient.to_le_bytes());
        buf.extend_from_slice(&amount.to_le_bytes());
        Transaction {
            id: double_sha256(&buf),
            sender: AccountId::MINT,
            recipient,
            amount,
            size_bytes: 1,
            created_at: 0.0,
        }
    }

    pub fn is_coinbase(&self) -> bool {
        self.sender == AccountId::MINT
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockHeader {
    pub version: i32,
    pub prev_hash: Digest256,
    pub merkle_root: Digest256,
    pub timestamp: u32,
    pub bits: u32,
    pub nonce: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("header must be exactly 80 bytes, got {0}")]
    BadLength(usize),
}

impl BlockHeader {
    /// `version(4) | prev_hash(32) | merkle_root(32) | timestamp(4) | bits(4) | nonce(4)`,
    /// integers little-endian, hashes in stored byte order.
    pub fn serialize(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[0..4].copy_from_slice(&self.version.to_le_bytes());
        out[4..36].copy_from_slice(&self.prev_hash.0);
        out[36..68].copy_from_slice(&self.merkle_root.0);
        out[68..72].copy_from_slice(&self.timestamp.to_le_bytes());
        out[72..76].copy_from_slice(&self.bits.to_le_bytes());
        out[76..80].copy_from_slice(&self.nonce.to_le_bytes());
        out
    }

    pub fn deserialize(bytes: &[u8]) -> Result<Self, CodecError> {
        if bytes.len() != HEADER_LEN {
            return Err(CodecError::BadLength(bytes.len()));
        }
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        Ok(BlockHeader {
            version: u32_at(0) as i32,
            prev_hash: Digest256(bytes[4..36].try_into().unwrap()),
            merkle_root: Digest256(bytes[36..68].try_into().unwrap()),
            timestamp: u32_at(68),
            bits: u32_at(72),
            nonce: u32_at(76),
        })
    }

    pub fn hash(&self) -> Digest256 {
        double_sha256(&self.serialize())
    }
}

pub fn serialize_header(header: &BlockHeader) -> [u8; HEADER_LEN] {
    header.serialize()
}

pub fn block_hash(header: &BlockHeader) -> Digest256 {
    header.hash()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub header: BlockHeader,
    pub transactions: Vec<Transaction>,
    pub signer: Option<AccountId>,
    pub coin_days_claimed: Option<u64>,
}

impl Block {
    pub fn hash(&self) -> Digest256 {
        self.header.hash()
    }

    pub fn computed_merkle_root(&self) -> Option<Digest256> {
        let ids: Vec<Digest256> = self.transactions.iter().map(|tx| tx.id).collect();
        merkle_root(&ids).ok()
    }

    /// Bytes of user transactions; the coinbase is not counted against the
    /// size limit.
    pub fn payload_bytes(&self) -> u64 {
        self.transactions.iter().filter(|tx| !tx.is_coinbase()).map(|tx| u64::from(tx.size_bytes)).sum()
    }

    pub fn user_tx_count(&self) -> usize {
        self.transactions.iter().filter(|tx| !tx.is_coinbase()).count()
    }

    /// Recipient of the coinbase, if the block has one.
    pub fn beneficiary(&self) -> Option<AccountId> {
        self.transactions.first().filter(|tx| tx.is_coinbase()).map(|tx| tx.recipient)
    }
}

/// Chain state after applying a block: balances plus, per stake owner, the
/// timestamp of their most recent signed block on this chain.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerState {
    pub balances: BTreeMap<AccountId, u64>,
    pub last_signed: BTreeMap<AccountId, u32>,
}

impl LedgerState {
    pub fn balance(&self, account: AccountId) -> u64 {
        self.balances.get(&account).copied().unwrap_or(0)
    }

    pub fn total_coins(&self) -> u128 {
        self.balances.values().map(|&b| u128::from(b)).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerRules {
    pub block_size_limit: u64,
    pub block_reward: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Error)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    #[error("merkle root does not match transactions")]
    BadMerkle,
    #[error("block exceeds the size limit")]
    Oversize,
    #[error("transaction spends more than the sender holds")]
    Overspend,
    #[error("transaction already included")]
    DuplicateTx,
    #[error("parent block unknown")]
    UnknownParent,
    #[error("missing or malformed coinbase")]
    BadCoinbase,
    #[error("header bits do not match the required target")]
    BadDifficulty,
    #[error("proof of work or stake kernel does not verify")]
    BadProof,
}

impl RejectReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            RejectReason::BadMerkle => "bad-merkle",
            RejectReason::Oversize => "oversize",
            RejectReason::Overspend => "overspend",
            RejectReason::DuplicateTx => "duplicate-tx",
            RejectReason::UnknownParent => "unknown-parent",
            RejectReason::BadCoinbase => "bad-coinbase",
            RejectReason::BadDifficulty => "bad-difficulty",
            RejectReason::BadProof => "bad-proof",
        }
    }
}

/// Ledger-level validation of `block` on top of `parent_state`.
///
/// `already_included` answers whether a transaction id appears in the parent's
/// ancestry. Returns the post-block state on acceptance.
pub fn validate_block(
    block: &Block,
    parent_state: &LedgerState,
    rules: &LedgerRules,
    already_included: impl Fn(&Digest256) -> bool,
) -> Result<LedgerState, RejectReason> {
    if block.computed_merkle_root() != Some(block.header.merkle_root) {
        return Err(RejectReason::BadMerkle);
    }
    if block.payload_bytes() > rules.block_size_limit {
        return Err(RejectReason::Oversize);
    }
    let (coinbase, rest) = block.transactions.split_first().ok_or(RejectReason::BadCoinbase)?;
    if !coinbase.is_coinbase() || coinbase.amount != rules.block_reward {
        return Err(RejectReason::BadCoinbase);
    }

    let mut state = parent_state.clone();
    let mut seen = BTreeSet::new();
    for tx in &block.transactions {
        if !seen.insert(tx.id) || already_included(&tx.id) {
            return Err(RejectReason::DuplicateTx);
        }
    }
    *state.balances.entry(coinbase.recipient).or_insert(0) += coinbase.amount;
    for tx in rest {
        if tx.is_coinbase() {
            return Err(RejectReason::BadCoinbase);
        }
        let from = state.balances.entry(tx.sender).or_insert(0);
        if *from < tx.amount {
            return Err(RejectReason::Overspend);
        }
        *from -= tx.amount;
        *state.balances.entry(tx.recipient).or_insert(0) += tx.amount;
    }
    if let Some(signer) = block.signer {
        state.last_signed.insert(signer, block.header.timestamp);
    }
    Ok(state)
}

/// Genesis block with one allocation transaction per account (or a single
/// zero allocation when there are none) and a zero parent hash.
pub fn genesis_block(allocations: &[(AccountId, u64)], bits: u32) -> (Block, LedgerState) {
    let mut transactions: Vec<Transaction> = allocations
        .iter()
        .enumerate()
        .map(|(i, &(acct, amount))| Transaction::allocation(i as u32, acct, amount))
        .collect();
    if transactions.is_empty() {
        transactions.push(Transaction::allocation(0, AccountId(0), 0));
    }
    let ids: Vec<Digest256> = transactions.iter().map(|t| t.id).collect();
    let header = BlockHeader {
        version: 1,
        prev_hash: Digest256::ZERO,
        merkle_root: merkle_root(&ids).expect("non-empty"),
        timestamp: 0,
        bits,
        nonce: 0,
    };
    let mut state = LedgerState::default();
    for &(acct, amount) in allocations {
        *state.balances.entry(acct).or_insert(0) += amount;
    }
    (Block { header, transactions, signer: None, coin_days_claimed: None }, state)
}

#[derive(Clone, Debug)]
pub struct TreeEntry {
    pub block: Arc<Block>,
    pub height: u64,
    pub arrival: u64,
    pub state: LedgerState,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InsertOutcome {
    Inserted,
    Duplicate,
}

/// Every block a node has accepted, keyed by hash.
#[derive(Clone, Debug)]
pub struct BlockTree {
    entries: HashMap<Digest256, TreeEntry>,
    children: HashMap<Digest256, Vec<Digest256>>,
    tips: BTreeSet<Digest256>,
    tx_index: HashMap<Digest256, Vec<Digest256>>,
    genesis: Digest256,
    best: Digest256,
}

impl BlockTree {
    pub fn new(genesis: Block, state: LedgerState) -> Self {
        let hash = genesis.hash();
        let mut tree = BlockTree {
            entries: HashMap::new(),
            children: HashMap::new(),
            tips: BTreeSet::new(),
            tx_index: HashMap::new(),
            genesis: hash,
            best: hash,
        };
        for tx in &genesis.transactions {
            tree.tx_index.entry(tx.id).or_default().push(hash);
        }
        tree.entries.insert(hash, TreeEntry { block: Arc::new(genesis), height: 0, arrival: 0, state });
        tree.tips.insert(hash);
        tree
    }

    pub fn genesis(&self) -> Digest256 {
        self.genesis
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, hash: &Digest256) -> bool {
        self.entries.contains_key(hash)
    }

    pub fn get(&self, hash: &Digest256) -> Option<&TreeEntry> {
        self.entries.get(hash)
    }

    pub fn height(&self, hash: &Digest256) -> Option<u64> {
        self.entries.get(hash).map(|e| e.height)
    }

    pub fn tips(&self) -> impl Iterator<Item = &Digest256> {
        self.tips.iter()
    }

    pub fn tip_count(&self) -> usize {
        self.tips.len()
    }

    pub fn children(&self, hash: &Digest256) -> &[Digest256] {
        self.children.get(hash).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Canonical tip maintained incrementally; equals [`fork_choice`].
    pub fn best(&self) -> Digest256 {
        self.best
    }

    pub fn best_entry(&self) -> &TreeEntry {
        &self.entries[&self.best]
    }

    /// Ancestor of `hash` at `height` (or `hash` itself at its own height).
    pub fn ancestor_at(&self, hash: &Digest256, height: u64) -> Option<Digest256> {
        let mut cur = *hash;
        let mut entry = self.entries.get(&cur)?;
        if entry.height < height {
            return None;
        }
        while entry.height > height {
            cur = entry.block.header.prev_hash;
            entry = self.entries.get(&cur)?;
        }
        Some(cur)
    }

    pub fn is_ancestor_or_self(&self, ancestor: &Digest256, of: &Digest256) -> bool {
        match self.height(ancestor) {
            Some(h) => self.ancestor_at(of, h) == Some(*ancestor),
            None => false,
        }
    }

    /// Whether `tx_id` is included in the chain ending at `head`.
    pub fn is_included(&self, tx_id: &Digest256, head: &Digest256) -> bool {
        self.tx_index.get(tx_id).is_some_and(|blocks| blocks.iter().any(|b| self.is_ancestor_or_self(b, head)))
    }

    /// Ledger validation of a candidate block against its parent in this tree.
    pub fn validate(&self, block: &Block, rules: &LedgerRules) -> Result<LedgerState, RejectReason> {
        let parent = block.header.prev_hash;
        let parent_entry = self.entries.get(&parent).ok_or(RejectReason::UnknownParent)?;
        validate_block(block, &parent_entry.state, rules, |id| self.is_included(id, &parent))
    }

    /// Adds a block whose parent is present. Re-inserting a known hash is a
    /// no-op.
    ///
    /// # Panics
    /// If the parent is unknown; callers buffer orphans separately.
    pub fn insert(&mut self, block: Arc<Block>, state: LedgerState, arrival: u64) -> InsertOutcome {
        let hash = block.hash();
        if self.entries.contains_key(&hash) {
            return InsertOutcome::Duplicate;
        }
        let parent = block.header.prev_hash;
        let parent_height = self.entries.get(&parent).expect("insert requires a known parent").height;
        let height = parent_height + 1;
        for tx in &block.transactions {
            self.tx_index.entry(tx.id).or_default().push(hash);
        }
        self.children.entry(parent).or_default().push(hash);
        self.tips.remove(&parent);
        self.tips.insert(hash);
        self.entries.insert(hash, TreeEntry { block, height, arrival, state });

        let best = &self.entries[&self.best];
        if height > best.height || (height == best.height && arrival < best.arrival) {
            self.best = hash;
        }
        InsertOutcome::Inserted
    }

    /// Hashes from genesis to `head`, inclusive.
    pub fn chain_to(&self, head: &Digest256) -> Vec<Digest256> {
        let mut chain = Vec::new();
        let mut cur = *head;
        while let Some(entry) = self.entries.get(&cur) {
            chain.push(cur);
            if entry.height == 0 {
                break;
            }
            cur = entry.block.header.prev_hash;
        }
        chain.reverse();
        chain
    }

    /// Blocks leaving and joining the chain when moving from `old` to `new`,
    /// each ordered from the fork point outwards.
    pub fn reorg_path(&self, old: &Digest256, new: &Digest256) -> (Vec<Digest256>, Vec<Digest256>) {
        let (mut a, mut b) = (*old, *new);
        let (mut removed, mut added) = (Vec::new(), Vec::new());
        let height = |h: &Digest256| self.entries[h].height;
        let parent = |h: &Digest256| self.entries[h].block.header.prev_hash;
        while height(&a) > height(&b) {
            removed.push(a);
            a = parent(&a);
        }
        while height(&b) > height(&a) {
            added.push(b);
            b = parent(&b);
        }
        while a != b {
            removed.push(a);
            added.push(b);
            a = parent(&a);
            b = parent(&b);
        }
        removed.reverse();
        added.reverse();
        (removed, added)
    }
}

/// Longest chain; among equal heights the block received first wins.
pub fn fork_choice(tree: &BlockTree) -> Digest256 {
    *tree
        .tips
        .iter()
        .max_by(|a, b| {
            let (ea, eb) = (&tree.entries[*a], &tree.entries[*b]);
            ea.height.cmp(&eb.height).then(eb.arrival.cmp(&ea.arrival))
        })
        .expect("tree always holds genesis")
}

/// Blocks whose parent has not arrived yet, bounded in size (oldest dropped).
#[derive(Clone, Debug, Default)]
pub struct OrphanPool {
    by_parent: BTreeMap<Digest256, Vec<(u64, Arc<Block>)>>,
    order: std::collections::VecDeque<(Digest256, Digest256)>,
    capacity: usize,
}

impl OrphanPool {
    pub fn new(capacity: usize) -> Self {
        OrphanPool { capacity, ..Default::default() }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Buffers `block` (received with `arrival`). Returns false if it was
    /// already buffered.
    pub fn add(&mut self, block: Arc<Block>, arrival: u64) -> bool {
        let hash = block.hash();
        let parent = block.header.prev_hash;
        let slot = self.by_parent.entry(parent).or_default();
        if slot.iter().any(|(_, b)| b.hash() == hash) {
            return false;
        }
        slot.push((arrival, block));
        self.order.push_back((parent, hash));
        while self.order.len() > self.capacity {
            let (p, h) = self.order.pop_front().expect("non-empty");
            if let Some(v) = self.by_parent.get_mut(&p) {
                v.retain(|(_, b)| b.hash() != h);
                if v.is_empty() {
                    self.by_parent.remove(&p);
                }
            }
        }
        true
    }

    /// Removes and returns orphans waiting on `parent`.
    pub fn take_children(&mut self, parent: &Digest256) -> Vec<(u64, Arc<Block>)> {
        let taken = self.by_parent.remove(parent).unwrap_or_default();
        if !taken.is_empty() {
            self.order.retain(|(p, _)| p != parent);
        }
        taken
    }
}
