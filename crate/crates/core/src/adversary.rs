//! Nothing-at-stake: an attacker that stakes on every fork, the equivocation
//! evidence that exposes it, and margin slashing.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hashcore::Digest256;
use crate::ledger::{AccountId, LedgerState};
use crate::pos::{try_sign, CoinLot, PosParams, StakeClaim};

/// A signed block as seen by the observer: who signed it, where, and which
/// block it is.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignedClaim {
    pub owner: AccountId,
    pub height: u64,
    pub block_hash: Digest256,
}

/// Two distinct blocks signed by the same owner at the same height.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquivocationProof {
    pub offender: AccountId,
    pub height: u64,
    pub claim_a: SignedClaim,
    pub claim_b: SignedClaim,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ProofError {
    #[error("claims reference the same block")]
    SameBlock,
    #[error("claims are at different heights")]
    HeightMismatch,
    #[error("claims have different signers")]
    OwnerMismatch,
    #[error("proof names an offender who signed neither claim")]
    WrongOffender,
}

impl EquivocationProof {
    pub fn verify(&self) -> Result<(), ProofError> {
        let (a, b) = (&self.claim_a, &self.claim_b);
        if a.block_hash == b.block_hash {
            return Err(ProofError::SameBlock);
        }
        if a.height != b.height || a.height != self.height {
            return Err(ProofError::HeightMismatch);
        }
        if a.owner != b.owner {
            return Err(ProofError::OwnerMismatch);
        }
        if a.owner != self.offender {
            return Err(ProofError::WrongOffender);
        }
        Ok(())
    }
}

/// Streaming detector over observed claims. Emits at most one proof per
/// `(owner, height)`; re-observing the same block is not equivocation.
#[derive(Clone, Debug, Default)]
pub struct EquivocationDetector {
    first_seen: BTreeMap<(AccountId, u64), SignedClaim>,
    reported: BTreeSet<(AccountId, u64)>,
}

impl EquivocationDetector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, claim: SignedClaim) -> Option<EquivocationProof> {
        let key = (claim.owner, claim.height);
        let first = *self.first_seen.entry(key).or_insert(claim);
        if first.block_hash == claim.block_hash || self.reported.contains(&key) {
            return None;
        }
        self.reported.insert(key);
        Some(EquivocationProof { offender: claim.owner, height: claim.height, claim_a: first, claim_b: claim })
    }
}

pub fn detect_equivocation(claims: impl IntoIterator<Item = SignedClaim>) -> Vec<EquivocationProof> {
    let mut detector = EquivocationDetector::new();
    claims.into_iter().filter_map(|c| detector.observe(c)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MarginStatus {
    Active,
    Slashed,
}

/// Security deposit posted by a staker.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarginAccount {
    pub owner: AccountId,
    pub deposit: u64,
    pub status: MarginStatus,
}

impl MarginAccount {
    pub fn new(owner: AccountId, deposit: u64) -> Self {
        MarginAccount { owner, deposit, status: MarginStatus::Active }
    }

    pub fn can_stake(&self) -> bool {
        self.status == MarginStatus::Active
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum SlashError {
    #[error("invalid equivocation proof: {0}")]
    InvalidProof(#[from] ProofError),
    #[error("proof offender {offender} does not own margin of {owner}")]
    NotOwner { offender: AccountId, owner: AccountId },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SlashOutcome {
    pub margin: MarginAccount,
    /// Amount moved to the burn account; zero when already slashed.
    pub confiscated: u64,
}

/// Confiscates the whole deposit. Slashing an already-slashed account leaves
/// it unchanged.
pub fn slash(margin: &MarginAccount, proof: &EquivocationProof) -> Result<SlashOutcome, SlashError> {
    proof.verify()?;
    if proof.offender != margin.owner {
        return Err(SlashError::NotOwner { offender: proof.offender, owner: margin.owner });
    }
    if margin.status == MarginStatus::Slashed {
        return Ok(SlashOutcome { margin: *margin, confiscated: 0 });
    }
    Ok(SlashOutcome {
        margin: MarginAccount { owner: margin.owner, deposit: 0, status: MarginStatus::Slashed },
        confiscated: margin.deposit,
    })
}

/// One kernel attempt per lot on every supplied tip, using each tip's own
/// chain state for coin-days. An honest staker passes only its canonical tip;
/// the nothing-at-stake attacker passes every live tip.
pub fn stake_on_tips<'a>(
    lots: &[CoinLot],
    tips: impl IntoIterator<Item = (Digest256, &'a LedgerState)>,
    now: u64,
    params: &PosParams,
    eligible: impl Fn(AccountId) -> bool,
) -> Vec<(Digest256, StakeClaim)> {
    let mut out = Vec::new();
    for (tip, state) in tips {
        for lot in lots.iter().filter(|l| eligible(l.owner)) {
            let view = CoinLot { last_signed_at: state.last_signed.get(&lot.owner).map(|&t| f64::from(t)), ..*lot };
            if let Some(claim) = try_sign(&view, &tip, now, params) {
                out.push((tip, claim));
            }
        }
    }
    out
}

/// Attacker behaviour: stake on every tip simultaneously.
pub fn nothing_at_stake_strategy<'a>(
    lots: &[CoinLot],
    tips: impl IntoIterator<Item = (Digest256, &'a LedgerState)>,
    now: u64,
    params: &PosParams,
    eligible: impl Fn(AccountId) -> bool,
) -> Vec<(Digest256, StakeClaim)> {
    stake_on_tips(lots, tips, now, params, eligible)
}
