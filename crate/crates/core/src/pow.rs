//! Proof of work: the double-SHA256 puzzle check, an exact nonce-scanning
//! miner, a statistical delay sampler for large runs, and periodic difficulty
//! retargeting.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::hashcore::Target256;
use crate::ledger::BlockHeader;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowParams {
    pub retarget_interval_blocks: u64,
    /// Seconds.
    pub target_block_interval: f64,
    pub initial_target: Target256,
    /// The actual/expected ratio is clamped into `[1/clamp, clamp]`; 1 keeps
    /// the target fixed, and large values approach the unclamped rule.
    pub clamp_factor: f64,
    /// Require `hash < target` rather than `hash <= target`.
    pub strict: bool,
}

impl PowParams {
    /// Bitcoin constants: 2016-block windows of 10-minute blocks.
    pub fn bitcoin(initial_target: Target256) -> Self {
        PowParams {
            retarget_interval_blocks: 2016,
            target_block_interval: 600.0,
            initial_target,
            clamp_factor: 4.0,
            strict: false,
        }
    }

    pub fn expected_window_seconds(&self) -> f64 {
        self.retarget_interval_blocks as f64 * self.target_block_interval
    }

    /// A block at `height` is the first of a new window and takes a freshly
    /// retargeted difficulty. Window `k` spans heights `k*I+1 ..= (k+1)*I`.
    pub fn is_retarget_height(&self, height: u64) -> bool {
        height > self.retarget_interval_blocks && (height - 1).is_multiple_of(self.retarget_interval_blocks)
    }
}

pub fn check_pow(header: &BlockHeader, target: &Target256, strict: bool) -> bool {
    target.is_met_by(&header.hash(), strict)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MineOutcome {
    /// `header` carries the winning nonce (and a bumped timestamp if the
    /// nonce space wrapped).
    Found {
        header: BlockHeader,
        attempts: u64,
    },
    Exhausted {
        attempts: u64,
    },
}

/// Scans nonces upwards from `nonce_start`. When the 32-bit nonce wraps, the
/// timestamp is advanced by one second and scanning continues from zero.
pub fn mine(
    template: &BlockHeader,
    target: &Target256,
    nonce_start: u32,
    max_attempts: u64,
    strict: bool,
) -> MineOutcome {
    assert!(max_attempts >= 1, "max_attempts must be at least 1");
    let mut header = *template;
    header.nonce = nonce_start;
    for attempt in 1..=max_attempts {
        if check_pow(&header, target, strict) {
            return MineOutcome::Found { header, attempts: attempt };
        }
        header.nonce = match header.nonce.checked_add(1) {
            Some(n) => n,
            None => {
                header.timestamp = header.timestamp.wrapping_add(1);
                0
            }
        };
    }
    MineOutcome::Exhausted { attempts: max_attempts }
}

/// Number of independent attempts until the first success, geometric with
/// parameter `p`. Returned as `f64` since it can exceed `u64` at tiny `p`.
pub fn sample_attempts<R: Rng + ?Sized>(p: f64, rng: &mut R) -> f64 {
    if p >= 1.0 {
        return 1.0;
    }
    let u: f64 = 1.0 - rng.random::<f64>();
    (u.ln() / (-p).ln_1p()).ceil().max(1.0)
}

/// Simulated seconds for a miner with `hash_rate` attempts/second to find a
/// block at `target`, without hashing.
pub fn statistical_mine<R: Rng + ?Sized>(hash_rate: f64, target: &Target256, rng: &mut R) -> f64 {
    assert!(hash_rate > 0.0, "hash_rate must be positive");
    sample_attempts(target.success_probability(), rng) / hash_rate
}

/// Scales `old_target` by `actual_elapsed / expected`, with the ratio clamped
/// to `[1/clamp_factor, clamp_factor]`.
pub fn retarget(actual_elapsed: f64, params: &PowParams, old_target: &Target256) -> Target256 {
    let clamp = params.clamp_factor.max(1.0);
    let ratio = (actual_elapsed.max(0.0) / params.expected_window_seconds()).clamp(1.0 / clamp, clamp);
    old_target.scale(ratio)
}
