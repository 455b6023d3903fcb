//! Coin-days proof of stake.
//!
//! A lot's weight is `amount * age_days`, where age counts from acquisition
//! or from the owner's last signed block. Lots younger than `min_age_days`
//! weigh nothing and age stops accruing at `max_age_days`. A staker gets one
//! kernel hash per simulated second: the timestamp is the only counter, so
//! there is no nonce to grind.

use serde::{Deserialize, Serialize};

use crate::hashcore::{double_sha256, Digest256, Target256};
use crate::ledger::AccountId;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoinLot {
    pub owner: AccountId,
    pub amount: u64,
    /// Simulated seconds.
    pub acquired_at: f64,
    pub last_signed_at: Option<f64>,
}

impl CoinLot {
    pub fn new(owner: AccountId, amount: u64, acquired_at: f64) -> Self {
        assert!(amount > 0, "a coin lot holds a positive amount");
        CoinLot { owner, amount, acquired_at, last_signed_at: None }
    }

    /// Start of the current accrual period.
    pub fn age_origin(&self) -> f64 {
        match self.last_signed_at {
            Some(t) => t.max(self.acquired_at),
            None => self.acquired_at,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosParams {
    pub min_age_days: f64,
    pub max_age_days: f64,
    pub seconds_per_day: f64,
    pub base_target: Target256,
}

impl PosParams {
    /// Peercoin-style 30/90-day rules with real days.
    pub fn real_days(base_target: Target256) -> Self {
        PosParams { min_age_days: 30.0, max_age_days: 90.0, seconds_per_day: 86_400.0, base_target }
    }
}

pub fn coin_days(lot: &CoinLot, now: f64, params: &PosParams) -> u64 {
    let age_days = (now - lot.age_origin()).max(0.0) / params.seconds_per_day;
    if age_days < params.min_age_days {
        return 0;
    }
    (lot.amount as f64 * age_days.min(params.max_age_days)).floor() as u64
}

/// `double_sha256(trade_data || counter_le64)`.
pub fn kernel_hash(trade_data: &[u8], counter: u64) -> Digest256 {
    let mut buf = Vec::with_capacity(trade_data.len() + 8);
    buf.extend_from_slice(trade_data);
    buf.extend_from_slice(&counter.to_le_bytes());
    double_sha256(&buf)
}

/// Kernel target `D * coin_days`, saturating at the maximum.
pub fn kernel_target(params: &PosParams, coin_day_weight: u64) -> Target256 {
    params.base_target.saturating_mul(coin_day_weight)
}

/// `kernel_hash < D * coin_days`; zero weight never passes.
pub fn kernel_check(trade_data: &[u8], counter: u64, params: &PosParams, coin_day_weight: u64) -> bool {
    if coin_day_weight == 0 {
        return false;
    }
    let target = kernel_target(params, coin_day_weight);
    if target == Target256::MAX {
        return true;
    }
    target.is_met_by(&kernel_hash(trade_data, counter), true)
}

/// Kernel input binding an attempt to one fork and one staker.
pub fn trade_data(tip: &Digest256, owner: AccountId) -> [u8; 36] {
    let mut out = [0u8; 36];
    out[..32].copy_from_slice(&tip.0);
    out[32..].copy_from_slice(&owner.to_le_bytes());
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StakeClaim {
    pub owner: AccountId,
    pub coin_days: u64,
    pub timestamp: u64,
}

/// One kernel attempt for `lot` on top of `tip` at second `now`.
pub fn try_sign(lot: &CoinLot, tip: &Digest256, now: u64, params: &PosParams) -> Option<StakeClaim> {
    let weight = coin_days(lot, now as f64, params);
    if weight == 0 {
        return None;
    }
    kernel_check(&trade_data(tip, lot.owner), now, params, weight).then_some(StakeClaim {
        owner: lot.owner,
        coin_days: weight,
        timestamp: now,
    })
}

/// Clears accrued coin-days after the lot signs a block at `now`.
pub fn reset_on_sign(lot: &CoinLot, now: f64) -> CoinLot {
    CoinLot { last_signed_at: Some(now), ..*lot }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hashcore::target_from_zero_bits;
    use proptest::prelude::*;

    fn days(params: &PosParams, d: f64) -> f64 {
        d * params.seconds_per_day
    }

    fn params() -> PosParams {
        PosParams::real_days(target_from_zero_bits(40).unwrap())
    }

    fn lot10() -> CoinLot {
        CoinLot::new(AccountId(1), 10, 0.0)
    }

    #[test]
    fn worked_examples() {
        let p = params();
        assert_eq!(coin_days(&lot10(), days(&p, 90.0), &p), 900);
        assert_eq!(coin_days(&lot10(), days(&p, 45.0), &p), 450);
        assert_eq!(coin_days(&lot10(), days(&p, 20.0), &p), 0);
        assert_eq!(coin_days(&lot10(), days(&p, 200.0), &p), 900);
        assert_eq!(coin_days(&lot10(), days(&p, 30.0), &p), 300);
    }

    #[test]
    fn reset_waits_another_threshold() {
        let p = params();
        let now = days(&p, 100.0);
        let reset = reset_on_sign(&lot10(), now);
        assert_eq!(coin_days(&reset, now, &p), 0);
        assert_eq!(coin_days(&reset, now + days(&p, 29.0), &p), 0);
        assert_eq!(coin_days(&reset, now + days(&p, 31.0), &p), 310);
    }

    #[test]
    fn zero_weight_never_passes() {
        let p = PosParams { base_target: Target256::MAX, ..params() };
        for counter in 0..100 {
            assert!(!kernel_check(b"data", counter, &p, 0));
        }
    }

    #[test]
    fn saturated_target_always_passes() {
        let p = PosParams { base_target: target_from_zero_bits(2).unwrap(), ..params() };
        for counter in 0..100u64 {
            assert!(kernel_check(&counter.to_le_bytes(), counter, &p, 4));
        }
    }

    #[test]
    fn ineligible_lot_cannot_sign() {
        let p = PosParams { base_target: Target256::MAX, ..params() };
        let now = days(&p, 20.0) as u64;
        assert_eq!(try_sign(&lot10(), &Digest256::ZERO, now, &p), None);
    }

    #[test]
    fn forced_success_reports_weight() {
        let p = PosParams { base_target: Target256::MAX, ..params() };
        let now = days(&p, 45.0) as u64;
        let claim = try_sign(&lot10(), &Digest256::ZERO, now, &p).expect("saturated target");
        assert_eq!(claim, StakeClaim { owner: AccountId(1), coin_days: 450, timestamp: now });
    }

    #[test]
    fn trade_data_layout() {
        let tip = crate::hashcore::double_sha256(b"tip");
        let td = trade_data(&tip, AccountId(0x01020304));
        assert_eq!(&td[..32], &tip.0);
        assert_eq!(&td[32..], &[4, 3, 2, 1]);
    }

    proptest! {
        #[test]
        fn coin_days_monotone_between_signings(a in 0.0f64..200.0, b in 0.0f64..200.0, amount in 1u64..10_000) {
            let p = params();
            let lot = CoinLot::new(AccountId(0), amount, 0.0);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(coin_days(&lot, days(&p, lo), &p) <= coin_days(&lot, days(&p, hi), &p));
        }

        #[test]
        fn kernel_monotone_in_weight(counter in any::<u64>(), w in 1u64..1_000_000, extra in 0u64..1_000_000, tip in proptest::array::uniform32(any::<u8>())) {
            let p = PosParams { base_target: target_from_zero_bits(24).unwrap(), ..params() };
            let td = trade_data(&Digest256(tip), AccountId(3));
            if kernel_check(&td, counter, &p, w) {
                prop_assert!(kernel_check(&td, counter, &p, w + extra));
            }
        }
    }
}
