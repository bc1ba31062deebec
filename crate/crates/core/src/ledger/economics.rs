//! Parameters and the pure settlement / reward arithmetic. Token amounts are
//! integers; fractions are exact rationals and results are floored.

use serde::{Deserialize, Serialize};

use super::LedgerError;

/// Exact rational `num / den`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fraction {
    pub num: u64,
    pub den: u64,
}

impl Fraction {
    pub const fn new(num: u64, den: u64) -> Self {
        Fraction { num, den }
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `⌊x · num / den⌋`
    pub fn floor_mul(&self, x: u128) -> u128 {
        x * self.num as u128 / self.den as u128
    }

    fn is_proper(&self) -> bool {
        self.den > 0 && self.num < self.den
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EconomicsParams {
    /// Quota slack over the stake share.
    pub alpha_quota: Fraction,
    /// Challenger's cut of the fee earned so far in a proven leak.
    pub alpha_challenge: Fraction,
    pub s_min: u64,
    /// Health-check period in blocks.
    pub h: u64,
    /// Seconds per block.
    pub block_time: u64,
    pub r0: u64,
    pub half_life: u64,
    /// Part of each minted reward reserved for paying health-check voters.
    pub committee_share: Fraction,
    /// Paid from the reward pool to the majority voters of each health round.
    pub checking_fee: u64,
    /// Floor on the policy count used to turn quota fractions into counts,
    /// so the first deployments in an empty network are not refused.
    pub quota_min_pool: u64,
}

impl Default for EconomicsParams {
    fn default() -> Self {
        EconomicsParams {
            alpha_quota: Fraction::new(1, 10),
            alpha_challenge: Fraction::new(1, 4),
            s_min: 100,
            h: 10,
            block_time: 24,
            r0: 64,
            half_life: 100,
            committee_share: Fraction::new(1, 10),
            checking_fee: 20,
            quota_min_pool: 100,
        }
    }
}

impl EconomicsParams {
    pub fn validate(&self) -> Result<(), LedgerError> {
        let bad = |what| Err(LedgerError::InvalidParams(what));
        if self.alpha_quota.den == 0 || self.alpha_quota.num == 0 {
            return bad("alpha_quota must be positive");
        }
        if !self.alpha_challenge.is_proper() || self.alpha_challenge.num == 0 {
            return bad("alpha_challenge must lie in (0, 1)");
        }
        if !self.committee_share.is_proper() {
            return bad("committee_share must lie in [0, 1)");
        }
        if self.s_min == 0 || self.h == 0 || self.block_time == 0 || self.half_life == 0 {
            return bad("s_min, h, block_time and half_life must be positive");
        }
        Ok(())
    }

    /// Seconds to blocks, rounding up.
    pub fn blocks_for_seconds(&self, seconds: u64) -> u64 {
        seconds.div_ceil(self.block_time)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevocationPayout {
    pub owner: u64,
    pub miner: u64,
    /// Rounding remainder.
    pub seized: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakPayout {
    pub challenger: u64,
    pub owner: u64,
    pub seized: u64,
}

fn check_elapsed(t: u64, duration: u64) -> Result<(), LedgerError> {
    if duration == 0 || t > duration {
        return Err(LedgerError::InvalidElapsed { t, duration });
    }
    Ok(())
}

/// Owner gets `(1 − t/T)·f` back, the miner `c + f·t/T`.
pub fn revocation_payout(f: u64, duration: u64, c: u64, t: u64) -> Result<RevocationPayout, LedgerError> {
    check_elapsed(t, duration)?;
    let (f, big_t, t) = (f as u128, duration as u128, t as u128);
    let owner = f * (big_t - t) / big_t;
    let earned = f * t / big_t;
    let seized = f - owner - earned;
    Ok(RevocationPayout { owner: owner as u64, miner: c + earned as u64, seized: seized as u64 })
}

/// Challenger gets `α·f·t/T`, the owner `(1 − t/T)·f`, and the rest of
/// `f + c` is seized.
pub fn leak_payout(f: u64, duration: u64, c: u64, t: u64, alpha: Fraction) -> Result<LeakPayout, LedgerError> {
    check_elapsed(t, duration)?;
    let (f128, big_t, t) = (f as u128, duration as u128, t as u128);
    let owner = f128 * (big_t - t) / big_t;
    let challenger = f128 * t * alpha.num as u128 / (big_t * alpha.den as u128);
    let seized = f128 + c as u128 - owner - challenger;
    Ok(LeakPayout { challenger: challenger as u64, owner: owner as u64, seized: seized as u64 })
}

/// Per-block mint `⌊R0 · 2^(−height/half_life)⌋`.
pub fn block_reward(params: &EconomicsParams, height: u64) -> u64 {
    if params.r0 == 0 {
        return 0;
    }
    let halvings = height / params.half_life;
    if halvings >= 64 {
        return 0;
    }
    let within = height % params.half_life;
    if within == 0 {
        return params.r0 >> halvings;
    }
    let halved = params.r0 as f64 / (1u64 << halvings) as f64;
    (halved * (-(within as f64) / params.half_life as f64).exp2()).floor() as u64
}

/// Largest number of policies a node may hold:
/// `⌊(1 + α)·stake/total_stake · pool⌋`.
pub fn quota_capacity(alpha: Fraction, stake: u64, total_stake: u64, pool: u64) -> u64 {
    if total_stake == 0 {
        return 0;
    }
    let num = (alpha.den as u128 + alpha.num as u128) * stake as u128 * pool as u128;
    let den = alpha.den as u128 * total_stake as u128;
    (num / den).min(u64::MAX as u128) as u64
}
