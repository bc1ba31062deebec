//! Simulated staking contract: block clock, balances, stakes, quotas, node
//! selection, policy escrows and their settlement, availability rewards.
//!
//! Every token lives in exactly one place: an account balance, a stake, an
//! open escrow, the seized pool or the reward pool. [`Ledger::check_conservation`]
//! verifies that these add up to the total supply.

pub mod economics;
mod tx;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sym::sha256;
use crate::util::{hamming, hex32, hex32_opt};

pub use economics::{
    block_reward, leak_payout, quota_capacity, revocation_payout, EconomicsParams, Fraction, LeakPayout,
    RevocationPayout,
};
pub use tx::{LedgerTx, TxOutcome};

pub type AccountId = String;
pub type EscrowId = u64;

pub const STATE_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LedgerError {
    #[error("invalid parameters: {0}")]
    InvalidParams(&'static str),
    #[error("{account} has {available} tokens, needs {needed}")]
    InsufficientBalance { account: AccountId, needed: u64, available: u64 },
    #[error("stake is locked until height {until}")]
    StillLocked { until: u64 },
    #[error("{0} has no stake")]
    NoStake(AccountId),
    #[error("unknown node {0}")]
    UnknownNode(AccountId),
    #[error("node {0} is already registered")]
    DuplicateNode(AccountId),
    #[error("unknown escrow {0}")]
    UnknownEscrow(EscrowId),
    #[error("escrow {0} is already settled")]
    AlreadySettled(EscrowId),
    #[error("escrow {0} does not pay this node")]
    WrongMiner(EscrowId),
    #[error("elapsed time {t} outside [0, {duration}]")]
    InvalidElapsed { t: u64, duration: u64 },
    #[error("node {node} is at its quota of {capacity} policies")]
    QuotaExceeded { node: AccountId, capacity: u64 },
    #[error("no eligible nodes")]
    NoEligibleNodes,
    #[error("token conservation violated: supply {supply}, accounted {accounted}")]
    Conservation { supply: u64, accounted: u64 },
    #[error("unsupported state version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt state: {0}")]
    Corrupt(String),
}

impl LedgerError {
    /// Stable identifier used on the wire.
    pub fn code(&self) -> &'static str {
        match self {
            LedgerError::InvalidParams(_) => "InvalidParams",
            LedgerError::InsufficientBalance { .. } => "InsufficientBalance",
            LedgerError::StillLocked { .. } => "StillLocked",
            LedgerError::NoStake(_) => "NoStake",
            LedgerError::UnknownNode(_) => "UnknownNode",
            LedgerError::DuplicateNode(_) => "DuplicateNode",
            LedgerError::UnknownEscrow(_) => "UnknownEscrow",
            LedgerError::AlreadySettled(_) => "AlreadySettled",
            LedgerError::WrongMiner(_) => "WrongMiner",
            LedgerError::InvalidElapsed { .. } => "InvalidElapsed",
            LedgerError::QuotaExceeded { .. } => "QuotaExceeded",
            LedgerError::NoEligibleNodes => "NoEligibleNodes",
            LedgerError::Conservation { .. } => "Conservation",
            LedgerError::UnsupportedVersion(_) => "UnsupportedVersion",
            LedgerError::Corrupt(_) => "Corrupt",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub height: u64,
    #[serde(with = "hex32")]
    pub hash: [u8; 32],
    /// Seconds since genesis.
    pub timestamp: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeEntry {
    /// `H(node public key)`, the node's position for Hamming-distance selection.
    #[serde(with = "hex32")]
    pub key_hash: [u8; 32],
    pub stake: u64,
    pub lock_until: u64,
    /// Policies currently deployed on the node.
    pub deployed: u64,
    /// Cleared by a failed health check, restored by a passed one. Unhealthy
    /// nodes receive no availability rewards.
    pub healthy: bool,
    pub accrued_since_check: u64,
    pub last_check: u64,
    pub rewards_total: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EscrowState {
    Open,
    Revoked,
    Leaked,
    Completed,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyEscrow {
    pub id: EscrowId,
    pub owner: AccountId,
    pub miner: AccountId,
    pub fee: u64,
    /// `T`, in blocks.
    pub duration: u64,
    /// `t0`
    pub start: u64,
    pub collateral: u64,
    pub state: EscrowState,
    #[serde(with = "hex32_opt", default)]
    pub policy_id: Option<[u8; 32]>,
    /// Hash of the canonical encoding of the deployed material, the
    /// reference for leak challenges.
    #[serde(with = "hex32_opt", default)]
    pub material_hash: Option<[u8; 32]>,
    /// Whether the policy counts against the miner's quota.
    #[serde(default)]
    pub deployed: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Payment {
    pub height: u64,
    pub payer: AccountId,
    pub payee: AccountId,
    pub amount: u64,
}

/// What one call to [`Ledger::advance_block`] did.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockReport {
    pub block: Block,
    pub minted: u64,
    /// Escrows that reached `t0 + T` and paid out in full to the miner.
    pub completed: Vec<EscrowId>,
    /// A health-check round opens at this block.
    pub health_round: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ledger {
    params: EconomicsParams,
    seed: u64,
    height: u64,
    #[serde(with = "hex32")]
    head: [u8; 32],
    balances: BTreeMap<AccountId, u64>,
    total_supply: u64,
    seized_pool: u64,
    reward_pool: u64,
    nodes: BTreeMap<AccountId, NodeEntry>,
    escrows: BTreeMap<EscrowId, PolicyEscrow>,
    /// Open escrows keyed by the height at which they complete.
    #[serde(skip)]
    open: BTreeSet<(u64, EscrowId)>,
    next_escrow: EscrowId,
    payments: Vec<Payment>,
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    version: u32,
    ledger: Ledger,
}

#[derive(Deserialize)]
struct VersionProbe {
    version: u32,
}

fn block_hash(parent: &[u8; 32], height: u64, seed: u64) -> [u8; 32] {
    sha256(&[parent, &height.to_be_bytes(), &seed.to_be_bytes()])
}

impl Ledger {
    pub fn new(params: EconomicsParams, seed: u64) -> Result<Self, LedgerError> {
        params.validate()?;
        Ok(Ledger {
            params,
            seed,
            height: 0,
            head: block_hash(&[0u8; 32], 0, seed),
            balances: BTreeMap::new(),
            total_supply: 0,
            seized_pool: 0,
            reward_pool: 0,
            nodes: BTreeMap::new(),
            escrows: BTreeMap::new(),
            open: BTreeSet::new(),
            next_escrow: 1,
            payments: Vec::new(),
        })
    }

    pub fn params(&self) -> &EconomicsParams {
        &self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn height(&self) -> u64 {
        self.height
    }

    pub fn block(&self) -> Block {
        Block { height: self.height, hash: self.head, timestamp: self.height * self.params.block_time }
    }

    pub fn balance(&self, account: &str) -> u64 {
        self.balances.get(account).copied().unwrap_or(0)
    }

    pub fn total_supply(&self) -> u64 {
        self.total_supply
    }

    pub fn seized_pool(&self) -> u64 {
        self.seized_pool
    }

    pub fn reward_pool(&self) -> u64 {
        self.reward_pool
    }

    /// Creates tokens out of nothing; only meant for the initial allocation.
    pub fn genesis_credit(&mut self, account: &str, amount: u64) {
        *self.balances.entry(account.to_string()).or_default() += amount;
        self.total_supply += amount;
    }

    fn debit(&mut self, account: &str, amount: u64) -> Result<(), LedgerError> {
        let available = self.balance(account);
        if available < amount {
            return Err(LedgerError::InsufficientBalance { account: account.to_string(), needed: amount, available });
        }
        if amount > 0 {
            *self.balances.get_mut(account).expect("checked above") -= amount;
        }
        Ok(())
    }

    fn credit(&mut self, account: &str, amount: u64) {
        if amount > 0 {
            *self.balances.entry(account.to_string()).or_default() += amount;
        }
    }

    pub fn advance_block(&mut self) -> BlockReport {
        let minted = self.mint_reward(self.height);
        self.height += 1;
        self.head = block_hash(&self.head, self.height, self.seed);

        let due: Vec<EscrowId> = self.open.range(..=(self.height, EscrowId::MAX)).map(|&(_, id)| id).collect();
        for id in &due {
            let e = &self.escrows[id];
            let payout = revocation_payout(e.fee, e.duration, e.collateral, e.duration).expect("t = T is valid");
            self.close_escrow(*id, EscrowState::Completed, None, payout.miner, payout.seized);
        }
        debug_assert_eq!(self.check_conservation(), Ok(()));
        BlockReport {
            block: self.block(),
            minted,
            completed: due,
            health_round: self.height.is_multiple_of(self.params.h),
        }
    }

    /// Mints `R(height)`: the committee share and rounding dust go to the
    /// reward pool, the rest pro rata by stake to healthy staked nodes.
    pub fn mint_reward(&mut self, height: u64) -> u64 {
        let reward = block_reward(&self.params, height);
        self.total_supply += reward;
        let committee = self.params.committee_share.floor_mul(reward as u128) as u64;
        let distributable = reward - committee;
        let s_min = self.params.s_min;
        let eligible: Vec<(AccountId, u64)> = self
            .nodes
            .iter()
            .filter(|(_, n)| n.healthy && n.stake >= s_min)
            .map(|(id, n)| (id.clone(), n.stake))
            .collect();
        let total: u128 = eligible.iter().map(|(_, s)| *s as u128).sum();
        let mut paid = 0;
        for (id, stake) in eligible {
            let Some(share) = (distributable as u128 * stake as u128).checked_div(total) else { break };
            let share = share as u64;
            let node = self.nodes.get_mut(&id).expect("listed above");
            node.accrued_since_check += share;
            node.rewards_total += share;
            self.credit(&id, share);
            paid += share;
        }
        self.reward_pool += reward - paid;
        reward
    }

    pub fn register_node(&mut self, id: &str, public_key: &[u8]) -> Result<(), LedgerError> {
        if self.nodes.contains_key(id) {
            return Err(LedgerError::DuplicateNode(id.to_string()));
        }
        self.nodes.insert(
            id.to_string(),
            NodeEntry {
                key_hash: sha256(&[public_key]),
                stake: 0,
                lock_until: 0,
                deployed: 0,
                healthy: true,
                accrued_since_check: 0,
                last_check: self.height,
                rewards_total: 0,
            },
        );
        Ok(())
    }

    pub fn node(&self, id: &str) -> Option<&NodeEntry> {
        self.nodes.get(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&AccountId, &NodeEntry)> {
        self.nodes.iter()
    }

    fn node_mut(&mut self, id: &str) -> Result<&mut NodeEntry, LedgerError> {
        self.nodes.get_mut(id).ok_or_else(|| LedgerError::UnknownNode(id.to_string()))
    }

    /// Moves `amount` from the node's balance into its stake. The lock only
    /// ever moves later.
    pub fn deposit_stake(&mut self, node: &str, amount: u64, lock_blocks: u64) -> Result<(), LedgerError> {
        self.node_mut(node)?;
        self.debit(node, amount)?;
        let until = self.height + lock_blocks;
        let entry = self.node_mut(node)?;
        entry.stake += amount;
        entry.lock_until = entry.lock_until.max(until);
        Ok(())
    }

    /// Returns the whole stake to the node's balance.
    pub fn withdraw_stake(&mut self, node: &str) -> Result<u64, LedgerError> {
        let height = self.height;
        let entry = self.node_mut(node)?;
        if entry.stake == 0 {
            return Err(LedgerError::NoStake(node.to_string()));
        }
        if height < entry.lock_until {
            return Err(LedgerError::StillLocked { until: entry.lock_until });
        }
        let amount = std::mem::take(&mut entry.stake);
        self.credit(node, amount);
        Ok(amount)
    }

    pub fn total_stake(&self) -> u64 {
        self.nodes.values().map(|n| n.stake).sum()
    }

    pub fn total_deployed(&self) -> u64 {
        self.nodes.values().map(|n| n.deployed).sum()
    }

    /// `(1 + α)·stake/total_stake`: the largest share of all deployed
    /// policies the node may hold.
    pub fn quota_limit(&self, node: &str) -> f64 {
        let total = self.total_stake();
        match self.nodes.get(node) {
            Some(n) if total > 0 => (1.0 + self.params.alpha_quota.as_f64()) * n.stake as f64 / total as f64,
            _ => 0.0,
        }
    }

    /// How many policies the node could hold if one more were deployed
    /// network-wide.
    pub fn quota_capacity(&self, node: &str) -> u64 {
        let Some(n) = self.nodes.get(node) else { return 0 };
        let pool = (self.total_deployed() + 1).max(self.params.quota_min_pool);
        quota_capacity(self.params.alpha_quota, n.stake, self.total_stake(), pool)
    }

    pub fn has_quota(&self, node: &str) -> bool {
        self.nodes.get(node).is_some_and(|n| n.deployed < self.quota_capacity(node))
    }

    fn is_eligible(&self, id: &str, n: &NodeEntry) -> bool {
        n.stake >= self.params.s_min && self.has_quota(id)
    }

    /// The eligible node whose key hash is closest in Hamming distance to
    /// `H(policy_id)`, ties going to the smaller key hash.
    pub fn select_node(&self, policy_id: &[u8], exclude: &[AccountId]) -> Result<AccountId, LedgerError> {
        let target = sha256(&[policy_id]);
        self.nodes
            .iter()
            .filter(|(id, n)| !exclude.contains(id) && self.is_eligible(id, n))
            .min_by_key(|(_, n)| (hamming(&n.key_hash, &target), n.key_hash))
            .map(|(id, _)| id.clone())
            .ok_or(LedgerError::NoEligibleNodes)
    }

    /// Locks `fee` from the owner and `collateral` from the miner.
    pub fn escrow_policy(
        &mut self,
        owner: &str,
        miner: &str,
        fee: u64,
        duration: u64,
        collateral: u64,
    ) -> Result<EscrowId, LedgerError> {
        if duration == 0 {
            return Err(LedgerError::InvalidElapsed { t: 0, duration });
        }
        if !self.nodes.contains_key(miner) {
            return Err(LedgerError::UnknownNode(miner.to_string()));
        }
        let owner_has = self.balance(owner);
        if owner_has < fee {
            return Err(LedgerError::InsufficientBalance {
                account: owner.to_string(),
                needed: fee,
                available: owner_has,
            });
        }
        if owner == miner {
            self.debit(owner, fee + collateral)?;
        } else {
            self.debit(miner, collateral)?;
            self.debit(owner, fee)?;
        }
        let id = self.next_escrow;
        self.next_escrow += 1;
        self.open.insert((self.height + duration, id));
        self.escrows.insert(
            id,
            PolicyEscrow {
                id,
                owner: owner.to_string(),
                miner: miner.to_string(),
                fee,
                duration,
                start: self.height,
                collateral,
                state: EscrowState::Open,
                policy_id: None,
                material_hash: None,
                deployed: false,
            },
        );
        Ok(id)
    }

    pub fn escrow(&self, id: EscrowId) -> Option<&PolicyEscrow> {
        self.escrows.get(&id)
    }

    pub fn escrows(&self) -> impl Iterator<Item = &PolicyEscrow> {
        self.escrows.values()
    }

    pub fn escrow_for_policy(&self, policy_id: &[u8; 32]) -> Option<&PolicyEscrow> {
        self.escrows.values().find(|e| e.policy_id.as_ref() == Some(policy_id))
    }

    fn open_escrow_mut(&mut self, id: EscrowId) -> Result<&mut PolicyEscrow, LedgerError> {
        let e = self.escrows.get_mut(&id).ok_or(LedgerError::UnknownEscrow(id))?;
        if e.state != EscrowState::Open {
            return Err(LedgerError::AlreadySettled(id));
        }
        Ok(e)
    }

    /// Records which policy the escrow pays for and the hash of its material.
    pub fn bind_policy(
        &mut self,
        id: EscrowId,
        policy_id: [u8; 32],
        material_hash: [u8; 32],
    ) -> Result<(), LedgerError> {
        let e = self.open_escrow_mut(id)?;
        e.policy_id = Some(policy_id);
        e.material_hash = Some(material_hash);
        Ok(())
    }

    /// Counts a policy against the miner's quota. Called by the node when
    /// it accepts a deployment.
    pub fn register_deployment(&mut self, id: EscrowId, node: &str) -> Result<(), LedgerError> {
        let e = self.open_escrow_mut(id)?;
        if e.miner != node {
            return Err(LedgerError::WrongMiner(id));
        }
        if e.deployed {
            return Ok(());
        }
        if !self.has_quota(node) {
            return Err(LedgerError::QuotaExceeded { node: node.to_string(), capacity: self.quota_capacity(node) });
        }
        self.escrows.get_mut(&id).expect("checked").deployed = true;
        self.node_mut(node)?.deployed += 1;
        Ok(())
    }

    /// Blocks since the escrow started, capped at its duration.
    pub fn elapsed(&self, id: EscrowId) -> Result<u64, LedgerError> {
        let e = self.escrows.get(&id).ok_or(LedgerError::UnknownEscrow(id))?;
        Ok((self.height - e.start).min(e.duration))
    }

    /// Renewal: extends the escrow by `extra_duration` blocks and adds
    /// `extra_fee` from the owner.
    pub fn top_up_escrow(&mut self, id: EscrowId, extra_fee: u64, extra_duration: u64) -> Result<(), LedgerError> {
        let owner = self.open_escrow_mut(id)?.owner.clone();
        self.debit(&owner, extra_fee)?;
        let e = self.open_escrow_mut(id)?;
        let old_end = e.start + e.duration;
        e.fee += extra_fee;
        e.duration += extra_duration;
        let new_end = e.start + e.duration;
        self.open.remove(&(old_end, id));
        self.open.insert((new_end, id));
        Ok(())
    }

    fn close_escrow(&mut self, id: EscrowId, state: EscrowState, owner_refund: Option<u64>, miner: u64, seized: u64) {
        let e = self.escrows.get_mut(&id).expect("caller checked");
        e.state = state;
        self.open.remove(&(e.start + e.duration, id));
        let (owner_id, miner_id, deployed) = (e.owner.clone(), e.miner.clone(), e.deployed);
        if let Some(refund) = owner_refund {
            self.credit(&owner_id, refund);
        }
        self.credit(&miner_id, miner);
        self.seized_pool += seized;
        if deployed {
            if let Some(n) = self.nodes.get_mut(&miner_id) {
                n.deployed = n.deployed.saturating_sub(1);
            }
        }
    }

    pub fn settle_revocation(&mut self, id: EscrowId, t: u64) -> Result<RevocationPayout, LedgerError> {
        let e = self.open_escrow_mut(id)?;
        let payout = revocation_payout(e.fee, e.duration, e.collateral, t)?;
        self.close_escrow(id, EscrowState::Revoked, Some(payout.owner), payout.miner, payout.seized);
        Ok(payout)
    }

    pub fn settle_leak_challenge(&mut self, id: EscrowId, t: u64, challenger: &str) -> Result<LeakPayout, LedgerError> {
        let alpha = self.params.alpha_challenge;
        let e = self.open_escrow_mut(id)?;
        let payout = leak_payout(e.fee, e.duration, e.collateral, t, alpha)?;
        self.credit(challenger, payout.challenger);
        self.close_escrow(id, EscrowState::Leaked, Some(payout.owner), 0, payout.seized);
        Ok(payout)
    }

    pub fn record_payment(&mut self, payer: &str, payee: &str, amount: u64) -> Result<Payment, LedgerError> {
        self.debit(payer, amount)?;
        self.credit(payee, amount);
        let p = Payment { height: self.height, payer: payer.to_string(), payee: payee.to_string(), amount };
        self.payments.push(p.clone());
        Ok(p)
    }

    /// Whether a single payment of at least `min_amount` went from `payer`
    /// to `payee`.
    pub fn payment_observed(&self, payer: &str, payee: &str, min_amount: u64) -> bool {
        self.payments.iter().any(|p| p.payer == payer && p.payee == payee && p.amount >= min_amount)
    }

    /// A passed health check: the node earns rewards again and its
    /// accrual window restarts.
    pub fn mark_check_passed(&mut self, node: &str) -> Result<(), LedgerError> {
        let height = self.height;
        let n = self.node_mut(node)?;
        n.healthy = true;
        n.accrued_since_check = 0;
        n.last_check = height;
        Ok(())
    }

    /// A failed health check: forfeits the average per-block reward since
    /// the last check times `h` to the seized pool. Stake is untouched.
    pub fn forfeit_availability(&mut self, node: &str) -> Result<u64, LedgerError> {
        let (height, h) = (self.height, self.params.h);
        let n = self.node_mut(node)?;
        let blocks = height - n.last_check;
        let owed = if blocks == 0 { 0 } else { (n.accrued_since_check as u128 * h as u128 / blocks as u128) as u64 };
        n.healthy = false;
        n.accrued_since_check = 0;
        n.last_check = height;
        let forfeit = owed.min(self.balance(node));
        self.debit(node, forfeit)?;
        self.seized_pool += forfeit;
        Ok(forfeit)
    }

    /// Splits `amount` (capped by the reward pool) equally among `voters`;
    /// the indivisible remainder stays in the pool.
    pub fn pay_checking_rewards(&mut self, voters: &[AccountId], amount: u64) -> u64 {
        if voters.is_empty() {
            return 0;
        }
        let each = amount.min(self.reward_pool) / voters.len() as u64;
        for v in voters {
            self.credit(v, each);
        }
        self.reward_pool -= each * voters.len() as u64;
        each
    }

    pub fn check_conservation(&self) -> Result<(), LedgerError> {
        let open: u128 =
            self.open.iter().map(|(_, id)| &self.escrows[id]).map(|e| e.fee as u128 + e.collateral as u128).sum();
        let accounted = self.balances.values().map(|&b| b as u128).sum::<u128>()
            + self.nodes.values().map(|n| n.stake as u128).sum::<u128>()
            + open
            + self.seized_pool as u128
            + self.reward_pool as u128;
        if accounted != self.total_supply as u128 {
            return Err(LedgerError::Conservation { supply: self.total_supply, accounted: accounted as u64 });
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&Snapshot { version: STATE_VERSION, ledger: self.clone() }).expect("serializable")
    }

    pub fn from_json(json: &str) -> Result<Self, LedgerError> {
        let corrupt = |e: serde_json::Error| LedgerError::Corrupt(e.to_string());
        let probe: VersionProbe = serde_json::from_str(json).map_err(corrupt)?;
        if probe.version != STATE_VERSION {
            return Err(LedgerError::UnsupportedVersion(probe.version));
        }
        let mut snap: Snapshot = serde_json::from_str(json).map_err(corrupt)?;
        let ledger = &mut snap.ledger;
        ledger.open = ledger
            .escrows
            .values()
            .filter(|e| e.state == EscrowState::Open)
            .map(|e| (e.start + e.duration, e.id))
            .collect();
        snap.ledger.params.validate()?;
        snap.ledger.check_conservation()?;
        Ok(snap.ledger)
    }
}
