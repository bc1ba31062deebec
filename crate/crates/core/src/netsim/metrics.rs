use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ledger::LeakPayout;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SimMetrics {
    pub scenario: String,
    pub seed: u64,
    pub final_height: u64,
    pub nodes: usize,
    /// Per faulty node.
    pub detection: BTreeMap<String, Detection>,
    pub punishments: u64,
    /// Punishments of nodes that were behaving at the time of the check.
    pub wrongful_punishments: u64,
    pub payouts: Payouts,
    /// Fraction of blocks each node was online.
    pub availability: BTreeMap<String, f64>,
    /// Outcomes of scripted requests: `ok` or an error code.
    pub requests: BTreeMap<String, u64>,
    pub reads_ok: u64,
    pub reads_failed: u64,
    /// Successful reads whose bytes differ from what was written.
    pub integrity_failures: u64,
    /// Scripted expectations that did not hold.
    pub unexpected: Vec<String>,
    pub leak_challenges: Vec<LeakRecord>,
    pub collusion: Collusion,
    pub check_interval: CheckInterval,
    pub conservation: Conservation,
    pub event_log_hash: String,
    pub events: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Detection {
    pub faulty_from: u64,
    pub first_checked_round: Option<u64>,
    pub detected_round: Option<u64>,
    pub detected_height: Option<u64>,
    /// Blocks from turning faulty to the punishing tally.
    pub latency_blocks: Option<u64>,
    pub detected_at_first_check: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Payouts {
    pub minted: u64,
    pub owner_refunds: u64,
    pub miner_earnings: u64,
    pub challenger_rewards: u64,
    pub seized: u64,
    pub checking_rewards: u64,
    pub availability_forfeits: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakRecord {
    pub height: u64,
    pub node: String,
    pub policy_id: String,
    pub payout: Option<LeakPayout>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Collusion {
    pub attempts: u64,
    /// Attempts that recovered the plaintext after revocation.
    pub exposures: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckInterval {
    /// Gaps between consecutive checks of the same node, pooled.
    pub gaps: u64,
    pub mean_blocks: f64,
    /// `(N/k)·h`.
    pub expected_blocks: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conservation {
    pub checks: u64,
    pub violations: u64,
    pub expected_supply: u64,
    pub final_supply: u64,
}

impl Conservation {
    pub fn exact(&self) -> bool {
        self.violations == 0 && self.expected_supply == self.final_supply
    }
}
