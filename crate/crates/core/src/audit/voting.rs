//! Commit-reveal voting on the health of the checked nodes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::AuditError;
use crate::ledger::AccountId;
use crate::sym::sha256;
use crate::util::hex32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Commit,
    Reveal,
    Tallied,
}

/// One verdict byte per checked node, 1 for healthy.
pub fn verdict_bytes(healthy: &[bool]) -> Vec<u8> {
    healthy.iter().map(|&h| h as u8).collect()
}

pub fn commitment(salt: &[u8; 32], healthy: &[bool]) -> [u8; 32] {
    sha256(&[salt, &verdict_bytes(healthy)])
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeVerdict {
    pub node: AccountId,
    pub healthy: bool,
    pub weight_healthy: u64,
    pub weight_unhealthy: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub verdicts: Vec<NodeVerdict>,
    /// Revealed voters that sided with the outcome on every node they were
    /// allowed to judge.
    pub majority_voters: Vec<AccountId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealthRound {
    pub round_id: u64,
    /// Height at which the round opened.
    pub opened: u64,
    #[serde(with = "hex32")]
    pub anchor: [u8; 32],
    pub checked_set: Vec<AccountId>,
    pub committee: Vec<AccountId>,
    pub commit_blocks: u64,
    pub reveal_blocks: u64,
    #[serde(skip)]
    commits: BTreeMap<AccountId, [u8; 32]>,
    #[serde(skip)]
    reveals: BTreeMap<AccountId, Vec<bool>>,
    tallied: bool,
}

impl HealthRound {
    pub fn new(
        round_id: u64,
        opened: u64,
        anchor: [u8; 32],
        checked_set: Vec<AccountId>,
        committee: Vec<AccountId>,
        commit_blocks: u64,
        reveal_blocks: u64,
    ) -> Self {
        HealthRound {
            round_id,
            opened,
            anchor,
            checked_set,
            committee,
            commit_blocks,
            reveal_blocks,
            commits: BTreeMap::new(),
            reveals: BTreeMap::new(),
            tallied: false,
        }
    }

    pub fn reveal_start(&self) -> u64 {
        self.opened + self.commit_blocks
    }

    pub fn tally_height(&self) -> u64 {
        self.reveal_start() + self.reveal_blocks
    }

    /// `None` before the round opens or after the reveal window closes
    /// without a tally.
    pub fn phase_at(&self, height: u64) -> Option<Phase> {
        if self.tallied {
            Some(Phase::Tallied)
        } else if height < self.opened || height >= self.tally_height() {
            None
        } else if height < self.reveal_start() {
            Some(Phase::Commit)
        } else {
            Some(Phase::Reveal)
        }
    }

    fn member(&self, voter: &str) -> Result<(), AuditError> {
        if self.committee.iter().any(|c| c == voter) {
            Ok(())
        } else {
            Err(AuditError::NotInCommittee(voter.to_string()))
        }
    }

    pub fn commit(&mut self, height: u64, voter: &str, commitment: [u8; 32]) -> Result<(), AuditError> {
        if self.phase_at(height) != Some(Phase::Commit) {
            return Err(AuditError::WrongPhase);
        }
        self.member(voter)?;
        if self.commits.contains_key(voter) {
            return Err(AuditError::DuplicateVote(voter.to_string()));
        }
        self.commits.insert(voter.to_string(), commitment);
        Ok(())
    }

    pub fn reveal(&mut self, height: u64, voter: &str, salt: &[u8; 32], healthy: &[bool]) -> Result<(), AuditError> {
        if self.phase_at(height) != Some(Phase::Reveal) {
            return Err(AuditError::WrongPhase);
        }
        self.member(voter)?;
        if self.reveals.contains_key(voter) {
            return Err(AuditError::DuplicateVote(voter.to_string()));
        }
        let committed = self.commits.get(voter).ok_or(AuditError::BadReveal)?;
        if healthy.len() != self.checked_set.len() || commitment(salt, healthy) != *committed {
            return Err(AuditError::BadReveal);
        }
        self.reveals.insert(voter.to_string(), healthy.to_vec());
        Ok(())
    }

    /// Stake-weighted strict majority per checked node. Unrevealed commits
    /// abstain, a node's vote on itself is ignored, and a tie or an empty
    /// vote leaves the node healthy.
    pub fn tally(&mut self, height: u64, stake: impl Fn(&str) -> u64) -> Result<Tally, AuditError> {
        if self.tallied || height < self.tally_height() {
            return Err(AuditError::WrongPhase);
        }
        self.tallied = true;
        let mut verdicts = Vec::with_capacity(self.checked_set.len());
        for (j, node) in self.checked_set.iter().enumerate() {
            let (mut up, mut down) = (0u64, 0u64);
            for (voter, votes) in &self.reveals {
                if voter == node {
                    continue;
                }
                if votes[j] {
                    up += stake(voter);
                } else {
                    down += stake(voter);
                }
            }
            verdicts.push(NodeVerdict {
                node: node.clone(),
                healthy: down <= up,
                weight_healthy: up,
                weight_unhealthy: down,
            });
        }
        let majority_voters = self
            .reveals
            .iter()
            .filter(|(voter, votes)| {
                verdicts.iter().zip(votes.iter()).all(|(v, &vote)| v.node == **voter || v.healthy == vote)
            })
            .map(|(voter, _)| voter.clone())
            .collect();
        Ok(Tally { verdicts, majority_voters })
    }

    pub fn commits(&self) -> usize {
        self.commits.len()
    }

    pub fn reveals(&self) -> usize {
        self.reveals.len()
    }
}
