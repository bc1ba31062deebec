//! Health checks and challenges.
//!
//! Every `h` blocks a round opens, anchored on the block hash. The anchor
//! picks `⌈√N⌉` nodes to check and the `⌈√N⌉` nodes closest to it (by
//! Hamming distance of key hashes) as the committee. Each committee member
//! runs the ping suite against the checked nodes, commits to a salted
//! verdict vector, and reveals it once the commit window closes. The
//! stake-weighted tally marks nodes healthy or punishes them, and pays the
//! checking fee to the voters who agreed with the outcome.

pub mod decoy;
pub mod ping;
pub mod selection;
pub mod voting;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::group::Ristretto;
use crate::ledger::{AccountId, EscrowState, LeakPayout, LedgerError};
use crate::node::{LedgerApi, LocalNetwork, NodeDirectory, NodeError, PolicyId, PolicyTerms};
use crate::pre::{verify_challenge_entry, ChallengeEntry, ChallengeVerdict, PreCiphertext};
use crate::sym::sha256;
use crate::util::hex32;

pub use decoy::{deploy_decoy, DecoyPolicy};
pub use ping::{run_ping_suite, PingReport, SuiteContext, SuiteSelection, TestOutcome};
pub use selection::{checked_indices, registry, select_checked_set, select_committee};
pub use voting::{commitment, HealthRound, NodeVerdict, Phase, Tally};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AuditError {
    #[error("operation not allowed in the current phase")]
    WrongPhase,
    #[error("reveal does not match the commitment")]
    BadReveal,
    #[error("{0} already voted")]
    DuplicateVote(String),
    #[error("{0} is not on the committee")]
    NotInCommittee(String),
    #[error("no escrow is bound to this policy")]
    UnknownPolicy,
    #[error("invalid audit configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Node(#[from] NodeError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AuditConfig {
    /// Blocks after the round opens during which commitments are accepted.
    pub commit_blocks: u64,
    pub reveal_blocks: u64,
    /// Long-lived decoys deployed through normal selection per round.
    pub decoys_per_round: u32,
    pub decoy_duration: u64,
    pub decoy_fee: u64,
    pub decoy_collateral: u64,
    /// Lifetime of the decoy a voter creates for the create-reencrypt-revoke test.
    pub cycle_duration: u64,
    pub pack_size: usize,
    pub tests: SuiteSelection,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            commit_blocks: 2,
            reveal_blocks: 2,
            decoys_per_round: 1,
            decoy_duration: 500,
            decoy_fee: 0,
            decoy_collateral: 0,
            cycle_duration: 20,
            pack_size: 4,
            tests: SuiteSelection::default(),
        }
    }
}

impl AuditConfig {
    pub fn validate(&self, h: u64) -> Result<(), AuditError> {
        if self.commit_blocks == 0 || self.reveal_blocks == 0 {
            return Err(AuditError::InvalidConfig("commit and reveal windows must be non-empty".into()));
        }
        if self.commit_blocks + self.reveal_blocks > h {
            return Err(AuditError::InvalidConfig("a round must finish before the next one opens".into()));
        }
        if self.decoy_duration == 0 || self.cycle_duration == 0 {
            return Err(AuditError::InvalidConfig("decoy durations must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum AuditEvent {
    RoundOpened {
        round: u64,
        height: u64,
        #[serde(with = "hex32")]
        anchor: [u8; 32],
        checked_set: Vec<AccountId>,
        committee: Vec<AccountId>,
    },
    /// Only reports with a failed test are logged.
    PingFailed {
        round: u64,
        voter: AccountId,
        report: PingReport,
    },
    VoteCommitted {
        round: u64,
        voter: AccountId,
    },
    VoteRevealed {
        round: u64,
        voter: AccountId,
        healthy: Vec<bool>,
    },
    Verdict {
        round: u64,
        height: u64,
        verdict: NodeVerdict,
    },
    Punished {
        round: u64,
        height: u64,
        node: AccountId,
        forfeit: u64,
    },
    CheckingRewards {
        round: u64,
        voters: Vec<AccountId>,
        each: u64,
    },
    DecoyDeployed {
        #[serde(with = "hex32")]
        policy_id: PolicyId,
        node: AccountId,
    },
    LeakChallenge {
        #[serde(with = "hex32")]
        policy_id: PolicyId,
        challenger: AccountId,
        payout: Option<LeakPayout>,
    },
    CorrectnessChallenge {
        #[serde(with = "hex32")]
        policy_id: PolicyId,
        challenger: AccountId,
        payout: Option<LeakPayout>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum ChallengeOutcome {
    Proven(LeakPayout),
    Rejected,
}

/// A committee member's hidden vote between commit and reveal.
struct SealedVote {
    salt: [u8; 32],
    healthy: Vec<bool>,
}

pub struct AuditAuthority {
    config: AuditConfig,
    /// Account that pays for decoys.
    account: AccountId,
    rng: ChaCha20Rng,
    next_round: u64,
    rounds: BTreeMap<u64, HealthRound>,
    sealed: BTreeMap<(u64, AccountId), SealedVote>,
    decoys: Vec<DecoyPolicy>,
    events: Vec<AuditEvent>,
}

impl AuditAuthority {
    pub fn new(config: AuditConfig, account: impl Into<AccountId>, seed: u64) -> Self {
        AuditAuthority {
            config,
            account: account.into(),
            rng: ChaCha20Rng::seed_from_u64(seed),
            next_round: 1,
            rounds: BTreeMap::new(),
            sealed: BTreeMap::new(),
            decoys: Vec::new(),
            events: Vec::new(),
        }
    }

    pub fn config(&self) -> &AuditConfig {
        &self.config
    }

    pub fn events(&self) -> &[AuditEvent] {
        &self.events
    }

    /// Removes and returns the events logged so far.
    pub fn drain_events(&mut self) -> Vec<AuditEvent> {
        std::mem::take(&mut self.events)
    }

    pub fn decoys(&self) -> &[DecoyPolicy] {
        &self.decoys
    }

    pub fn round(&self, id: u64) -> Option<&HealthRound> {
        self.rounds.get(&id)
    }

    /// Drives the protocol for the block just sealed: opens a round when
    /// the height is a multiple of `h`, reveals and tallies rounds whose
    /// windows have come.
    pub fn on_block(&mut self, net: &LocalNetwork, directory: &dyn NodeDirectory) -> Result<(), AuditError> {
        let block = net.head()?;
        let height = block.height;
        let h = net.lock().params().h;
        if height > 0 && height % h == 0 {
            self.open_round(net, directory, height, block.hash)?;
            self.deploy_decoys(net, directory, self.config.decoys_per_round);
        }
        let due_reveal: Vec<u64> = self
            .rounds
            .values()
            .filter(|r| r.phase_at(height) == Some(Phase::Reveal) && r.reveals() == 0)
            .map(|r| r.round_id)
            .collect();
        for id in due_reveal {
            self.reveal_all(id, height)?;
        }
        let due_tally: Vec<u64> = self
            .rounds
            .values()
            .filter(|r| r.phase_at(height).is_none() && height >= r.tally_height())
            .map(|r| r.round_id)
            .collect();
        for id in due_tally {
            self.tally(net, id, height)?;
        }
        self.decoys.retain(|d| d.t_end > height);
        Ok(())
    }

    fn open_round(
        &mut self,
        net: &LocalNetwork,
        directory: &dyn NodeDirectory,
        height: u64,
        anchor: [u8; 32],
    ) -> Result<(), AuditError> {
        let reg = registry(&net.lock());
        if reg.is_empty() {
            return Ok(());
        }
        let ids: Vec<AccountId> = reg.iter().map(|(id, _)| id.clone()).collect();
        let checked_set = select_checked_set(&ids, &anchor);
        let committee = select_committee(&reg, &anchor);
        let round_id = self.next_round;
        self.next_round += 1;
        let mut round = HealthRound::new(
            round_id,
            height,
            anchor,
            checked_set.clone(),
            committee.clone(),
            self.config.commit_blocks,
            self.config.reveal_blocks,
        );
        self.events.push(AuditEvent::RoundOpened { round: round_id, height, anchor, checked_set, committee });

        for voter in round.committee.clone() {
            if !directory.participates(&voter) {
                continue;
            }
            let healthy = self.judge(net, directory, round_id, &voter, &round.checked_set);
            let salt: [u8; 32] = self.rng.gen();
            round.commit(height, &voter, commitment(&salt, &healthy))?;
            self.events.push(AuditEvent::VoteCommitted { round: round_id, voter: voter.clone() });
            self.sealed.insert((round_id, voter), SealedVote { salt, healthy });
        }
        self.rounds.insert(round_id, round);
        Ok(())
    }

    /// One committee member's verdicts. Its own slot is filled with
    /// "healthy" without testing; the tally ignores it anyway.
    fn judge(
        &mut self,
        net: &LocalNetwork,
        directory: &dyn NodeDirectory,
        round: u64,
        voter: &str,
        checked: &[AccountId],
    ) -> Vec<bool> {
        let ctx = SuiteContext {
            ledger: net,
            directory,
            voter,
            tests: self.config.tests,
            cycle_terms: PolicyTerms {
                owner_account: voter.to_string(),
                duration: self.config.cycle_duration,
                fee: 0,
                collateral: 0,
                condition: Default::default(),
            },
            pack_size: self.config.pack_size,
        };
        let mut out = Vec::with_capacity(checked.len());
        for target in checked {
            if target == voter {
                out.push(true);
                continue;
            }
            let decoy = self.decoys.iter_mut().find(|d| d.node == *target);
            let report = run_ping_suite(&ctx, target, decoy, &mut self.rng);
            let healthy = report.healthy();
            if !healthy {
                self.events.push(AuditEvent::PingFailed { round, voter: voter.to_string(), report });
            }
            out.push(healthy);
        }
        out
    }

    fn reveal_all(&mut self, round_id: u64, height: u64) -> Result<(), AuditError> {
        let round = self.rounds.get_mut(&round_id).expect("listed by caller");
        let keys: Vec<(u64, AccountId)> = self
            .sealed
            .range((round_id, String::new())..)
            .take_while(|(k, _)| k.0 == round_id)
            .map(|(k, _)| k.clone())
            .collect();
        for key in keys {
            let vote = self.sealed.remove(&key).expect("listed above");
            round.reveal(height, &key.1, &vote.salt, &vote.healthy)?;
            self.events.push(AuditEvent::VoteRevealed { round: round_id, voter: key.1, healthy: vote.healthy });
        }
        Ok(())
    }

    fn tally(&mut self, net: &LocalNetwork, round_id: u64, height: u64) -> Result<(), AuditError> {
        let mut round = self.rounds.remove(&round_id).expect("listed by caller");
        let mut ledger = net.lock();
        let tally = round.tally(height, |v| ledger.node(v).map_or(0, |n| n.stake))?;
        for verdict in &tally.verdicts {
            if verdict.healthy {
                ledger.mark_check_passed(&verdict.node)?;
            } else {
                let forfeit = ledger.forfeit_availability(&verdict.node)?;
                self.events.push(AuditEvent::Punished { round: round_id, height, node: verdict.node.clone(), forfeit });
            }
            self.events.push(AuditEvent::Verdict { round: round_id, height, verdict: verdict.clone() });
        }
        let fee = ledger.params().checking_fee;
        let each = ledger.pay_checking_rewards(&tally.majority_voters, fee);
        if !tally.majority_voters.is_empty() {
            self.events.push(AuditEvent::CheckingRewards { round: round_id, voters: tally.majority_voters, each });
        }
        Ok(())
    }

    /// Deploys `count` decoys, each on the node the ledger selects for its
    /// policy id, exactly as a client would.
    pub fn deploy_decoys(&mut self, net: &LocalNetwork, directory: &dyn NodeDirectory, count: u32) -> Vec<PolicyId> {
        let mut deployed = Vec::new();
        for _ in 0..count {
            let probe: PolicyId = self.rng.gen();
            let Ok(node_id) = net.lock().select_node(&probe, &[]) else { break };
            let Some(node) = directory.node(&node_id, &self.account) else { continue };
            let terms = PolicyTerms {
                owner_account: self.account.clone(),
                duration: self.config.decoy_duration,
                fee: self.config.decoy_fee,
                collateral: self.config.decoy_collateral,
                condition: Default::default(),
            };
            // Refusals (quota, funds, offline) just mean fewer decoys.
            if let Ok(decoy) = deploy_decoy(net, node.as_ref(), &terms, self.config.pack_size, &mut self.rng) {
                self.events.push(AuditEvent::DecoyDeployed { policy_id: decoy.policy_id, node: node_id });
                deployed.push(decoy.policy_id);
                self.decoys.push(decoy);
            }
        }
        deployed
    }

    /// Leak challenge: `evidence` is the canonical material encoding. When
    /// its hash matches the one registered for the policy, the escrow is
    /// settled in the challenger's favour.
    pub fn file_leak_challenge(
        &mut self,
        net: &LocalNetwork,
        policy_id: &PolicyId,
        evidence: &[u8],
        challenger: &str,
    ) -> Result<ChallengeOutcome, AuditError> {
        let mut ledger = net.lock();
        let escrow = ledger.escrow_for_policy(policy_id).ok_or(AuditError::UnknownPolicy)?.clone();
        if escrow.state != EscrowState::Open {
            return Err(LedgerError::AlreadySettled(escrow.id).into());
        }
        let outcome = if escrow.material_hash == Some(sha256(&[evidence])) {
            let t = ledger.elapsed(escrow.id)?;
            ChallengeOutcome::Proven(ledger.settle_leak_challenge(escrow.id, t, challenger)?)
        } else {
            ChallengeOutcome::Rejected
        };
        let payout = match outcome {
            ChallengeOutcome::Proven(p) => Some(p),
            ChallengeOutcome::Rejected => None,
        };
        self.events.push(AuditEvent::LeakChallenge {
            policy_id: *policy_id,
            challenger: challenger.to_string(),
            payout,
        });
        Ok(outcome)
    }

    /// Correctness challenge: a published challenge entry and the node's
    /// observed output for it. A mismatch settles the escrow like a proven
    /// leak.
    pub fn file_correctness_challenge(
        &mut self,
        net: &LocalNetwork,
        policy_id: &PolicyId,
        entry: &ChallengeEntry<Ristretto>,
        observed: &PreCiphertext<Ristretto>,
        challenger: &str,
    ) -> Result<ChallengeOutcome, AuditError> {
        let mut ledger = net.lock();
        let escrow = ledger.escrow_for_policy(policy_id).ok_or(AuditError::UnknownPolicy)?.clone();
        if escrow.state != EscrowState::Open {
            return Err(LedgerError::AlreadySettled(escrow.id).into());
        }
        let outcome = match verify_challenge_entry(entry, observed) {
            ChallengeVerdict::Pass => ChallengeOutcome::Rejected,
            ChallengeVerdict::Fail => {
                let t = ledger.elapsed(escrow.id)?;
                ChallengeOutcome::Proven(ledger.settle_leak_challenge(escrow.id, t, challenger)?)
            }
        };
        let payout = match outcome {
            ChallengeOutcome::Proven(p) => Some(p),
            ChallengeOutcome::Rejected => None,
        };
        self.events.push(AuditEvent::CorrectnessChallenge {
            policy_id: *policy_id,
            challenger: challenger.to_string(),
            payout,
        });
        Ok(outcome)
    }
}

/// Mean number of blocks between two checks of the same node when each
/// round checks `⌈√n⌉` of `n` nodes every `h` blocks: `(n/k)·h`.
pub fn expected_check_interval(n: u64, h: u64) -> f64 {
    n as f64 / crate::util::ceil_sqrt(n) as f64 * h as f64
}
