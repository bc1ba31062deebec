//! The generalized ping: liveness, an old decoy, a create-reencrypt-revoke
//! cycle, and a re-encryption from an unrelated origin.

use rand::{CryptoRng, Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::decoy::{deploy_decoy, DecoyPolicy};
use crate::ledger::AccountId;
use crate::node::{LedgerApi, NodeApi, NodeDirectory, NodeError, PolicyTerms, ReencryptRequest, RevokeRequest};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteSelection {
    pub old_policy: bool,
    pub create_cycle: bool,
    pub unrelated_origin: bool,
}

impl Default for SuiteSelection {
    fn default() -> Self {
        SuiteSelection { old_policy: true, create_cycle: true, unrelated_origin: true }
    }
}

impl SuiteSelection {
    pub fn liveness_only() -> Self {
        SuiteSelection { old_policy: false, create_cycle: false, unrelated_origin: false }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", content = "detail", rename_all = "snake_case")]
pub enum TestOutcome {
    Pass,
    Fail(String),
    Skipped,
}

impl TestOutcome {
    pub fn failed(&self) -> bool {
        matches!(self, TestOutcome::Fail(_))
    }

    fn from_result(r: Result<(), String>) -> Self {
        match r {
            Ok(()) => TestOutcome::Pass,
            Err(e) => TestOutcome::Fail(e),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PingReport {
    pub node: AccountId,
    pub liveness: TestOutcome,
    pub old_policy: TestOutcome,
    pub create_cycle: TestOutcome,
    pub unrelated_origin: TestOutcome,
}

impl PingReport {
    pub fn healthy(&self) -> bool {
        ![&self.liveness, &self.old_policy, &self.create_cycle, &self.unrelated_origin].iter().any(|t| t.failed())
    }
}

/// Who runs the suite and with which parameters.
pub struct SuiteContext<'a> {
    pub ledger: &'a dyn LedgerApi,
    pub directory: &'a dyn NodeDirectory,
    /// The checking committee member; also its request origin.
    pub voter: &'a str,
    pub tests: SuiteSelection,
    pub cycle_terms: PolicyTerms,
    pub pack_size: usize,
}

fn probe_origin<R: RngCore>(rng: &mut R) -> String {
    format!("probe-{}", hex::encode(rng.gen::<[u8; 8]>()))
}

/// Runs the selected tests against `target`. `old_decoy` is an active decoy
/// the authority holds on the node, if any.
pub fn run_ping_suite<R: RngCore + CryptoRng>(
    ctx: &SuiteContext<'_>,
    target: &str,
    old_decoy: Option<&mut DecoyPolicy>,
    rng: &mut R,
) -> PingReport {
    let mut report = PingReport {
        node: target.to_string(),
        liveness: TestOutcome::Skipped,
        old_policy: TestOutcome::Skipped,
        create_cycle: TestOutcome::Skipped,
        unrelated_origin: TestOutcome::Skipped,
    };
    let Some(node) = ctx.directory.node(target, ctx.voter) else {
        report.liveness = TestOutcome::Fail("unknown node".into());
        return report;
    };
    report.liveness = TestOutcome::from_result(match node.ping() {
        Ok(info) if info.node_id == target => Ok(()),
        Ok(info) => Err(format!("answered as {}", info.node_id)),
        Err(e) => Err(e.to_string()),
    });
    if report.liveness.failed() {
        return report;
    }

    let mut old_decoy = old_decoy;
    if ctx.tests.old_policy {
        if let Some(decoy) = old_decoy.as_deref_mut() {
            report.old_policy = TestOutcome::from_result(decoy.challenge(node.as_ref(), rng));
        }
    }

    let mut unrelated_done = false;
    if ctx.tests.create_cycle {
        match deploy_decoy(ctx.ledger, node.as_ref(), &ctx.cycle_terms, ctx.pack_size, rng) {
            // A full node has not misbehaved; it cannot take the test decoy.
            Err(NodeError::QuotaExceeded) => {}
            Err(e) => report.create_cycle = TestOutcome::Fail(format!("deploy: {e}")),
            Ok(mut decoy) => {
                report.create_cycle = TestOutcome::from_result(cycle(node.as_ref(), &mut decoy, rng, |d, rng| {
                    if ctx.tests.unrelated_origin {
                        unrelated_done = true;
                        report.unrelated_origin = unrelated(ctx, target, d, rng);
                    }
                }));
            }
        }
    }
    if ctx.tests.unrelated_origin && !unrelated_done {
        if let Some(decoy) = old_decoy {
            report.unrelated_origin = unrelated(ctx, target, decoy, rng);
        }
    }
    report
}

fn unrelated<R: RngCore + CryptoRng>(
    ctx: &SuiteContext<'_>,
    target: &str,
    decoy: &mut DecoyPolicy,
    rng: &mut R,
) -> TestOutcome {
    match ctx.directory.node(target, &probe_origin(rng)) {
        Some(stranger) => TestOutcome::from_result(decoy.challenge(stranger.as_ref(), rng)),
        None => TestOutcome::Fail("unknown node".into()),
    }
}

/// Re-encrypts, runs `between` while the decoy is live, revokes, and checks
/// that the node then refuses.
fn cycle<R: RngCore + CryptoRng>(
    node: &dyn NodeApi,
    decoy: &mut DecoyPolicy,
    rng: &mut R,
    between: impl FnOnce(&mut DecoyPolicy, &mut R),
) -> Result<(), String> {
    let served = decoy.challenge(node, rng);
    between(decoy, rng);
    let revoked =
        node.revoke(&RevokeRequest::new(&decoy.owner, decoy.policy_id, 1)).map_err(|e| format!("revoke: {e}"));
    served?;
    revoked?;
    let entry = decoy.next_entry(rng);
    match node.reencrypt(&ReencryptRequest::new(decoy.policy_id, &entry.input)) {
        Err(NodeError::Revoked) => Ok(()),
        Err(e) => Err(format!("after revocation: {e}")),
        Ok(_) => Err("served after revocation".into()),
    }
}
