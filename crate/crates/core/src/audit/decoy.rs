//! Decoy policies: delegation bundles over throwaway keys, deployed exactly
//! like client policies, whose correct outputs the authority can predict.

use rand::{CryptoRng, Rng, RngCore};

use crate::envelope::SigningIdentity;
use crate::group::Ristretto;
use crate::ledger::EscrowId;
use crate::node::{
    publish_policy, Condition, LedgerApi, NodeApi, NodeError, PolicyId, PolicyMaterial, PolicyTerms, ReencryptRequest,
    ReencryptResponse,
};
use crate::pre::{
    delegate, keygen, make_challenge_pack, verify_challenge_entry, ChallengeEntry, ChallengePack, ChallengeVerdict,
    DelegationBundle,
};

#[derive(Clone, Debug)]
pub struct DecoyPolicy {
    pub policy_id: PolicyId,
    pub node: String,
    pub escrow: EscrowId,
    /// Last height at which the node must still serve it.
    pub t_end: u64,
    pub owner: SigningIdentity,
    pub bundle: DelegationBundle<Ristretto>,
    pub pack: ChallengePack<Ristretto>,
}

/// Fresh material for a decoy plus its signing owner.
pub fn make_decoy_material<R: RngCore + CryptoRng>(
    pack_size: usize,
    rng: &mut R,
) -> (PolicyId, SigningIdentity, DelegationBundle<Ristretto>, ChallengePack<Ristretto>) {
    let owner = keygen::<Ristretto, _>(rng);
    let reader = keygen::<Ristretto, _>(rng);
    let bundle = delegate(&owner.secret, &reader.public, rng);
    let pack = make_challenge_pack(&bundle.rekey, &owner.public, pack_size.max(1), rng).expect("non-empty pack");
    let policy_id: PolicyId = rng.gen();
    (policy_id, SigningIdentity::generate(rng), bundle, pack)
}

/// Deploys a new decoy on `node`, paid for by `account`.
pub fn deploy_decoy<R: RngCore + CryptoRng>(
    ledger: &dyn LedgerApi,
    node: &dyn NodeApi,
    terms: &PolicyTerms,
    pack_size: usize,
    rng: &mut R,
) -> Result<DecoyPolicy, NodeError> {
    let (policy_id, owner, bundle, pack) = make_decoy_material(pack_size, rng);
    let start = ledger.head()?.height;
    let terms = PolicyTerms { condition: Condition::Always, ..terms.clone() };
    let escrow = publish_policy(ledger, node, &owner, policy_id, PolicyMaterial::Bundle(bundle.clone()), &terms)?;
    Ok(DecoyPolicy {
        policy_id,
        node: node.node_id().to_string(),
        escrow,
        t_end: start + terms.duration,
        owner,
        bundle,
        pack,
    })
}

impl DecoyPolicy {
    /// An unused challenge entry; the pack is refilled when exhausted so
    /// no input is ever sent twice.
    pub fn next_entry<R: RngCore + CryptoRng>(&mut self, rng: &mut R) -> ChallengeEntry<Ristretto> {
        if self.pack.entries.is_empty() {
            let n = 4;
            self.pack = make_challenge_pack(&self.bundle.rekey, &self.pack.owner_pk, n, rng).expect("non-empty pack");
        }
        self.pack.entries.pop().expect("refilled above")
    }

    /// Sends a challenge input to the node and checks its answer.
    pub fn challenge<R: RngCore + CryptoRng>(&mut self, node: &dyn NodeApi, rng: &mut R) -> Result<(), String> {
        let entry = self.next_entry(rng);
        let resp = node.reencrypt(&ReencryptRequest::new(self.policy_id, &entry.input)).map_err(|e| e.to_string())?;
        check_response(&entry, &self.bundle, &resp)
    }
}

pub fn check_response(
    entry: &ChallengeEntry<Ristretto>,
    bundle: &DelegationBundle<Ristretto>,
    resp: &ReencryptResponse,
) -> Result<(), String> {
    let msg = resp.delegated().map_err(|e| e.to_string())?;
    if msg.wrapped_eph != bundle.wrapped_eph {
        return Err("wrapped ephemeral key altered".into());
    }
    match verify_challenge_entry(entry, &msg.c_e) {
        ChallengeVerdict::Pass => Ok(()),
        ChallengeVerdict::Fail => Err("re-encryption does not match the challenge pack".into()),
    }
}
