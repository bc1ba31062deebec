//! Re-encryption node: holds policies (rekeys, delegation bundles or key
//! shares), enforces their windows and conditions, and transforms EDEKs.
//!
//! The node never sees a secret key, a DEK or plaintext; its inputs and
//! outputs are PRE ciphertexts only.

pub mod api;
pub mod condition;
pub mod http;
pub mod store;
pub mod types;

use std::collections::BTreeMap;
use std::sync::{Mutex, RwLock};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::group::{Element, Ristretto};
use crate::ledger::{EscrowState, Ledger, LedgerError, RevocationPayout};
use crate::pre::{apply_share, reencrypt, reencrypt_delegated, PreCiphertext, PreError};

pub use api::{
    publish_policy, HttpDirectory, HttpLedger, HttpNode, LedgerApi, LocalNetwork, LocalNode, NodeApi, NodeDirectory,
    PolicyTerms,
};
pub use condition::Condition;
pub use store::{PolicyStore, StoreError};
pub use types::*;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NodeError {
    #[error("unknown policy")]
    UnknownPolicy,
    #[error("outside the policy's validity window")]
    OutsideWindow,
    #[error("policy condition is not met")]
    ConditionFalse,
    #[error("policy was revoked")]
    Revoked,
    #[error("owner authentication failed")]
    BadAuth,
    #[error("node quota exceeded")]
    QuotaExceeded,
    #[error("policy id already deployed")]
    DuplicatePolicy,
    #[error("no open escrow pays this node for the policy")]
    NoEscrow,
    #[error("windows can only be extended")]
    WindowShrink,
    #[error("node is offline")]
    Offline,
    #[error("malformed request: {0}")]
    Malformed(String),
    #[error("storage failure: {0}")]
    Storage(String),
    #[error("network failure: {0}")]
    Network(String),
    #[error("ledger rejected the operation ({code}): {message}")]
    Ledger { code: String, message: String },
}

impl NodeError {
    pub fn code(&self) -> &str {
        match self {
            NodeError::UnknownPolicy => "UnknownPolicy",
            NodeError::OutsideWindow => "OutsideWindow",
            NodeError::ConditionFalse => "ConditionFalse",
            NodeError::Revoked => "Revoked",
            NodeError::BadAuth => "BadAuth",
            NodeError::QuotaExceeded => "QuotaExceeded",
            NodeError::DuplicatePolicy => "DuplicatePolicy",
            NodeError::NoEscrow => "NoEscrow",
            NodeError::WindowShrink => "WindowShrink",
            NodeError::Offline => "Offline",
            NodeError::Malformed(_) => "Malformed",
            NodeError::Storage(_) => "Storage",
            NodeError::Network(_) => "Network",
            NodeError::Ledger { code, .. } => code,
        }
    }

    /// Inverse of [`NodeError::code`] for errors received over the wire.
    pub fn from_code(code: &str, message: String) -> Self {
        match code {
            "UnknownPolicy" => NodeError::UnknownPolicy,
            "OutsideWindow" => NodeError::OutsideWindow,
            "ConditionFalse" => NodeError::ConditionFalse,
            "Revoked" => NodeError::Revoked,
            "BadAuth" => NodeError::BadAuth,
            "QuotaExceeded" => NodeError::QuotaExceeded,
            "DuplicatePolicy" => NodeError::DuplicatePolicy,
            "NoEscrow" => NodeError::NoEscrow,
            "WindowShrink" => NodeError::WindowShrink,
            "Offline" => NodeError::Offline,
            "Malformed" => NodeError::Malformed(message),
            "Storage" => NodeError::Storage(message),
            "Network" => NodeError::Network(message),
            other => NodeError::Ledger { code: other.to_string(), message },
        }
    }
}

impl From<PreError> for NodeError {
    fn from(e: PreError) -> Self {
        NodeError::Malformed(e.to_string())
    }
}

impl From<StoreError> for NodeError {
    fn from(e: StoreError) -> Self {
        NodeError::Storage(e.to_string())
    }
}

impl From<LedgerError> for NodeError {
    fn from(e: LedgerError) -> Self {
        match e {
            LedgerError::QuotaExceeded { .. } => NodeError::QuotaExceeded,
            other => NodeError::Ledger { code: other.code().to_string(), message: other.to_string() },
        }
    }
}

/// Fault injection for simulation and tests.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum Behavior {
    #[default]
    Honest,
    /// Refuses every request.
    Offline,
    /// Answers re-encryption requests with random group elements.
    RandomOutput,
    /// Honest only towards the given request origin.
    CheatExcept(String),
    /// Colluder: keeps a private copy of material it is told to erase.
    Retain,
}

pub struct Node {
    id: String,
    public_key: [u8; 32],
    store: RwLock<PolicyStore>,
    behavior: Mutex<Behavior>,
    rng: Mutex<ChaCha20Rng>,
    retained: Mutex<BTreeMap<PolicyId, PolicyMaterial>>,
}

impl std::fmt::Debug for Node {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Node").field("id", &self.id).finish_non_exhaustive()
    }
}

fn random_element(rng: &Mutex<ChaCha20Rng>) -> Element<Ristretto> {
    Element::random(&mut *rng.lock().expect("rng lock"))
}

impl Node {
    pub fn new(id: impl Into<String>, public_key: [u8; 32], store: PolicyStore) -> Self {
        let seed = u64::from_be_bytes(public_key[..8].try_into().expect("8 bytes"));
        Node {
            id: id.into(),
            public_key,
            store: RwLock::new(store),
            behavior: Mutex::new(Behavior::Honest),
            rng: Mutex::new(ChaCha20Rng::seed_from_u64(seed)),
            retained: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn public_key(&self) -> &[u8; 32] {
        &self.public_key
    }

    pub fn set_behavior(&self, behavior: Behavior) {
        *self.behavior.lock().expect("behavior lock") = behavior;
    }

    pub fn behavior(&self) -> Behavior {
        self.behavior.lock().expect("behavior lock").clone()
    }

    fn online(&self) -> Result<(), NodeError> {
        match self.behavior() {
            Behavior::Offline => Err(NodeError::Offline),
            _ => Ok(()),
        }
    }

    pub fn with_store<T>(&self, f: impl FnOnce(&PolicyStore) -> T) -> T {
        f(&self.store.read().expect("store lock"))
    }

    pub fn ping(&self, ledger: &Ledger) -> Result<PingInfo, NodeError> {
        self.online()?;
        Ok(PingInfo { node_id: self.id.clone(), height: ledger.height() })
    }

    pub fn deploy_policy(&self, ledger: &mut Ledger, req: DeployRequest) -> Result<(), NodeError> {
        self.online()?;
        if req.window.t_start > req.window.t_end {
            return Err(NodeError::Malformed("window ends before it starts".into()));
        }
        let mut store = self.store.write().expect("store lock");
        if store.get(&req.policy_id).is_some() {
            return Err(NodeError::DuplicatePolicy);
        }
        match ledger.escrow(req.escrow_ref) {
            Some(e) if e.state == EscrowState::Open && e.miner == self.id => {}
            _ => return Err(NodeError::NoEscrow),
        }
        ledger.register_deployment(req.escrow_ref, &self.id)?;
        store.insert(PolicyRecord {
            policy_id: req.policy_id,
            owner: req.owner,
            material: Some(req.material),
            window: req.window,
            condition: req.condition,
            escrow_ref: req.escrow_ref,
            status: PolicyStatus::Active,
            last_nonce: 0,
        })?;
        Ok(())
    }

    /// Re-encrypts under the policy's material. `origin` identifies the
    /// requester's address (only fault injection looks at it).
    pub fn handle_reencrypt(
        &self,
        ledger: &Ledger,
        origin: &str,
        req: &ReencryptRequest,
    ) -> Result<ReencryptResponse, NodeError> {
        self.online()?;
        let height = ledger.height();
        let material = {
            let store = self.store.read().expect("store lock");
            let rec = store.get(&req.policy_id).ok_or(NodeError::UnknownPolicy)?;
            match rec.status {
                PolicyStatus::Revoked => return Err(NodeError::Revoked),
                PolicyStatus::Expired => return Err(NodeError::OutsideWindow),
                PolicyStatus::Active => {}
            }
            if height < rec.window.t_start {
                return Err(NodeError::OutsideWindow);
            }
            if height > rec.window.t_end {
                None
            } else {
                if !rec.condition.eval(ledger) {
                    return Err(NodeError::ConditionFalse);
                }
                rec.material.clone()
            }
        };
        let Some(material) = material else {
            // No future height can satisfy the window: drop the material now.
            self.expire(req.policy_id)?;
            return Err(NodeError::OutsideWindow);
        };
        let ct = PreCiphertext::<Ristretto>::from_bytes(&req.ciphertext)?;
        let cheat = match self.behavior() {
            Behavior::RandomOutput => true,
            Behavior::CheatExcept(allowed) => allowed != origin,
            _ => false,
        };
        Ok(match material {
            PolicyMaterial::ReKey(rk) => {
                let mut out = reencrypt(&rk, &ct);
                if cheat {
                    out.c2 = random_element(&self.rng);
                }
                ReencryptResponse::Ciphertext(out.to_bytes())
            }
            PolicyMaterial::Bundle(bundle) => {
                let mut out = reencrypt_delegated(&bundle, &ct);
                if cheat {
                    out.c_e.c2 = random_element(&self.rng);
                }
                ReencryptResponse::Delegated(out.to_bytes())
            }
            PolicyMaterial::Share(share) => {
                let mut out = apply_share(&share, &ct);
                if cheat {
                    out.c2_part = random_element(&self.rng);
                }
                ReencryptResponse::Partial(out.to_bytes())
            }
        })
    }

    fn erase(&self, store: &mut PolicyStore, id: PolicyId, revoke_nonce: Option<u64>) -> Result<(), NodeError> {
        if self.behavior() == Behavior::Retain {
            if let Some(m) = store.get(&id).and_then(|r| r.material.clone()) {
                self.retained.lock().expect("retained lock").insert(id, m);
            }
        }
        match revoke_nonce {
            Some(nonce) => store.revoke(id, nonce)?,
            None => store.expire(id)?,
        }
        Ok(())
    }

    fn expire(&self, id: PolicyId) -> Result<(), NodeError> {
        let mut store = self.store.write().expect("store lock");
        if store.get(&id).is_some_and(|r| r.status == PolicyStatus::Active) {
            self.erase(&mut store, id, None)?;
        }
        Ok(())
    }

    fn authorize(rec: &PolicyRecord, auth: &OwnerAuth, op: OwnerOp) -> Result<(), NodeError> {
        auth.verify(&rec.owner, &rec.policy_id, op)?;
        if auth.nonce <= rec.last_nonce {
            return Err(NodeError::BadAuth);
        }
        Ok(())
    }

    /// Erases the material and settles the escrow. Returns `None` when the
    /// escrow had already been settled by other means.
    pub fn revoke_policy(
        &self,
        ledger: &mut Ledger,
        req: &RevokeRequest,
    ) -> Result<Option<RevocationPayout>, NodeError> {
        self.online()?;
        let mut store = self.store.write().expect("store lock");
        let rec =
            store.get(&req.policy_id).filter(|r| r.status == PolicyStatus::Active).ok_or(NodeError::UnknownPolicy)?;
        Self::authorize(rec, &req.auth, OwnerOp::Revoke)?;
        let escrow = rec.escrow_ref;
        self.erase(&mut store, req.policy_id, Some(req.auth.nonce))?;
        drop(store);
        let t = ledger.elapsed(escrow)?;
        match ledger.settle_revocation(escrow, t) {
            Ok(p) => Ok(Some(p)),
            Err(LedgerError::AlreadySettled(_)) => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    pub fn renew_policy(&self, ledger: &mut Ledger, req: &RenewRequest) -> Result<(), NodeError> {
        self.online()?;
        let mut store = self.store.write().expect("store lock");
        let rec =
            store.get(&req.policy_id).filter(|r| r.status == PolicyStatus::Active).ok_or(NodeError::UnknownPolicy)?;
        let op = OwnerOp::Renew { t_end: req.t_end, extra_fee: req.extra_fee };
        Self::authorize(rec, &req.auth, op)?;
        if ledger.height() > rec.window.t_end {
            self.erase(&mut store, req.policy_id, None)?;
            return Err(NodeError::UnknownPolicy);
        }
        if req.t_end < rec.window.t_end {
            return Err(NodeError::WindowShrink);
        }
        let extra = req.t_end - rec.window.t_end;
        ledger.top_up_escrow(rec.escrow_ref, req.extra_fee, extra)?;
        store.renew(req.policy_id, req.t_end, req.auth.nonce)?;
        Ok(())
    }

    pub fn list_policies(&self, req: &ListRequest) -> Result<Vec<PolicyMeta>, NodeError> {
        self.online()?;
        req.auth.verify(&req.owner, &req.owner, OwnerOp::List)?;
        let store = self.store.read().expect("store lock");
        Ok(store.records().filter(|r| r.owner == req.owner).map(PolicyMeta::from).collect())
    }

    /// Expiry sweep, run on every new block. Returns the policies expired.
    pub fn on_block(&self, height: u64) -> Result<Vec<PolicyId>, NodeError> {
        let mut store = self.store.write().expect("store lock");
        let due: Vec<PolicyId> = store
            .records()
            .filter(|r| r.status == PolicyStatus::Active && r.window.t_end < height)
            .map(|r| r.policy_id)
            .collect();
        for id in &due {
            self.erase(&mut store, *id, None)?;
        }
        Ok(due)
    }

    /// The canonical material bytes the node holds or has retained for a
    /// policy. Models a node handing its material to a third party.
    pub fn leak_material(&self, id: &PolicyId) -> Option<Vec<u8>> {
        let held =
            self.store.read().expect("store lock").get(id).and_then(|r| r.material.as_ref().map(|m| m.to_bytes()));
        held.or_else(|| self.retained.lock().expect("retained lock").get(id).map(|m| m.to_bytes()))
    }

    /// What a colluding node computes for its partner after revocation,
    /// bypassing every policy check.
    pub fn collude_reencrypt(&self, req: &ReencryptRequest) -> Option<ReencryptResponse> {
        let material = self.retained.lock().expect("retained lock").get(&req.policy_id).cloned()?;
        let ct = PreCiphertext::<Ristretto>::from_bytes(&req.ciphertext).ok()?;
        Some(match material {
            PolicyMaterial::ReKey(rk) => ReencryptResponse::Ciphertext(reencrypt(&rk, &ct).to_bytes()),
            PolicyMaterial::Bundle(b) => ReencryptResponse::Delegated(reencrypt_delegated(&b, &ct).to_bytes()),
            PolicyMaterial::Share(s) => ReencryptResponse::Partial(apply_share(&s, &ct).to_bytes()),
        })
    }
}

#[cfg(test)]
mod tests;
