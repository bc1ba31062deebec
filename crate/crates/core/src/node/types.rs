//! Policy records and the request/response shapes shared by the in-process
//! handlers and the HTTP API.

use ed25519_dalek::{Signature, Verifier, VerifyingKey};
use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

use super::condition::Condition;
use super::NodeError;
use crate::envelope::SigningIdentity;
use crate::group::Ristretto;
use crate::ledger::EscrowId;
use crate::pre::{
    DelegationBundle, PartialReencryption, PreCiphertext, PreError, ReKey, ReKeyShare, ReencryptedMessage,
};
use crate::sym::sha256;
use crate::util::{b64, hex32};

pub type PolicyId = [u8; 32];

/// Re-encryption material a node may hold. Canonical encoding: one tag
/// byte (1 rekey, 2 bundle, 3 share) followed by the PRE encoding.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PolicyMaterial {
    ReKey(ReKey<Ristretto>),
    Bundle(DelegationBundle<Ristretto>),
    Share(ReKeyShare<Ristretto>),
}

impl PolicyMaterial {
    pub fn to_bytes(&self) -> Vec<u8> {
        let (tag, body) = match self {
            PolicyMaterial::ReKey(k) => (1u8, k.to_bytes()),
            PolicyMaterial::Bundle(b) => (2, b.to_bytes()),
            PolicyMaterial::Share(s) => (3, s.to_bytes()),
        };
        let mut out = vec![tag];
        out.extend(body);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PreError> {
        let (&tag, body) = bytes.split_first().ok_or(PreError::Malformed("empty material"))?;
        match tag {
            1 => ReKey::from_bytes(body).map(PolicyMaterial::ReKey),
            2 => DelegationBundle::from_bytes(body).map(PolicyMaterial::Bundle),
            3 => ReKeyShare::from_bytes(body).map(PolicyMaterial::Share),
            _ => Err(PreError::Malformed("unknown material tag")),
        }
    }

    /// Registered with the escrow; leak challenges are matched against it.
    pub fn hash(&self) -> [u8; 32] {
        sha256(&[&self.to_bytes()])
    }

    pub fn kind(&self) -> MaterialKind {
        match self {
            PolicyMaterial::ReKey(_) => MaterialKind::ReKey,
            PolicyMaterial::Bundle(_) => MaterialKind::Bundle,
            PolicyMaterial::Share(_) => MaterialKind::Share,
        }
    }
}

impl Serialize for PolicyMaterial {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        b64::serialize(&self.to_bytes(), s)
    }
}

impl<'de> Deserialize<'de> for PolicyMaterial {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let bytes = b64::deserialize(d)?;
        PolicyMaterial::from_bytes(&bytes).map_err(D::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaterialKind {
    ReKey,
    Bundle,
    Share,
}

/// Inclusive range of block heights in which re-encryption is allowed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub t_start: u64,
    pub t_end: u64,
}

impl Window {
    pub fn contains(&self, height: u64) -> bool {
        self.t_start <= height && height <= self.t_end
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyStatus {
    Active,
    Revoked,
    Expired,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyRecord {
    #[serde(with = "hex32")]
    pub policy_id: PolicyId,
    /// Owner's ed25519 verifying key.
    #[serde(with = "hex32")]
    pub owner: [u8; 32],
    /// `None` once revoked or expired.
    pub material: Option<PolicyMaterial>,
    pub window: Window,
    pub condition: Condition,
    pub escrow_ref: EscrowId,
    pub status: PolicyStatus,
    /// Highest owner-operation nonce accepted so far.
    pub last_nonce: u64,
}

/// A policy as shown to its owner: everything but the material.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyMeta {
    #[serde(with = "hex32")]
    pub policy_id: PolicyId,
    pub window: Window,
    pub condition: Condition,
    pub escrow_ref: EscrowId,
    pub status: PolicyStatus,
    pub kind: Option<MaterialKind>,
}

impl From<&PolicyRecord> for PolicyMeta {
    fn from(r: &PolicyRecord) -> Self {
        PolicyMeta {
            policy_id: r.policy_id,
            window: r.window,
            condition: r.condition.clone(),
            escrow_ref: r.escrow_ref,
            status: r.status,
            kind: r.material.as_ref().map(PolicyMaterial::kind),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeployRequest {
    #[serde(with = "hex32")]
    pub policy_id: PolicyId,
    #[serde(with = "hex32")]
    pub owner: [u8; 32],
    pub material: PolicyMaterial,
    pub window: Window,
    pub condition: Condition,
    pub escrow_ref: EscrowId,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReencryptRequest {
    #[serde(with = "hex32")]
    pub policy_id: PolicyId,
    /// Canonical encoding of the EDEK.
    #[serde(with = "b64")]
    pub ciphertext: Vec<u8>,
}

impl ReencryptRequest {
    pub fn new(policy_id: PolicyId, edek: &PreCiphertext<Ristretto>) -> Self {
        ReencryptRequest { policy_id, ciphertext: edek.to_bytes() }
    }
}

/// Canonical encoding of the node's output; which one depends on the
/// material the policy holds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data", rename_all = "snake_case")]
pub enum ReencryptResponse {
    Ciphertext(#[serde(with = "b64")] Vec<u8>),
    Delegated(#[serde(with = "b64")] Vec<u8>),
    Partial(#[serde(with = "b64")] Vec<u8>),
}

impl ReencryptResponse {
    pub fn ciphertext(&self) -> Result<PreCiphertext<Ristretto>, NodeError> {
        match self {
            ReencryptResponse::Ciphertext(b) => Ok(PreCiphertext::from_bytes(b)?),
            _ => Err(NodeError::Malformed("expected a ciphertext".into())),
        }
    }

    pub fn delegated(&self) -> Result<ReencryptedMessage<Ristretto>, NodeError> {
        match self {
            ReencryptResponse::Delegated(b) => Ok(ReencryptedMessage::from_bytes(b)?),
            _ => Err(NodeError::Malformed("expected a delegated message".into())),
        }
    }

    pub fn partial(&self) -> Result<PartialReencryption<Ristretto>, NodeError> {
        match self {
            ReencryptResponse::Partial(b) => Ok(PartialReencryption::from_bytes(b)?),
            _ => Err(NodeError::Malformed("expected a partial re-encryption".into())),
        }
    }
}

/// The owner operations that need a signature.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OwnerOp {
    Revoke,
    Renew { t_end: u64, extra_fee: u64 },
    List,
}

impl OwnerOp {
    fn message(&self, subject: &[u8; 32], nonce: u64) -> Vec<u8> {
        let mut m = b"prekms/owner-op/v1".to_vec();
        m.extend(subject);
        match self {
            OwnerOp::Revoke => m.push(1),
            OwnerOp::Renew { t_end, extra_fee } => {
                m.push(2);
                m.extend(t_end.to_be_bytes());
                m.extend(extra_fee.to_be_bytes());
            }
            OwnerOp::List => m.push(3),
        }
        m.extend(nonce.to_be_bytes());
        m
    }
}

/// Signature by the policy owner over `(subject, op, nonce)`; the subject is
/// the policy id, or the owner key for listing.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OwnerAuth {
    pub nonce: u64,
    #[serde(with = "b64")]
    pub signature: Vec<u8>,
}

impl OwnerAuth {
    pub fn sign(identity: &SigningIdentity, subject: &[u8; 32], op: OwnerOp, nonce: u64) -> Self {
        OwnerAuth { nonce, signature: identity.sign(&op.message(subject, nonce)).to_bytes().to_vec() }
    }

    pub fn verify(&self, owner: &[u8; 32], subject: &[u8; 32], op: OwnerOp) -> Result<(), NodeError> {
        let key = VerifyingKey::from_bytes(owner).map_err(|_| NodeError::BadAuth)?;
        let sig = Signature::from_slice(&self.signature).map_err(|_| NodeError::BadAuth)?;
        key.verify(&op.message(subject, self.nonce), &sig).map_err(|_| NodeError::BadAuth)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevokeRequest {
    #[serde(with = "hex32")]
    pub policy_id: PolicyId,
    pub auth: OwnerAuth,
}

impl RevokeRequest {
    pub fn new(identity: &SigningIdentity, policy_id: PolicyId, nonce: u64) -> Self {
        RevokeRequest { policy_id, auth: OwnerAuth::sign(identity, &policy_id, OwnerOp::Revoke, nonce) }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenewRequest {
    #[serde(with = "hex32")]
    pub policy_id: PolicyId,
    pub t_end: u64,
    /// Added to the escrowed fee.
    pub extra_fee: u64,
    pub auth: OwnerAuth,
}

impl RenewRequest {
    pub fn new(identity: &SigningIdentity, policy_id: PolicyId, t_end: u64, extra_fee: u64, nonce: u64) -> Self {
        let auth = OwnerAuth::sign(identity, &policy_id, OwnerOp::Renew { t_end, extra_fee }, nonce);
        RenewRequest { policy_id, t_end, extra_fee, auth }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ListRequest {
    #[serde(with = "hex32")]
    pub owner: [u8; 32],
    pub auth: OwnerAuth,
}

impl ListRequest {
    pub fn new(identity: &SigningIdentity, nonce: u64) -> Self {
        let owner = identity.verifying_key().to_bytes();
        ListRequest { owner, auth: OwnerAuth::sign(identity, &owner, OwnerOp::List, nonce) }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PingInfo {
    pub node_id: String,
    pub height: u64,
}
