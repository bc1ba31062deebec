//! Hierarchical sharing. Every directory and file has its own key pair and
//! every node has a re-encryption key towards its parent. Granting a
//! directory hands out the upward re-encryption keys of its subtree plus a
//! delegation from the directory key to the recipient; any file below it is
//! then reachable by a chain of re-encryptions:
//! `reencrypt(dir→recipient, reencrypt(file→dir, edek_file))`.

use std::collections::BTreeMap;

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

use super::{decrypt_data, encrypt_data, EncryptOptions, Envelope, EnvelopeError};
use crate::group::PrimeGroup;
use crate::pre::{
    delegate, keygen, reencrypt, reencrypt_delegated, rekey, DelegationBundle, KeyPair, PreCiphertext, PreError,
    PublicKey, ReKey, ReencryptedMessage, SecretKey,
};

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum HierarchyError {
    #[error("no such path: {0:?}")]
    UnknownPath(String),
    #[error("{path:?} is not below the shared directory {dir:?}")]
    NotADescendant { path: String, dir: String },
    #[error("sealed hierarchy is corrupt")]
    Corrupt,
    #[error(transparent)]
    Envelope(#[from] EnvelopeError),
}

/// Canonical form: no leading/trailing or repeated slashes; the root is `""`.
pub fn normalize(path: &str) -> String {
    path.split('/').filter(|c| !c.is_empty()).collect::<Vec<_>>().join("/")
}

pub fn parent_of(path: &str) -> Option<String> {
    if path.is_empty() {
        None
    } else {
        Some(path.rsplit_once('/').map(|(p, _)| p.to_string()).unwrap_or_default())
    }
}

/// `true` when `path` equals `dir` or lies below it.
pub fn is_within(path: &str, dir: &str) -> bool {
    dir.is_empty() || path == dir || path.strip_prefix(dir).is_some_and(|rest| rest.starts_with('/'))
}

#[derive(Clone, Debug)]
pub struct HierarchyNode<G: PrimeGroup> {
    pub path: String,
    pub keys: KeyPair<G>,
    pub parent: Option<String>,
}

#[derive(Clone, Debug)]
pub struct Hierarchy<G: PrimeGroup> {
    nodes: BTreeMap<String, HierarchyNode<G>>,
}

/// What the owner hands out when sharing a directory: upward re-encryption
/// keys for every node strictly below `dir`, and the delegation to the
/// recipient.
#[derive(Clone, Debug)]
pub struct DirectoryGrant<G: PrimeGroup> {
    pub dir: String,
    pub upward: BTreeMap<String, ReKey<G>>,
    pub bundle: DelegationBundle<G>,
}

impl<G: PrimeGroup> DirectoryGrant<G> {
    /// Paths whose upward keys must be applied, bottom to top, to move a
    /// ciphertext for `path` under the directory key.
    pub fn chain_for(&self, path: &str) -> Result<Vec<String>, HierarchyError> {
        let path = normalize(path);
        if !is_within(&path, &self.dir) {
            return Err(HierarchyError::NotADescendant { path, dir: self.dir.clone() });
        }
        let mut chain = Vec::new();
        let mut cur = path.clone();
        while cur != self.dir {
            if !self.upward.contains_key(&cur) {
                return Err(HierarchyError::NotADescendant { path, dir: self.dir.clone() });
            }
            chain.push(cur.clone());
            cur = parent_of(&cur).expect("non-root paths have parents");
        }
        Ok(chain)
    }
}

/// Applies the grant's chain to a file's EDEK, producing the message the
/// recipient decrypts.
pub fn resolve_hierarchical_edek<G: PrimeGroup>(
    grant: &DirectoryGrant<G>,
    path: &str,
    edek: &PreCiphertext<G>,
) -> Result<ReencryptedMessage<G>, HierarchyError> {
    let chain = grant.chain_for(path)?;
    let under_dir = chain.iter().fold(*edek, |ct, p| reencrypt(&grant.upward[p], &ct));
    Ok(reencrypt_delegated(&grant.bundle, &under_dir))
}

#[derive(Serialize, Deserialize)]
struct SealedNode {
    path: String,
    secret: String,
}

impl<G: PrimeGroup> Hierarchy<G> {
    pub fn new<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let root = HierarchyNode { path: String::new(), keys: keygen(rng), parent: None };
        Hierarchy { nodes: BTreeMap::from([(String::new(), root)]) }
    }

    /// Creates `path` and any missing ancestors; returns the node's public key.
    pub fn ensure<R: RngCore + CryptoRng>(&mut self, path: &str, rng: &mut R) -> PublicKey<G> {
        let path = normalize(path);
        if let Some(node) = self.nodes.get(&path) {
            return node.keys.public;
        }
        let parent = parent_of(&path).expect("root always exists");
        self.ensure(&parent, rng);
        let keys = keygen(rng);
        let public = keys.public;
        self.nodes.insert(path.clone(), HierarchyNode { path, keys, parent: Some(parent) });
        public
    }

    pub fn get(&self, path: &str) -> Option<&HierarchyNode<G>> {
        self.nodes.get(&normalize(path))
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.nodes.keys().map(String::as_str)
    }

    pub fn secret(&self, path: &str) -> Result<&SecretKey<G>, HierarchyError> {
        self.get(path).map(|n| &n.keys.secret).ok_or_else(|| HierarchyError::UnknownPath(path.to_string()))
    }

    /// Removes `path` and everything below it.
    pub fn remove(&mut self, path: &str) {
        let path = normalize(path);
        if !path.is_empty() {
            self.nodes.retain(|p, _| !is_within(p, &path));
        }
    }

    /// Re-encryption key from `path` to its parent.
    pub fn upward_rekey(&self, path: &str) -> Result<ReKey<G>, HierarchyError> {
        let node = self.get(path).ok_or_else(|| HierarchyError::UnknownPath(path.to_string()))?;
        let parent = node.parent.as_ref().ok_or_else(|| HierarchyError::UnknownPath(path.to_string()))?;
        Ok(rekey(&node.keys.secret, &self.nodes[parent].keys.secret))
    }

    pub fn grant_directory<R: RngCore + CryptoRng>(
        &self,
        dir: &str,
        recipient: &PublicKey<G>,
        rng: &mut R,
    ) -> Result<DirectoryGrant<G>, HierarchyError> {
        let dir = normalize(dir);
        let node = self.get(&dir).ok_or_else(|| HierarchyError::UnknownPath(dir.clone()))?;
        let upward = self
            .nodes
            .keys()
            .filter(|p| **p != dir && is_within(p, &dir))
            .map(|p| Ok((p.clone(), self.upward_rekey(p)?)))
            .collect::<Result<_, HierarchyError>>()?;
        let bundle = delegate(&node.keys.secret, recipient, rng);
        Ok(DirectoryGrant { dir, upward, bundle })
    }

    /// All node keys, encrypted to the owner's root public key.
    pub fn seal<R: RngCore + CryptoRng>(
        &self,
        owner: &PublicKey<G>,
        rng: &mut R,
    ) -> Result<Envelope<G>, HierarchyError> {
        let nodes: Vec<SealedNode> = self
            .nodes
            .values()
            .map(|n| SealedNode { path: n.path.clone(), secret: hex::encode(n.keys.secret.to_bytes()) })
            .collect();
        let plain = serde_json::to_vec(&nodes).expect("serializable");
        Ok(encrypt_data(owner, &plain, rng, EncryptOptions::default())?)
    }

    pub fn unseal(owner: &SecretKey<G>, sealed: &Envelope<G>) -> Result<Self, HierarchyError> {
        let plain = decrypt_data(owner, sealed)?.data;
        let nodes: Vec<SealedNode> = serde_json::from_slice(&plain).map_err(|_| HierarchyError::Corrupt)?;
        let mut out = BTreeMap::new();
        for n in nodes {
            let raw = hex::decode(&n.secret).map_err(|_| HierarchyError::Corrupt)?;
            let secret = SecretKey::from_bytes(&raw).map_err(|_: PreError| HierarchyError::Corrupt)?;
            let parent = parent_of(&n.path);
            out.insert(n.path.clone(), HierarchyNode { path: n.path, keys: KeyPair::from_secret(secret), parent });
        }
        if !out.contains_key("") || out.values().any(|n| n.parent.as_ref().is_some_and(|p| !out.contains_key(p))) {
            return Err(HierarchyError::Corrupt);
        }
        Ok(Hierarchy { nodes: out })
    }
}
