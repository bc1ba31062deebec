//! Client library: the owner's key hierarchy, writing and reading
//! envelopes against a content store, and creating, renewing and revoking
//! policies on re-encryption nodes.
//!
//! Every stored path has its own key pair. Sharing a path hands the
//! recipient a [`Grant`]: the upward re-encryption keys below the path and
//! the location of the delegation material, which lives on one node or is
//! split across several. Reading a granted file lifts its EDEK to the shared
//! path locally and asks the node(s) for the last hop.

pub mod identity;

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

pub use identity::{address_of, ContactBook, ContactCard, Identity};

use crate::envelope::hierarchy::{is_within, normalize, parent_of, Hierarchy, HierarchyError};
use crate::envelope::{
    decrypt_data, decrypt_delegated_data, encrypt_data, split_edek, EncryptOptions, Envelope, EnvelopeError, Opened,
};
use crate::group::Ristretto;
use crate::ledger::{EscrowId, RevocationPayout};
use crate::node::{
    publish_policy, Condition, LedgerApi, ListRequest, NodeApi, NodeDirectory, NodeError, PolicyId, PolicyMaterial,
    PolicyMeta, PolicyTerms, ReencryptRequest, ReencryptResponse, RenewRequest, RevokeRequest,
};
use crate::pre::{
    combine_shares, reencrypt, split_rekey_additive, split_rekey_threshold, PreError, PublicKey, ReKey,
    ReencryptedMessage, ShareScheme,
};
use crate::storage::{ContentStore, PathRef, StorageError};
use crate::util::{b64, hex32};

/// Logical prefix under which short secrets are stored.
pub const SECRETS_ROOT: &str = "secrets";

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("{0}")]
    Usage(String),
    #[error("access denied: {0}")]
    NoAccess(String),
    #[error("integrity check failed: {0}")]
    Integrity(String),
    #[error(transparent)]
    Node(#[from] NodeError),
    #[error(transparent)]
    Storage(#[from] StorageError),
}

impl ClientError {
    /// 0 ok, 2 usage, 3 access denied, 4 network, 5 integrity, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            ClientError::Usage(_) => 2,
            ClientError::NoAccess(_) => 3,
            ClientError::Integrity(_) => 5,
            ClientError::Node(e) => match e {
                NodeError::UnknownPolicy
                | NodeError::OutsideWindow
                | NodeError::ConditionFalse
                | NodeError::Revoked
                | NodeError::BadAuth => 3,
                NodeError::Network(_) | NodeError::Offline => 4,
                NodeError::Malformed(_) => 5,
                _ => 1,
            },
            ClientError::Storage(e) => match e {
                StorageError::Corrupt(_) => 5,
                StorageError::BadRef(_) => 2,
                StorageError::NotFound(_) | StorageError::Io(_) => 1,
            },
        }
    }
}

impl From<EnvelopeError> for ClientError {
    fn from(e: EnvelopeError) -> Self {
        match e {
            EnvelopeError::Pre(e) => e.into(),
            EnvelopeError::EmptyData => ClientError::Usage(e.to_string()),
            other => ClientError::Integrity(other.to_string()),
        }
    }
}

impl From<PreError> for ClientError {
    fn from(e: PreError) -> Self {
        match e {
            PreError::WrongRecipient => ClientError::NoAccess(e.to_string()),
            other => ClientError::Integrity(other.to_string()),
        }
    }
}

impl From<HierarchyError> for ClientError {
    fn from(e: HierarchyError) -> Self {
        match e {
            HierarchyError::Envelope(e) => e.into(),
            HierarchyError::Corrupt => ClientError::Integrity(e.to_string()),
            other => ClientError::Usage(other.to_string()),
        }
    }
}

/// What a client talks to.
#[derive(Clone, Copy)]
pub struct Connection<'a> {
    pub ledger: &'a dyn LedgerApi,
    pub nodes: &'a dyn NodeDirectory,
    pub store: &'a dyn ContentStore,
}

/// How the delegation is held by nodes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitScheme {
    #[default]
    Single,
    Additive {
        total: u32,
    },
    Threshold {
        threshold: u32,
        total: u32,
    },
}

impl SplitScheme {
    /// `single`, `additive:M` or `threshold:T:N`.
    pub fn parse(s: &str) -> Result<Self, String> {
        let num = |v: &str| v.parse::<u32>().map_err(|e| format!("{v}: {e}"));
        let scheme = match s.split(':').collect::<Vec<_>>().as_slice() {
            ["single"] => SplitScheme::Single,
            ["additive", m] => SplitScheme::Additive { total: num(m)? },
            ["threshold", t, n] => SplitScheme::Threshold { threshold: num(t)?, total: num(n)? },
            _ => return Err(format!("unrecognized scheme {s:?}")),
        };
        match scheme {
            SplitScheme::Additive { total: 0 } => Err("additive needs at least one share".into()),
            SplitScheme::Threshold { threshold, total } if threshold == 0 || threshold > total => {
                Err(format!("threshold {threshold} of {total} is not satisfiable"))
            }
            ok => Ok(ok),
        }
    }

    fn share_scheme(self) -> Option<ShareScheme> {
        match self {
            SplitScheme::Single => None,
            SplitScheme::Additive { total } => Some(ShareScheme::Additive { total }),
            SplitScheme::Threshold { threshold, total } => Some(ShareScheme::Threshold { threshold, total }),
        }
    }

    pub fn nodes(self) -> usize {
        self.share_scheme().map_or(1, |s| s.total() as usize)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShareLocation {
    pub index: u32,
    pub node: String,
    #[serde(with = "hex32")]
    pub policy_id: PolicyId,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Access {
    Single {
        node: String,
        #[serde(with = "hex32")]
        policy_id: PolicyId,
    },
    Split {
        scheme: SplitScheme,
        /// The delegation's sealed ephemeral secret; nodes only see shares.
        #[serde(with = "b64")]
        wrapped_eph: Vec<u8>,
        shares: Vec<ShareLocation>,
    },
}

/// Handed from owner to recipient when a path is shared.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grant {
    pub id: String,
    pub owner: ContactCard,
    pub path: String,
    /// Hex re-encryption keys from each path below `path` to its parent.
    pub upward: BTreeMap<String, String>,
    pub access: Access,
    /// The files below `path` at the time of sharing.
    pub files: BTreeMap<String, PathRef>,
}

impl Grant {
    /// Upward keys to apply, bottom to top, for a file at `path`.
    pub fn chain_for(&self, path: &str) -> Result<Vec<ReKey<Ristretto>>, ClientError> {
        let outside = || ClientError::NoAccess(format!("{path:?} is not covered by grant {}", self.id));
        if !is_within(path, &self.path) {
            return Err(outside());
        }
        let mut chain = Vec::new();
        let mut cur = path.to_string();
        while cur != self.path {
            let hex_key = self.upward.get(&cur).ok_or_else(outside)?;
            let raw = hex::decode(hex_key).map_err(|_| ClientError::Integrity("bad upward key".into()))?;
            chain.push(ReKey::from_bytes(&raw)?);
            cur = parent_of(&cur).ok_or_else(outside)?;
        }
        Ok(chain)
    }

    pub fn policy_ids(&self) -> Vec<PolicyId> {
        match &self.access {
            Access::Single { policy_id, .. } => vec![*policy_id],
            Access::Split { shares, .. } => shares.iter().map(|s| s.policy_id).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreatedPolicy {
    pub grant: String,
    #[serde(with = "hex32")]
    pub policy_id: PolicyId,
    pub node: String,
    pub escrow: EscrowId,
    pub path: String,
    /// Hex public key of the recipient.
    pub recipient: String,
    pub t_end: u64,
}

#[derive(Clone, Debug)]
pub struct ShareOptions {
    pub duration: u64,
    pub fee: u64,
    pub collateral: u64,
    pub condition: Condition,
    pub scheme: SplitScheme,
    /// Nodes to use, in share order; the ledger picks the rest.
    pub nodes: Vec<String>,
}

impl Default for ShareOptions {
    fn default() -> Self {
        ShareOptions {
            duration: 3600,
            fee: 100,
            collateral: 50,
            condition: Condition::Always,
            scheme: SplitScheme::Single,
            nodes: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyRow {
    pub node: String,
    pub grant: Option<String>,
    pub path: Option<String>,
    pub recipient: Option<String>,
    #[serde(flatten)]
    pub meta: PolicyMeta,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Revoked {
    #[serde(with = "hex32")]
    pub policy_id: PolicyId,
    pub node: String,
    /// `None` when the escrow had already settled.
    pub payout: Option<RevocationPayout>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeleteReport {
    pub objects: Vec<PathRef>,
    pub revoked: Vec<Revoked>,
}

/// Persistent client state. The key hierarchy is kept sealed to the
/// identity's own public key.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ClientState {
    #[serde(default, with = "b64_opt")]
    hierarchy: Option<Vec<u8>>,
    pub files: BTreeMap<String, PathRef>,
    pub policies: Vec<CreatedPolicy>,
    pub grants: Vec<Grant>,
    pub contacts: ContactBook,
    pub next_nonce: u64,
    /// Encode written files with the all-or-nothing transform.
    #[serde(default)]
    pub aont: bool,
}

mod b64_opt {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Vec<u8>>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(bytes) => crate::util::b64::serialize(bytes, s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<u8>>, D::Error> {
        use base64::Engine;
        let s = Option::<String>::deserialize(d)?;
        s.map(|s| base64::engine::general_purpose::STANDARD.decode(s).map_err(serde::de::Error::custom)).transpose()
    }
}

enum Located {
    Own { path: String, at: PathRef },
    Granted { grant: usize, path: String, at: PathRef },
}

pub struct Client {
    identity: Identity,
    hierarchy: Hierarchy<Ristretto>,
    state: ClientState,
    rng: ChaCha20Rng,
}

impl Client {
    pub fn new(identity: Identity, seed: [u8; 32]) -> Self {
        let mut rng = ChaCha20Rng::from_seed(seed);
        let hierarchy = Hierarchy::new(&mut rng);
        Client { identity, hierarchy, state: ClientState { next_nonce: 1, ..Default::default() }, rng }
    }

    /// Restores a client from [`Client::save`] output.
    pub fn load(identity: Identity, state_json: &str, seed: [u8; 32]) -> Result<Self, ClientError> {
        let mut state: ClientState =
            serde_json::from_str(state_json).map_err(|e| ClientError::Usage(format!("client state: {e}")))?;
        let mut rng = ChaCha20Rng::from_seed(seed);
        let hierarchy = match state.hierarchy.take() {
            Some(bytes) => Hierarchy::unseal(&identity.enc.secret, &Envelope::from_bytes(&bytes)?)?,
            None => Hierarchy::new(&mut rng),
        };
        Ok(Client { identity, hierarchy, state, rng })
    }

    pub fn save(&mut self) -> String {
        let sealed = self.hierarchy.seal(&self.identity.enc.public, &mut self.rng).expect("hierarchy seals");
        let mut state = self.state.clone();
        state.hierarchy = Some(sealed.to_bytes());
        serde_json::to_string_pretty(&state).expect("serializable")
    }

    pub fn identity(&self) -> &Identity {
        &self.identity
    }

    pub fn state(&self) -> &ClientState {
        &self.state
    }

    pub fn set_aont(&mut self, on: bool) {
        self.state.aont = on;
    }

    pub fn add_contact(&mut self, card: ContactCard) {
        self.state.contacts.add(card);
    }

    pub fn resolve_recipient(&self, who: &str) -> Result<PublicKey<Ristretto>, ClientError> {
        self.state.contacts.resolve(who)
    }

    pub fn import_grant(&mut self, grant: Grant) {
        self.state.grants.retain(|g| g.id != grant.id);
        self.state.grants.push(grant);
    }

    fn nonce(&mut self) -> u64 {
        let n = self.state.next_nonce.max(1);
        self.state.next_nonce = n + 1;
        n
    }

    fn node<'c>(&self, conn: &Connection<'c>, id: &str) -> Result<Box<dyn NodeApi + 'c>, ClientError> {
        conn.nodes
            .node(id, &self.identity.account)
            .ok_or_else(|| NodeError::Network(format!("unknown node {id}")).into())
    }

    /// Encrypts `data` under the key of `path` and stores the envelope.
    pub fn write(&mut self, conn: &Connection<'_>, path: &str, data: &[u8]) -> Result<PathRef, ClientError> {
        let path = normalize(path);
        if path.is_empty() {
            return Err(ClientError::Usage("cannot write to the root path".into()));
        }
        if self.state.files.keys().any(|f| is_within(f, &path) && *f != path) {
            return Err(ClientError::Usage(format!("{path:?} is a directory")));
        }
        let pk = self.hierarchy.ensure(&path, &mut self.rng);
        let opts = EncryptOptions { aont: self.state.aont, signer: Some(&self.identity.sign) };
        let env = encrypt_data(&pk, data, &mut self.rng, opts)?;
        let at = conn.store.put(&env.to_bytes())?;
        if let Some(old) = self.state.files.insert(path, at.clone()) {
            if old != at {
                // The old object may be shared with another path.
                if !self.state.files.values().any(|r| *r == old) {
                    let _ = conn.store.delete(&old);
                }
            }
        }
        Ok(at)
    }

    fn locate(&self, target: &str) -> Result<Located, ClientError> {
        if let Ok(at) = target.parse::<PathRef>() {
            if let Some((path, _)) = self.state.files.iter().find(|(_, r)| **r == at) {
                return Ok(Located::Own { path: path.clone(), at });
            }
            for (i, g) in self.state.grants.iter().enumerate() {
                if let Some((path, _)) = g.files.iter().find(|(_, r)| **r == at) {
                    return Ok(Located::Granted { grant: i, path: path.clone(), at });
                }
            }
            return Err(ClientError::NoAccess(format!("no key or grant for {target}")));
        }
        let path = normalize(target);
        if let Some(at) = self.state.files.get(&path) {
            return Ok(Located::Own { path, at: at.clone() });
        }
        for (i, g) in self.state.grants.iter().enumerate().rev() {
            if let Some(at) = g.files.get(&path) {
                return Ok(Located::Granted { grant: i, path, at: at.clone() });
            }
        }
        Err(ClientError::NoAccess(format!("no key or grant for {path:?}")))
    }

    /// Reads a file by logical path or `scheme://cid`, either as its owner
    /// or through a grant.
    pub fn read(&self, conn: &Connection<'_>, target: &str) -> Result<Vec<u8>, ClientError> {
        match self.locate(target)? {
            Located::Own { path, at } => {
                let env = Envelope::<Ristretto>::from_bytes(&conn.store.get(&at)?)?;
                let opened = decrypt_data(self.hierarchy.secret(&path)?, &env)?;
                Ok(opened.data)
            }
            Located::Granted { grant, path, at } => self.read_granted(conn, &self.state.grants[grant], &path, &at),
        }
    }

    /// Reads `at`, stored at logical `path`, through `grant`.
    pub fn read_granted(
        &self,
        conn: &Connection<'_>,
        grant: &Grant,
        path: &str,
        at: &PathRef,
    ) -> Result<Vec<u8>, ClientError> {
        self.read_granted_via(conn, grant, path, at, |node, req| Ok(self.node(conn, node)?.reencrypt(req)?))
    }

    /// [`Client::read_granted`] with the node round trip supplied by the
    /// caller, as `ask(node_id, request)`.
    pub fn read_granted_via(
        &self,
        conn: &Connection<'_>,
        grant: &Grant,
        path: &str,
        at: &PathRef,
        ask: impl Fn(&str, &ReencryptRequest) -> Result<ReencryptResponse, ClientError>,
    ) -> Result<Vec<u8>, ClientError> {
        let path = normalize(path);
        let chain = grant.chain_for(&path)?;
        let (edek, body) = split_edek::<Ristretto>(&conn.store.get(at)?)?;
        let lifted = chain.iter().fold(edek.0, |ct, rk| reencrypt(rk, &ct));
        let msg = match &grant.access {
            Access::Single { node, policy_id } => {
                ask(node, &ReencryptRequest::new(*policy_id, &lifted))?.delegated()?
            }
            Access::Split { scheme, wrapped_eph, shares } => {
                let share_scheme = scheme
                    .share_scheme()
                    .ok_or_else(|| ClientError::Integrity("split grant without a scheme".into()))?;
                let needed = share_scheme.needed() as usize;
                let mut parts = Vec::with_capacity(needed);
                let mut last_err = None;
                for s in shares {
                    if parts.len() == needed {
                        break;
                    }
                    match ask(&s.node, &ReencryptRequest::new(s.policy_id, &lifted)).and_then(|r| Ok(r.partial()?)) {
                        Ok(p) => parts.push(p),
                        Err(e) => last_err = Some(e),
                    }
                }
                if parts.len() < needed {
                    return Err(last_err.unwrap_or_else(|| ClientError::NoAccess("not enough shares".into())));
                }
                ReencryptedMessage {
                    c_e: combine_shares(&lifted.c1, &parts, share_scheme)?,
                    wrapped_eph: wrapped_eph.clone(),
                }
            }
        };
        let opened = decrypt_delegated_data(&self.identity.enc.secret, &msg, &body)?;
        check_signer(&opened, &grant.owner)?;
        Ok(opened.data)
    }

    /// Decrypts raw envelope bytes with the owner's keys: the key of `path`,
    /// or every key in the hierarchy when no path is given.
    pub fn decrypt(&self, bytes: &[u8], path: Option<&str>) -> Result<Vec<u8>, ClientError> {
        let env = Envelope::<Ristretto>::from_bytes(bytes)?;
        if let Some(path) = path {
            return Ok(decrypt_data(self.hierarchy.secret(path)?, &env)?.data);
        }
        self.hierarchy
            .paths()
            .find_map(|p| decrypt_data(self.hierarchy.secret(p).ok()?, &env).ok())
            .map(|o| o.data)
            .ok_or_else(|| ClientError::NoAccess("no key in the hierarchy opens this envelope".into()))
    }

    /// Shares `path` (a file or a directory) with `recipient`.
    pub fn share(
        &mut self,
        conn: &Connection<'_>,
        recipient: &PublicKey<Ristretto>,
        path: &str,
        opts: &ShareOptions,
    ) -> Result<Grant, ClientError> {
        let path = normalize(path);
        if self.hierarchy.get(&path).is_none() {
            return Err(ClientError::Usage(format!("nothing stored at {path:?}")));
        }
        let dg = self.hierarchy.grant_directory(&path, recipient, &mut self.rng)?;
        let grant_id = hex::encode(self.rng.gen::<[u8; 16]>());
        let terms = PolicyTerms {
            owner_account: self.identity.account.clone(),
            duration: opts.duration,
            fee: opts.fee,
            collateral: opts.collateral,
            condition: opts.condition.clone(),
        };
        let materials: Vec<PolicyMaterial> = match opts.scheme {
            SplitScheme::Single => vec![PolicyMaterial::Bundle(dg.bundle.clone())],
            SplitScheme::Additive { total } => split_rekey_additive(&dg.bundle.rekey, total, &mut self.rng)?
                .into_iter()
                .map(PolicyMaterial::Share)
                .collect(),
            SplitScheme::Threshold { threshold, total } => {
                split_rekey_threshold(&dg.bundle.rekey, threshold, total, &mut self.rng)?
                    .into_iter()
                    .map(PolicyMaterial::Share)
                    .collect()
            }
        };
        let recipient_hex = hex::encode(recipient.to_bytes());
        let mut created: Vec<CreatedPolicy> = Vec::new();
        let mut used: Vec<String> = Vec::new();
        for (i, material) in materials.into_iter().enumerate() {
            let policy_id: PolicyId = self.rng.gen();
            let deployed = (|| {
                let node_id = match opts.nodes.get(i) {
                    Some(n) => n.clone(),
                    None => conn.ledger.select_node(&policy_id, &used)?,
                };
                let node = self.node(conn, &node_id)?;
                let start = conn.ledger.head()?.height;
                let escrow =
                    publish_policy(conn.ledger, node.as_ref(), &self.identity.sign, policy_id, material, &terms)?;
                Ok::<_, ClientError>((node_id, escrow, start))
            })();
            match deployed {
                Ok((node, escrow, start)) => {
                    used.push(node.clone());
                    created.push(CreatedPolicy {
                        grant: grant_id.clone(),
                        policy_id,
                        node,
                        escrow,
                        path: path.clone(),
                        recipient: recipient_hex.clone(),
                        t_end: start + opts.duration,
                    });
                }
                Err(e) => {
                    // Do not leave a partial split deployed.
                    self.state.policies.extend(created);
                    let _ = self.revoke(conn, &grant_id);
                    return Err(e);
                }
            }
        }
        let access = match opts.scheme {
            SplitScheme::Single => Access::Single { node: created[0].node.clone(), policy_id: created[0].policy_id },
            scheme => Access::Split {
                scheme,
                wrapped_eph: dg.bundle.wrapped_eph.clone(),
                shares: created
                    .iter()
                    .enumerate()
                    .map(|(i, c)| ShareLocation { index: i as u32 + 1, node: c.node.clone(), policy_id: c.policy_id })
                    .collect(),
            },
        };
        let grant = Grant {
            id: grant_id,
            owner: self.identity.card(),
            path: path.clone(),
            upward: dg.upward.iter().map(|(p, k)| (p.clone(), hex::encode(k.to_bytes()))).collect(),
            access,
            files: self
                .state
                .files
                .iter()
                .filter(|(p, _)| is_within(p, &path))
                .map(|(p, r)| (p.clone(), r.clone()))
                .collect(),
        };
        self.state.policies.extend(created);
        Ok(grant)
    }

    /// Policies matched by `selector`: `all`, a grant id, a policy id or a
    /// shared path.
    fn select(&self, selector: &str) -> Vec<usize> {
        let path = normalize(selector);
        self.state
            .policies
            .iter()
            .enumerate()
            .filter(|(_, p)| {
                selector == "all" || p.grant == selector || hex::encode(p.policy_id) == selector || p.path == path
            })
            .map(|(i, _)| i)
            .collect()
    }

    pub fn revoke(&mut self, conn: &Connection<'_>, selector: &str) -> Result<Vec<Revoked>, ClientError> {
        let picked = self.select(selector);
        if picked.is_empty() {
            return Err(ClientError::Usage(format!("no policy matches {selector:?}")));
        }
        self.revoke_indices(conn, picked)
    }

    fn revoke_indices(&mut self, conn: &Connection<'_>, picked: Vec<usize>) -> Result<Vec<Revoked>, ClientError> {
        let mut done = Vec::new();
        let mut gone = BTreeSet::new();
        let mut first_err = None;
        for i in picked {
            let p = self.state.policies[i].clone();
            let nonce = self.nonce();
            let result = self
                .node(conn, &p.node)
                .and_then(|n| Ok(n.revoke(&RevokeRequest::new(&self.identity.sign, p.policy_id, nonce))?));
            match result {
                Ok(payout) => {
                    gone.insert(i);
                    done.push(Revoked { policy_id: p.policy_id, node: p.node, payout });
                }
                // Expired or already revoked: nothing is left to revoke.
                Err(ClientError::Node(NodeError::UnknownPolicy | NodeError::Revoked)) => {
                    gone.insert(i);
                    done.push(Revoked { policy_id: p.policy_id, node: p.node, payout: None });
                }
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
        }
        let mut i = 0;
        self.state.policies.retain(|_| {
            i += 1;
            !gone.contains(&(i - 1))
        });
        match first_err {
            Some(e) => Err(e),
            None => Ok(done),
        }
    }

    /// Extends matched policies by `extra_blocks`, paying `extra_fee` each.
    pub fn renew(
        &mut self,
        conn: &Connection<'_>,
        selector: &str,
        extra_blocks: u64,
        extra_fee: u64,
    ) -> Result<usize, ClientError> {
        let picked = self.select(selector);
        if picked.is_empty() {
            return Err(ClientError::Usage(format!("no policy matches {selector:?}")));
        }
        for &i in &picked {
            let p = self.state.policies[i].clone();
            let t_end = p.t_end + extra_blocks;
            let nonce = self.nonce();
            self.node(conn, &p.node)?.renew(&RenewRequest::new(
                &self.identity.sign,
                p.policy_id,
                t_end,
                extra_fee,
                nonce,
            ))?;
            self.state.policies[i].t_end = t_end;
        }
        Ok(picked.len())
    }

    /// Every policy of this owner on the nodes it has deployed to.
    pub fn list_policies(&mut self, conn: &Connection<'_>) -> Result<Vec<PolicyRow>, ClientError> {
        let nodes: BTreeSet<String> = self.state.policies.iter().map(|p| p.node.clone()).collect();
        let mut rows = Vec::new();
        for node in nodes {
            let nonce = self.nonce();
            let metas = self.node(conn, &node)?.policies(&ListRequest::new(&self.identity.sign, nonce))?;
            for meta in metas {
                let mine = self.state.policies.iter().find(|p| p.policy_id == meta.policy_id);
                rows.push(PolicyRow {
                    node: node.clone(),
                    grant: mine.map(|p| p.grant.clone()),
                    path: mine.map(|p| p.path.clone()),
                    recipient: mine.map(|p| p.recipient.clone()),
                    meta,
                });
            }
        }
        Ok(rows)
    }

    /// Removes `path` (and anything below it) from storage, revokes the
    /// policies sharing it and forgets its keys.
    pub fn delete(&mut self, conn: &Connection<'_>, path: &str) -> Result<DeleteReport, ClientError> {
        let path = normalize(path);
        let files: Vec<(String, PathRef)> =
            self.state.files.iter().filter(|(p, _)| is_within(p, &path)).map(|(p, r)| (p.clone(), r.clone())).collect();
        if files.is_empty() && (path.is_empty() || self.hierarchy.get(&path).is_none()) {
            return Err(ClientError::Usage(format!("nothing stored at {path:?}")));
        }
        let picked: Vec<usize> =
            self.state.policies.iter().enumerate().filter(|(_, p)| is_within(&p.path, &path)).map(|(i, _)| i).collect();
        let revoked = self.revoke_indices(conn, picked)?;
        let mut report = DeleteReport { objects: Vec::new(), revoked };
        for (p, at) in files {
            self.state.files.remove(&p);
            if !self.state.files.values().any(|r| *r == at) {
                match conn.store.delete(&at) {
                    Ok(()) | Err(StorageError::NotFound(_)) => report.objects.push(at),
                    Err(e) => return Err(e.into()),
                }
            }
        }
        self.hierarchy.remove(&path);
        Ok(report)
    }

    pub fn secret_set(&mut self, conn: &Connection<'_>, name: &str, value: &[u8]) -> Result<PathRef, ClientError> {
        self.write(conn, &secret_path(name)?, value)
    }

    pub fn secret_get(&self, conn: &Connection<'_>, name: &str) -> Result<Vec<u8>, ClientError> {
        let path = secret_path(name)?;
        match self.read(conn, &path) {
            Err(ClientError::NoAccess(_)) if !self.knows(&path) => {
                Err(ClientError::Usage(format!("unknown secret {name:?}")))
            }
            other => other,
        }
    }

    fn knows(&self, path: &str) -> bool {
        self.state.files.contains_key(path) || self.state.grants.iter().any(|g| g.files.contains_key(path))
    }
}

/// Logical path of a secret; `name` may itself be a subtree such as `db/`.
pub fn secret_path(name: &str) -> Result<String, ClientError> {
    let name = normalize(name);
    if name.is_empty() {
        return Err(ClientError::Usage("empty secret name".into()));
    }
    Ok(format!("{SECRETS_ROOT}/{name}"))
}

fn check_signer(opened: &Opened, owner: &ContactCard) -> Result<(), ClientError> {
    match opened.signer {
        Some(key) if key.to_bytes() != owner.sign_pk => {
            Err(ClientError::Integrity(format!("signed by someone other than {}", owner.name)))
        }
        _ => Ok(()),
    }
}

/// A fresh random seed for a client's RNG.
pub fn os_seed() -> [u8; 32] {
    let mut seed = [0u8; 32];
    rand::rngs::OsRng.fill_bytes(&mut seed);
    seed
}

#[cfg(test)]
mod tests;
