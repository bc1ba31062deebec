//! Client-side handles on nodes and on the ledger, in process or over HTTP.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, MutexGuard};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::types::*;
use super::{Node, NodeError};
use crate::envelope::SigningIdentity;
use crate::ledger::{AccountId, Block, BlockReport, EscrowId, Ledger, LedgerTx, RevocationPayout, TxOutcome};

/// Header carrying the request origin over HTTP.
pub const ORIGIN_HEADER: &str = "x-prekms-origin";

pub trait NodeApi: Send + Sync {
    fn node_id(&self) -> &str;
    fn deploy(&self, req: &DeployRequest) -> Result<(), NodeError>;
    fn reencrypt(&self, req: &ReencryptRequest) -> Result<ReencryptResponse, NodeError>;
    fn revoke(&self, req: &RevokeRequest) -> Result<Option<RevocationPayout>, NodeError>;
    fn renew(&self, req: &RenewRequest) -> Result<(), NodeError>;
    fn policies(&self, req: &ListRequest) -> Result<Vec<PolicyMeta>, NodeError>;
    fn ping(&self) -> Result<PingInfo, NodeError>;
}

pub trait LedgerApi: Send + Sync {
    /// A consistent copy of the current ledger state.
    fn snapshot(&self) -> Result<Ledger, NodeError>;
    fn submit(&self, tx: LedgerTx) -> Result<TxOutcome, NodeError>;

    fn head(&self) -> Result<Block, NodeError> {
        Ok(self.snapshot()?.block())
    }

    fn select_node(&self, policy_id: &[u8], exclude: &[AccountId]) -> Result<AccountId, NodeError> {
        Ok(self.snapshot()?.select_node(policy_id, exclude)?)
    }
}

/// Resolves node ids to handles that send requests as `origin`.
pub trait NodeDirectory: Send + Sync {
    fn node(&self, id: &str, origin: &str) -> Option<Box<dyn NodeApi>>;

    /// Whether the node takes part in committee duties.
    fn participates(&self, _id: &str) -> bool {
        true
    }
}

/// Terms of a policy deployment, paid for by `owner_account`.
#[derive(Clone, Debug)]
pub struct PolicyTerms {
    pub owner_account: AccountId,
    pub duration: u64,
    pub fee: u64,
    pub collateral: u64,
    pub condition: super::Condition,
}

/// The deployment sequence shared by clients and the audit authority:
/// escrow, bind the material hash, then hand the material to the node.
pub fn publish_policy(
    ledger: &dyn LedgerApi,
    node: &dyn NodeApi,
    owner: &SigningIdentity,
    policy_id: PolicyId,
    material: PolicyMaterial,
    terms: &PolicyTerms,
) -> Result<EscrowId, NodeError> {
    let outcome = ledger.submit(LedgerTx::Escrow {
        owner: terms.owner_account.clone(),
        miner: node.node_id().to_string(),
        fee: terms.fee,
        duration: terms.duration,
        collateral: terms.collateral,
    })?;
    let TxOutcome::Escrow { id: escrow } = outcome else {
        return Err(NodeError::Network(format!("unexpected ledger reply {outcome:?}")));
    };
    ledger.submit(LedgerTx::BindPolicy { escrow, policy_id, material_hash: material.hash() })?;
    let start = ledger.head()?.height;
    node.deploy(&DeployRequest {
        policy_id,
        owner: owner.verifying_key().to_bytes(),
        material,
        window: Window { t_start: start, t_end: start + terms.duration },
        condition: terms.condition.clone(),
        escrow_ref: escrow,
    })?;
    Ok(escrow)
}

/// A ledger plus the nodes that run against it, all in one process.
#[derive(Clone)]
pub struct LocalNetwork {
    pub ledger: Arc<Mutex<Ledger>>,
    pub nodes: BTreeMap<String, Arc<Node>>,
}

impl LocalNetwork {
    pub fn new(ledger: Ledger) -> Self {
        LocalNetwork { ledger: Arc::new(Mutex::new(ledger)), nodes: BTreeMap::new() }
    }

    pub fn add_node(&mut self, node: Node) -> Arc<Node> {
        let node = Arc::new(node);
        self.nodes.insert(node.id().to_string(), node.clone());
        node
    }

    pub fn lock(&self) -> MutexGuard<'_, Ledger> {
        self.ledger.lock().expect("ledger lock")
    }

    /// Seals one block and runs every node's expiry sweep.
    pub fn advance_block(&self) -> BlockReport {
        let report = self.lock().advance_block();
        for node in self.nodes.values() {
            // A sweep only fails on storage errors, which the next block retries.
            let _ = node.on_block(report.block.height);
        }
        report
    }

    pub fn advance_blocks(&self, count: u64) -> u64 {
        for _ in 0..count {
            self.advance_block();
        }
        self.lock().height()
    }

    pub fn handle(&self, node_id: &str, origin: &str) -> Option<LocalNode> {
        let node = self.nodes.get(node_id)?.clone();
        Some(LocalNode { node, ledger: self.ledger.clone(), origin: origin.to_string() })
    }
}

impl LedgerApi for LocalNetwork {
    fn snapshot(&self) -> Result<Ledger, NodeError> {
        Ok(self.lock().clone())
    }

    fn submit(&self, tx: LedgerTx) -> Result<TxOutcome, NodeError> {
        if let LedgerTx::AdvanceBlocks { count } = tx {
            return Ok(TxOutcome::Height { height: self.advance_blocks(count) });
        }
        Ok(tx.apply(&mut self.lock())?)
    }

    fn head(&self) -> Result<Block, NodeError> {
        Ok(self.lock().block())
    }

    fn select_node(&self, policy_id: &[u8], exclude: &[AccountId]) -> Result<AccountId, NodeError> {
        Ok(self.lock().select_node(policy_id, exclude)?)
    }
}

impl NodeDirectory for LocalNetwork {
    fn node(&self, id: &str, origin: &str) -> Option<Box<dyn NodeApi>> {
        self.handle(id, origin).map(|n| Box::new(n) as Box<dyn NodeApi>)
    }

    fn participates(&self, id: &str) -> bool {
        self.nodes.get(id).is_some_and(|n| n.behavior() != super::Behavior::Offline)
    }
}

/// In-process handle on one node, tagged with the caller's origin.
#[derive(Clone)]
pub struct LocalNode {
    pub node: Arc<Node>,
    pub ledger: Arc<Mutex<Ledger>>,
    pub origin: String,
}

impl LocalNode {
    fn ledger(&self) -> MutexGuard<'_, Ledger> {
        self.ledger.lock().expect("ledger lock")
    }
}

impl NodeApi for LocalNode {
    fn node_id(&self) -> &str {
        self.node.id()
    }

    fn deploy(&self, req: &DeployRequest) -> Result<(), NodeError> {
        self.node.deploy_policy(&mut self.ledger(), req.clone())
    }

    fn reencrypt(&self, req: &ReencryptRequest) -> Result<ReencryptResponse, NodeError> {
        self.node.handle_reencrypt(&self.ledger(), &self.origin, req)
    }

    fn revoke(&self, req: &RevokeRequest) -> Result<Option<RevocationPayout>, NodeError> {
        self.node.revoke_policy(&mut self.ledger(), req)
    }

    fn renew(&self, req: &RenewRequest) -> Result<(), NodeError> {
        self.node.renew_policy(&mut self.ledger(), req)
    }

    fn policies(&self, req: &ListRequest) -> Result<Vec<PolicyMeta>, NodeError> {
        self.node.list_policies(req)
    }

    fn ping(&self) -> Result<PingInfo, NodeError> {
        self.node.ping(&self.ledger())
    }
}

#[derive(Serialize, Deserialize)]
pub(crate) struct ErrorBody {
    pub error: String,
    #[serde(default)]
    pub message: String,
}

fn client() -> reqwest::blocking::Client {
    reqwest::blocking::Client::builder()
        .timeout(std::time::Duration::from_secs(30))
        .build()
        .expect("static client configuration")
}

fn decode<T: DeserializeOwned>(resp: reqwest::Result<reqwest::blocking::Response>) -> Result<T, NodeError> {
    let resp = resp.map_err(|e| NodeError::Network(e.to_string()))?;
    let status = resp.status();
    let bytes = resp.bytes().map_err(|e| NodeError::Network(e.to_string()))?;
    if status.is_success() {
        return serde_json::from_slice(&bytes).map_err(|e| NodeError::Network(format!("bad response: {e}")));
    }
    match serde_json::from_slice::<ErrorBody>(&bytes) {
        Ok(body) => Err(NodeError::from_code(&body.error, body.message)),
        Err(_) => Err(NodeError::Network(format!("HTTP {status}"))),
    }
}

/// A node reached over its HTTP API. `base` is the node's root, e.g.
/// `http://127.0.0.1:7000` or `http://host/nodes/n1`.
pub struct HttpNode {
    id: String,
    base: String,
    origin: String,
    client: reqwest::blocking::Client,
}

impl HttpNode {
    pub fn new(id: impl Into<String>, base: impl Into<String>, origin: impl Into<String>) -> Self {
        HttpNode {
            id: id.into(),
            base: base.into().trim_end_matches('/').to_string(),
            origin: origin.into(),
            client: client(),
        }
    }

    fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, NodeError> {
        decode(self.client.post(format!("{}{path}", self.base)).header(ORIGIN_HEADER, &self.origin).json(body).send())
    }
}

impl NodeApi for HttpNode {
    fn node_id(&self) -> &str {
        &self.id
    }

    fn deploy(&self, req: &DeployRequest) -> Result<(), NodeError> {
        self.post::<_, serde_json::Value>("/policy", req).map(|_| ())
    }

    fn reencrypt(&self, req: &ReencryptRequest) -> Result<ReencryptResponse, NodeError> {
        self.post("/reencrypt", req)
    }

    fn revoke(&self, req: &RevokeRequest) -> Result<Option<RevocationPayout>, NodeError> {
        self.post("/revoke", req)
    }

    fn renew(&self, req: &RenewRequest) -> Result<(), NodeError> {
        self.post::<_, serde_json::Value>("/renew", req).map(|_| ())
    }

    fn policies(&self, req: &ListRequest) -> Result<Vec<PolicyMeta>, NodeError> {
        let url = format!("{}/policies", self.base);
        let query = [
            ("owner", hex::encode(req.owner)),
            ("nonce", req.auth.nonce.to_string()),
            ("signature", hex::encode(&req.auth.signature)),
        ];
        decode(self.client.get(url).header(ORIGIN_HEADER, &self.origin).query(&query).send())
    }

    fn ping(&self) -> Result<PingInfo, NodeError> {
        decode(self.client.get(format!("{}/ping", self.base)).header(ORIGIN_HEADER, &self.origin).send())
    }
}

/// The ledger of a network served by `prekms node serve`.
pub struct HttpLedger {
    base: String,
    client: reqwest::blocking::Client,
}

impl HttpLedger {
    pub fn new(base: impl Into<String>) -> Self {
        HttpLedger { base: base.into().trim_end_matches('/').to_string(), client: client() }
    }
}

impl LedgerApi for HttpLedger {
    fn snapshot(&self) -> Result<Ledger, NodeError> {
        let text: serde_json::Value = decode(self.client.get(format!("{}/ledger", self.base)).send())?;
        Ledger::from_json(&text.to_string()).map_err(|e| NodeError::Network(e.to_string()))
    }

    fn submit(&self, tx: LedgerTx) -> Result<TxOutcome, NodeError> {
        decode(self.client.post(format!("{}/ledger/tx", self.base)).json(&tx).send())
    }

    fn head(&self) -> Result<Block, NodeError> {
        decode(self.client.get(format!("{}/ledger/head", self.base)).send())
    }
}

/// Nodes of a network served by [`super::http::network_router`]. Committee
/// participation is read from the given in-process network when there is one.
pub struct HttpDirectory {
    base: String,
    local: Option<LocalNetwork>,
}

impl HttpDirectory {
    pub fn new(base: impl Into<String>, local: Option<LocalNetwork>) -> Self {
        HttpDirectory { base: base.into().trim_end_matches('/').to_string(), local }
    }
}

impl NodeDirectory for HttpDirectory {
    fn node(&self, id: &str, origin: &str) -> Option<Box<dyn NodeApi>> {
        Some(Box::new(HttpNode::new(id, format!("{}/nodes/{id}", self.base), origin)))
    }

    fn participates(&self, id: &str) -> bool {
        self.local.as_ref().is_none_or(|l| l.participates(id))
    }
}
