//! Deterministic network simulator. Nodes, clients, the ledger and the
//! audit authority run in one process on a single logical clock, the block
//! height; actions scheduled for the same block run in script order.
//!
//! Every run produces an NDJSON event log whose hash depends only on the
//! scenario. With [`Transport::Sockets`] clients and committee members
//! reach the nodes over loopback HTTP instead.

pub mod metrics;
pub mod scenario;

use std::collections::{BTreeMap, BTreeSet};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde_json::{json, Value};

pub use metrics::*;
pub use scenario::{bundled, Action, BehaviorSpec, ClientSpec, Expect, NodeSpec, Op, Scenario, BUNDLED};

use crate::audit::{expected_check_interval, AuditAuthority, AuditEvent, ChallengeOutcome};
use crate::client::{Access, Client, ClientError, Connection, Grant, Identity, ShareOptions, SplitScheme};
use crate::envelope::hierarchy::normalize;
use crate::ledger::{Ledger, LedgerTx};
use crate::node::http::{network_router, Server};
use crate::node::{
    Behavior, HttpDirectory, HttpLedger, LedgerApi, LocalNetwork, Node, NodeDirectory, PolicyStatus, PolicyStore,
    ReencryptRequest,
};
use crate::storage::MemStore;
use crate::sym::sha256;

pub const AUDIT_ACCOUNT: &str = "audit";
/// Third party that receives leaked material and files the challenges.
pub const WATCHDOG_ACCOUNT: &str = "watchdog";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Transport {
    #[default]
    InProcess,
    Sockets,
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("simulation failed at height {height}: {message}")]
    Failed { height: u64, message: String },
}

pub struct SimOutput {
    pub metrics: SimMetrics,
    /// One JSON object per line.
    pub log: Vec<String>,
}

impl SimOutput {
    pub fn ndjson(&self) -> String {
        let mut out = String::with_capacity(self.log.iter().map(|l| l.len() + 1).sum());
        for line in &self.log {
            out.push_str(line);
            out.push('\n');
        }
        out
    }
}

pub fn log_hash(lines: &[String]) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for line in lines {
        h.update(line.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

pub fn run(scenario: &Scenario) -> Result<SimOutput, SimError> {
    run_with(scenario, Transport::InProcess)
}

pub fn run_with(scenario: &Scenario, transport: Transport) -> Result<SimOutput, SimError> {
    scenario.validate().map_err(SimError::Invalid)?;
    let mut sim = Sim::new(scenario, transport)?;
    sim.execute()?;
    Ok(sim.finish())
}

fn derived_seed(seed: u64, label: &[u8], name: &str) -> [u8; 32] {
    sha256(&[b"prekms/netsim", label, name.as_bytes(), &seed.to_be_bytes()])
}

pub fn node_public_key(id: &str, seed: u64) -> [u8; 32] {
    derived_seed(seed, b"node", id)
}

/// Ledger and nodes for `scenario`, before any block is sealed.
pub fn build_network(scenario: &Scenario) -> Result<LocalNetwork, SimError> {
    let invalid = |e: crate::ledger::LedgerError| SimError::Invalid(e.to_string());
    let mut ledger = Ledger::new(scenario.params.clone(), scenario.seed).map_err(invalid)?;
    ledger.genesis_credit(AUDIT_ACCOUNT, 1_000_000);
    for c in &scenario.clients {
        ledger.genesis_credit(&c.name, c.balance);
    }
    let mut nodes = Vec::new();
    for spec in &scenario.nodes {
        for id in spec.ids() {
            let pk = node_public_key(&id, scenario.seed);
            ledger.register_node(&id, &pk).map_err(invalid)?;
            ledger.genesis_credit(&id, spec.balance + spec.stake);
            ledger.deposit_stake(&id, spec.stake, scenario.blocks + 1).map_err(invalid)?;
            nodes.push(Node::new(id, pk, PolicyStore::in_memory()));
        }
    }
    let mut net = LocalNetwork::new(ledger);
    for n in nodes {
        net.add_node(n);
    }
    Ok(net)
}

fn error_code(e: &ClientError) -> String {
    match e {
        ClientError::Node(n) => n.code().to_string(),
        ClientError::Usage(_) => "Usage".into(),
        ClientError::NoAccess(_) => "NoAccess".into(),
        ClientError::Integrity(_) => "Integrity".into(),
        ClientError::Storage(_) => "Storage".into(),
    }
}

struct Sim<'a> {
    scenario: &'a Scenario,
    net: LocalNetwork,
    ledger_api: Box<dyn LedgerApi>,
    directory: Box<dyn NodeDirectory>,
    _server: Option<Server>,
    store: MemStore,
    audit: AuditAuthority,
    clients: BTreeMap<String, Client>,
    written: BTreeMap<(String, String), Vec<u8>>,
    behaviors: BTreeMap<String, BehaviorSpec>,
    height: u64,
    log: Vec<String>,
    metrics: SimMetrics,
    online_blocks: BTreeMap<String, u64>,
    round_heights: BTreeMap<u64, u64>,
    audit_log: Vec<AuditEvent>,
    genesis_supply: u64,
}

impl<'a> Sim<'a> {
    fn new(scenario: &'a Scenario, transport: Transport) -> Result<Self, SimError> {
        let net = build_network(scenario)?;
        let mut behaviors = BTreeMap::new();
        for spec in &scenario.nodes {
            for id in spec.ids() {
                behaviors.insert(id, spec.behavior.clone());
            }
        }
        let (ledger_api, directory, server): (Box<dyn LedgerApi>, Box<dyn NodeDirectory>, _) = match transport {
            Transport::InProcess => (Box::new(net.clone()), Box::new(net.clone()), None),
            Transport::Sockets => {
                let server = Server::start(network_router(net.clone(), None), "127.0.0.1:0")
                    .map_err(|e| SimError::Invalid(format!("cannot start server: {e}")))?;
                let url = server.url();
                (
                    Box::new(HttpLedger::new(url.clone())),
                    Box::new(HttpDirectory::new(url, Some(net.clone()))),
                    Some(server),
                )
            }
        };
        let mut clients = BTreeMap::new();
        for c in &scenario.clients {
            let mut rng = ChaCha20Rng::from_seed(derived_seed(scenario.seed, b"identity", &c.name));
            let mut client =
                Client::new(Identity::generate(&c.name, &mut rng), derived_seed(scenario.seed, b"client", &c.name));
            client.set_aont(c.aont);
            clients.insert(c.name.clone(), client);
        }
        let genesis_supply = net.lock().total_supply();
        let audit_seed =
            u64::from_be_bytes(derived_seed(scenario.seed, b"audit", "")[..8].try_into().expect("8 bytes"));
        let metrics = SimMetrics {
            scenario: scenario.name.clone(),
            seed: scenario.seed,
            nodes: behaviors.len(),
            ..Default::default()
        };
        Ok(Sim {
            scenario,
            audit: AuditAuthority::new(scenario.audit.clone(), AUDIT_ACCOUNT, audit_seed),
            net,
            ledger_api,
            directory,
            _server: server,
            store: MemStore::new(),
            clients,
            written: BTreeMap::new(),
            behaviors,
            height: 0,
            log: Vec::new(),
            metrics,
            online_blocks: BTreeMap::new(),
            round_heights: BTreeMap::new(),
            audit_log: Vec::new(),
            genesis_supply,
        })
    }

    fn emit(&mut self, event: &str, mut body: Value) {
        let obj = body.as_object_mut().expect("log bodies are objects");
        obj.insert("event".into(), event.into());
        obj.insert("h".into(), self.height.into());
        self.log.push(body.to_string());
    }

    fn fail(&self, message: impl Into<String>) -> SimError {
        SimError::Failed { height: self.height, message: message.into() }
    }

    fn execute(&mut self) -> Result<(), SimError> {
        let mut schedule: BTreeMap<u64, Vec<&'a Action>> = BTreeMap::new();
        for a in &self.scenario.actions {
            schedule.entry(a.at).or_default().push(a);
        }
        self.emit(
            "start",
            json!({ "scenario": self.scenario.name, "seed": self.scenario.seed, "nodes": self.metrics.nodes }),
        );
        self.apply_behaviors();
        for a in schedule.remove(&0).unwrap_or_default() {
            self.act(a);
        }
        for _ in 0..self.scenario.blocks {
            let report = self.net.advance_block();
            self.height = report.block.height;
            self.metrics.payouts.minted += report.minted;
            for id in &report.completed {
                let e = self.net.lock().escrow(*id).cloned().ok_or_else(|| self.fail("completed escrow vanished"))?;
                self.metrics.payouts.miner_earnings += e.fee + e.collateral;
            }
            self.emit("block", json!({ "hash": hex::encode(report.block.hash), "completed": report.completed.len() }));
            self.apply_behaviors();
            for a in schedule.remove(&self.height).unwrap_or_default() {
                self.act(a);
            }
            if self.scenario.audit_enabled {
                self.audit.on_block(&self.net, self.directory.as_ref()).map_err(|e| self.fail(e.to_string()))?;
            }
            for e in self.audit.drain_events() {
                self.record_audit_event(e);
            }
            self.check_conservation();
            for (id, node) in &self.net.nodes {
                if node.behavior() != Behavior::Offline {
                    *self.online_blocks.entry(id.clone()).or_default() += 1;
                }
            }
        }
        Ok(())
    }

    fn apply_behaviors(&mut self) {
        let h = self.height;
        let mut leaks = Vec::new();
        for (id, spec) in &self.behaviors {
            let node = &self.net.nodes[id];
            let want = match spec {
                BehaviorSpec::Honest => Behavior::Honest,
                BehaviorSpec::OfflineAfter { height } if h >= *height => Behavior::Offline,
                BehaviorSpec::OfflineAfter { .. } => Behavior::Honest,
                BehaviorSpec::CheaterRandomOutput { from } if h >= *from => Behavior::RandomOutput,
                BehaviorSpec::CheaterRandomOutput { .. } => Behavior::Honest,
                BehaviorSpec::Leaker { leak_height } => {
                    if h == *leak_height {
                        leaks.push(id.clone());
                    }
                    Behavior::Honest
                }
                BehaviorSpec::Colluder { .. } => Behavior::Retain,
            };
            if node.behavior() != want {
                node.set_behavior(want.clone());
                if h > 0 || want != Behavior::Honest {
                    self.log.push(
                        json!({ "event": "behavior", "h": h, "node": id, "behavior": format!("{want:?}") }).to_string(),
                    );
                }
            }
        }
        for id in leaks {
            self.leak(&id);
        }
    }

    /// The leaker hands every policy's material to the watchdog, which
    /// proves the leak on the ledger.
    fn leak(&mut self, node_id: &str) {
        let node = self.net.nodes[node_id].clone();
        let active: Vec<_> = node.with_store(|s| {
            s.records()
                .filter(|r| r.status == PolicyStatus::Active && r.material.is_some())
                .map(|r| r.policy_id)
                .collect()
        });
        for policy_id in active {
            let Some(evidence) = node.leak_material(&policy_id) else { continue };
            let payout = match self.audit.file_leak_challenge(&self.net, &policy_id, &evidence, WATCHDOG_ACCOUNT) {
                Ok(ChallengeOutcome::Proven(p)) => Some(p),
                _ => None,
            };
            self.metrics.leak_challenges.push(LeakRecord {
                height: self.height,
                node: node_id.to_string(),
                policy_id: hex::encode(policy_id),
                payout,
            });
        }
    }

    fn record_audit_event(&mut self, e: AuditEvent) {
        match &e {
            AuditEvent::RoundOpened { round, height, .. } => {
                self.round_heights.insert(*round, *height);
            }
            AuditEvent::Punished { forfeit, .. } => {
                self.metrics.punishments += 1;
                self.metrics.payouts.availability_forfeits += forfeit;
            }
            AuditEvent::CheckingRewards { voters, each, .. } => {
                self.metrics.payouts.checking_rewards += each * voters.len() as u64;
            }
            AuditEvent::LeakChallenge { payout: Some(p), .. }
            | AuditEvent::CorrectnessChallenge { payout: Some(p), .. } => {
                self.metrics.payouts.challenger_rewards += p.challenger;
                self.metrics.payouts.owner_refunds += p.owner;
                self.metrics.payouts.seized += p.seized;
            }
            _ => {}
        }
        let mut v = serde_json::to_value(&e).expect("serializable");
        v.as_object_mut().expect("tagged enum").insert("h".into(), self.height.into());
        self.log.push(v.to_string());
        self.audit_log.push(e);
    }

    fn check_conservation(&mut self) {
        let ledger = self.net.lock();
        self.metrics.conservation.checks += 1;
        let ok = ledger.check_conservation().is_ok()
            && ledger.total_supply() == self.genesis_supply + self.metrics.payouts.minted;
        if !ok {
            self.metrics.conservation.violations += 1;
        }
    }

    fn conn(&self) -> Connection<'_> {
        Connection { ledger: self.ledger_api.as_ref(), nodes: self.directory.as_ref(), store: &self.store }
    }

    fn count(&mut self, outcome: &Result<(), ClientError>) -> String {
        let key = match outcome {
            Ok(()) => "ok".to_string(),
            Err(e) => error_code(e),
        };
        *self.metrics.requests.entry(key.clone()).or_default() += 1;
        key
    }

    fn act(&mut self, a: &Action) {
        match &a.op {
            Op::Write { path, size, text } => {
                let data = match (size, text) {
                    (_, Some(t)) => t.as_bytes().to_vec(),
                    (Some(n), None) => {
                        let mut rng =
                            ChaCha20Rng::from_seed(derived_seed(self.scenario.seed, path.as_bytes(), &a.actor));
                        let mut buf = vec![0u8; *n];
                        rng.fill_bytes(&mut buf);
                        buf
                    }
                    (None, None) => Vec::new(),
                };
                let mut client = self.clients.remove(&a.actor).expect("validated actor");
                let res = client.write(&self.conn(), path, &data);
                self.clients.insert(a.actor.clone(), client);
                let cid = res.as_ref().map(|r| r.to_string()).unwrap_or_default();
                let outcome = self.count(&res.map(|_| ()));
                if outcome == "ok" {
                    self.written.insert((a.actor.clone(), normalize(path)), data.clone());
                }
                self.emit(
                    "write",
                    json!({ "actor": a.actor, "path": path, "size": data.len(), "cid": cid, "result": outcome }),
                );
            }
            Op::Share { path, to, duration, fee, collateral, scheme, nodes, condition } => {
                let opts = ShareOptions {
                    duration: *duration,
                    fee: *fee,
                    collateral: *collateral,
                    condition: condition.clone().unwrap_or_default(),
                    scheme: scheme
                        .as_deref()
                        .map(SplitScheme::parse)
                        .transpose()
                        .expect("validated scheme")
                        .unwrap_or_default(),
                    nodes: nodes.clone(),
                };
                let recipient = self.clients[to].identity().enc.public;
                let mut client = self.clients.remove(&a.actor).expect("validated actor");
                let res = client.share(&self.conn(), &recipient, path, &opts);
                self.clients.insert(a.actor.clone(), client);
                let (grant, placed) = match &res {
                    Ok(g) => {
                        let placed: Vec<String> = match &g.access {
                            Access::Single { node, .. } => vec![node.clone()],
                            Access::Split { shares, .. } => shares.iter().map(|s| s.node.clone()).collect(),
                        };
                        (g.id.clone(), placed)
                    }
                    Err(_) => (String::new(), Vec::new()),
                };
                if let Ok(g) = &res {
                    self.clients.get_mut(to).expect("validated recipient").import_grant(g.clone());
                }
                let outcome = self.count(&res.map(|_| ()));
                self.emit("share", json!({ "actor": a.actor, "to": to, "path": path, "grant": grant, "nodes": placed, "result": outcome }));
            }
            Op::Read { owner, path, expect } => {
                let path = normalize(path);
                let res = self.read(&a.actor, owner, &path);
                let data_ok = match &res {
                    Ok(data) => Some(self.written.get(&(owner.clone(), path.clone())) == Some(data)),
                    Err(_) => None,
                };
                let outcome = self.count(&res.map(|_| ()));
                match data_ok {
                    Some(true) => self.metrics.reads_ok += 1,
                    Some(false) => {
                        self.metrics.reads_ok += 1;
                        self.metrics.integrity_failures += 1;
                    }
                    None => self.metrics.reads_failed += 1,
                }
                let met = match expect {
                    Expect::Any => true,
                    Expect::Ok => data_ok == Some(true),
                    Expect::Fail => data_ok.is_none(),
                };
                if !met {
                    self.metrics
                        .unexpected
                        .push(format!("h{} {} read {owner}:{path}: {outcome}", self.height, a.actor));
                }
                self.emit("read", json!({ "actor": a.actor, "owner": owner, "path": path, "result": outcome }));
            }
            Op::Revoke { path } => {
                let mut client = self.clients.remove(&a.actor).expect("validated actor");
                let res = client.revoke(&self.conn(), path);
                self.clients.insert(a.actor.clone(), client);
                let mut revoked = 0;
                if let Ok(list) = &res {
                    revoked = list.len();
                    for p in list.iter().filter_map(|r| r.payout) {
                        self.metrics.payouts.owner_refunds += p.owner;
                        self.metrics.payouts.miner_earnings += p.miner;
                        self.metrics.payouts.seized += p.seized;
                    }
                }
                let outcome = self.count(&res.map(|_| ()));
                self.emit("revoke", json!({ "actor": a.actor, "path": path, "policies": revoked, "result": outcome }));
            }
            Op::Pay { to, amount } => {
                let tx = LedgerTx::Payment { payer: a.actor.clone(), payee: to.clone(), amount: *amount };
                let res = self.ledger_api.submit(tx).map(|_| ()).map_err(ClientError::from);
                let outcome = self.count(&res);
                self.emit("pay", json!({ "actor": a.actor, "to": to, "amount": amount, "result": outcome }));
            }
            Op::ColludeRead { owner, path, group } => {
                let path = normalize(path);
                let exposed = self.collude(&a.actor, owner, &path, group);
                self.metrics.collusion.attempts += 1;
                if exposed {
                    self.metrics.collusion.exposures += 1;
                }
                self.emit(
                    "collude_read",
                    json!({ "actor": a.actor, "owner": owner, "path": path, "group": group, "exposed": exposed }),
                );
            }
        }
    }

    fn grant_for(&self, reader: &str, owner: &str, path: &str) -> Option<Grant> {
        self.clients[reader]
            .state()
            .grants
            .iter()
            .rev()
            .find(|g| g.owner.name == owner && g.files.contains_key(path))
            .cloned()
    }

    fn read(&self, reader: &str, owner: &str, path: &str) -> Result<Vec<u8>, ClientError> {
        let client = &self.clients[reader];
        if reader == owner {
            return client.read(&self.conn(), path);
        }
        let grant = self
            .grant_for(reader, owner, path)
            .ok_or_else(|| ClientError::NoAccess(format!("{reader} holds no grant for {owner}:{path}")))?;
        client.read_granted(&self.conn(), &grant, path, &grant.files[path])
    }

    /// Tries to decrypt with the help of the group's colluding nodes only,
    /// bypassing every policy check on their side.
    fn collude(&self, reader: &str, owner: &str, path: &str, group: &str) -> bool {
        let Some(grant) = self.grant_for(reader, owner, path) else { return false };
        let colluders: BTreeSet<&str> = self
            .behaviors
            .iter()
            .filter(|(_, b)| matches!(b, BehaviorSpec::Colluder { group: g } if g == group))
            .map(|(id, _)| id.as_str())
            .collect();
        let ask = |node: &str, req: &ReencryptRequest| {
            colluders
                .contains(node)
                .then(|| self.net.nodes[node].collude_reencrypt(req))
                .flatten()
                .ok_or_else(|| ClientError::NoAccess(format!("{node} does not collude")))
        };
        let data = self.clients[reader].read_granted_via(&self.conn(), &grant, path, &grant.files[path], ask);
        data.is_ok_and(|d| self.written.get(&(owner.to_string(), path.to_string())) == Some(&d))
    }

    fn finish(mut self) -> SimOutput {
        self.emit("end", json!({}));
        let m = &mut self.metrics;
        m.final_height = self.height;
        let blocks = self.scenario.blocks.max(1) as f64;
        for id in self.net.nodes.keys() {
            let online = self.online_blocks.get(id).copied().unwrap_or(0);
            m.availability.insert(id.clone(), online as f64 / blocks);
        }

        // Checks per node, by the height of the round that checked it.
        let mut checks: BTreeMap<&str, Vec<(u64, u64)>> = BTreeMap::new();
        for e in &self.audit_log {
            if let AuditEvent::RoundOpened { round, height, checked_set, .. } = e {
                for n in checked_set {
                    checks.entry(n.as_str()).or_default().push((*round, *height));
                }
            }
        }
        let (mut gaps, mut total) = (0u64, 0u64);
        for list in checks.values() {
            for w in list.windows(2) {
                gaps += 1;
                total += w[1].1 - w[0].1;
            }
        }
        let registered = self.net.lock().nodes().filter(|(_, n)| n.stake >= self.scenario.params.s_min).count() as u64;
        m.check_interval = CheckInterval {
            gaps,
            mean_blocks: if gaps == 0 { 0.0 } else { total as f64 / gaps as f64 },
            expected_blocks: expected_check_interval(registered.max(1), self.scenario.params.h),
        };

        for (id, spec) in &self.behaviors {
            let faulty_from = spec.faulty_from();
            for e in &self.audit_log {
                if let AuditEvent::Punished { round, node, .. } = e {
                    let opened = self.round_heights.get(round).copied().unwrap_or(0);
                    if node == id && faulty_from.is_none_or(|f| opened < f) {
                        m.wrongful_punishments += 1;
                    }
                }
            }
            let Some(from) = faulty_from else { continue };
            let first_checked =
                checks.get(id.as_str()).and_then(|l| l.iter().find(|(_, h)| *h >= from)).map(|(r, _)| *r);
            let detected = self.audit_log.iter().find_map(|e| match e {
                AuditEvent::Punished { round, height, node, .. }
                    if node == id && self.round_heights.get(round).is_some_and(|h| *h >= from) =>
                {
                    Some((*round, *height))
                }
                _ => None,
            });
            m.detection.insert(
                id.clone(),
                Detection {
                    faulty_from: from,
                    first_checked_round: first_checked,
                    detected_round: detected.map(|d| d.0),
                    detected_height: detected.map(|d| d.1),
                    latency_blocks: detected.map(|d| d.1 - from),
                    detected_at_first_check: detected.is_some() && detected.map(|d| d.0) == first_checked,
                },
            );
        }

        let ledger = self.net.lock();
        m.conservation.expected_supply = self.genesis_supply + m.payouts.minted;
        m.conservation.final_supply = ledger.total_supply();
        drop(ledger);
        m.events = self.log.len();
        m.event_log_hash = log_hash(&self.log);
        SimOutput { metrics: self.metrics, log: self.log }
    }
}

#[cfg(test)]
mod tests;
