use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::http::{network_router, node_router, Server};
use super::*;
use crate::envelope::SigningIdentity;
use crate::group::Ristretto;
use crate::ledger::{EconomicsParams, EscrowId, LedgerTx, TxOutcome};
use crate::pre::{decrypt_elem, encrypt_elem, keygen, rekey, KeyPair};

const FEE: u64 = 100;
const DURATION: u64 = 200;
const COLLATERAL: u64 = 50;

struct Fixture {
    net: LocalNetwork,
    rng: ChaCha20Rng,
    owner: SigningIdentity,
    alice: KeyPair<Ristretto>,
    bob: KeyPair<Ristretto>,
}

fn node_key(i: u8) -> [u8; 32] {
    crate::sym::sha256(&[b"node", &[i]])
}

fn fixture(nodes: &[&str]) -> Fixture {
    let mut ledger = Ledger::new(EconomicsParams::default(), 7).unwrap();
    ledger.genesis_credit("alice", 1_000_000);
    let mut net_nodes = Vec::new();
    for (i, id) in nodes.iter().enumerate() {
        let pk = node_key(i as u8);
        ledger.register_node(id, &pk).unwrap();
        ledger.genesis_credit(id, 10_000);
        ledger.deposit_stake(id, 1_000, 100).unwrap();
        net_nodes.push(Node::new(*id, pk, PolicyStore::in_memory()));
    }
    let mut net = LocalNetwork::new(ledger);
    for n in net_nodes {
        net.add_node(n);
    }
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    let owner = SigningIdentity::generate(&mut rng);
    let alice = keygen(&mut rng);
    let bob = keygen(&mut rng);
    Fixture { net, rng, owner, alice, bob }
}

impl Fixture {
    fn escrow(&self, miner: &str) -> EscrowId {
        self.net.lock().escrow_policy("alice", miner, FEE, DURATION, COLLATERAL).unwrap()
    }

    fn deploy_with(&mut self, node: &str, id: u8, condition: Condition) -> Result<PolicyId, NodeError> {
        let escrow = self.escrow(node);
        let policy_id = [id; 32];
        let start = self.net.lock().height();
        let req = DeployRequest {
            policy_id,
            owner: self.owner.verifying_key().to_bytes(),
            material: PolicyMaterial::ReKey(rekey(&self.alice.secret, &self.bob.secret)),
            window: Window { t_start: start, t_end: start + DURATION },
            condition,
            escrow_ref: escrow,
        };
        self.net.handle(node, "bob").unwrap().deploy(&req)?;
        Ok(policy_id)
    }

    fn deploy(&mut self, node: &str, id: u8) -> PolicyId {
        self.deploy_with(node, id, Condition::Always).unwrap()
    }

    /// Encrypts a random element for alice, asks the node to transform it
    /// and checks whether bob recovers it.
    fn roundtrip(&mut self, node: &str, policy_id: PolicyId) -> Result<bool, NodeError> {
        let m = crate::group::Element::<Ristretto>::random(&mut self.rng);
        let ct = encrypt_elem(&self.alice.public, &m, &mut self.rng);
        let out = self.net.handle(node, "bob").unwrap().reencrypt(&ReencryptRequest::new(policy_id, &ct))?;
        Ok(decrypt_elem(&self.bob.secret, &out.ciphertext()?) == m)
    }
}

#[test]
fn deploy_and_reencrypt() {
    let mut f = fixture(&["n1"]);
    let id = f.deploy("n1", 1);
    assert!(f.roundtrip("n1", id).unwrap());
    assert_eq!(f.net.lock().node("n1").unwrap().deployed, 1);
    assert_eq!(f.roundtrip("n1", [9; 32]), Err(NodeError::UnknownPolicy));
}

#[test]
fn deploy_rejections() {
    let mut f = fixture(&["n1", "n2"]);
    f.deploy("n1", 1);
    assert_eq!(f.deploy_with("n1", 1, Condition::Always), Err(NodeError::DuplicatePolicy));

    // An escrow naming another miner does not pay this node.
    let escrow = f.escrow("n2");
    let req = DeployRequest {
        policy_id: [2; 32],
        owner: [0; 32],
        material: PolicyMaterial::ReKey(rekey(&f.alice.secret, &f.bob.secret)),
        window: Window { t_start: 0, t_end: 10 },
        condition: Condition::Always,
        escrow_ref: escrow,
    };
    let n1 = f.net.handle("n1", "x").unwrap();
    assert_eq!(n1.deploy(&req), Err(NodeError::NoEscrow));
    assert_eq!(n1.deploy(&DeployRequest { escrow_ref: 999, ..req.clone() }), Err(NodeError::NoEscrow));
    let backwards = DeployRequest { window: Window { t_start: 5, t_end: 4 }, ..req };
    assert!(matches!(n1.deploy(&backwards), Err(NodeError::Malformed(_))));
}

#[test]
fn quota_refusal() {
    let mut f = fixture(&["big", "small"]);
    {
        let mut l = f.net.lock();
        l.deposit_stake("big", 8_000, 100).unwrap();
    }
    // small holds 1000 of 10000 stake: capacity floor(1.1 * 0.1 * 100) = 11.
    let mut refused = None;
    for i in 0..20u8 {
        if let Err(e) = f.deploy_with("small", i, Condition::Always) {
            refused = Some((i, e));
            break;
        }
    }
    assert_eq!(refused, Some((11, NodeError::QuotaExceeded)));
}

#[test]
fn window_expiry_erases_material() {
    let mut f = fixture(&["n1"]);
    let id = f.deploy("n1", 1);
    let node = f.net.nodes["n1"].clone();
    for _ in 0..DURATION {
        f.net.lock().advance_block();
    }
    assert!(f.roundtrip("n1", id).unwrap());
    f.net.lock().advance_block();
    // The sweep has not run; the request itself notices and erases.
    assert_eq!(f.roundtrip("n1", id), Err(NodeError::OutsideWindow));
    node.with_store(|s| {
        let rec = s.get(&id).unwrap();
        assert_eq!(rec.status, PolicyStatus::Expired);
        assert!(rec.material.is_none());
    });
    assert_eq!(f.roundtrip("n1", id), Err(NodeError::OutsideWindow));
}

#[test]
fn block_sweep_expires() {
    let mut f = fixture(&["n1"]);
    let id = f.deploy("n1", 1);
    f.net.advance_blocks(DURATION + 1);
    f.net.nodes["n1"].with_store(|s| assert!(s.get(&id).unwrap().material.is_none()));
}

#[test]
fn not_yet_started() {
    let mut f = fixture(&["n1"]);
    let escrow = f.escrow("n1");
    let req = DeployRequest {
        policy_id: [1; 32],
        owner: f.owner.verifying_key().to_bytes(),
        material: PolicyMaterial::ReKey(rekey(&f.alice.secret, &f.bob.secret)),
        window: Window { t_start: 5, t_end: 50 },
        condition: Condition::Always,
        escrow_ref: escrow,
    };
    f.net.handle("n1", "o").unwrap().deploy(&req).unwrap();
    assert_eq!(f.roundtrip("n1", [1; 32]), Err(NodeError::OutsideWindow));
    f.net.advance_blocks(5);
    assert!(f.roundtrip("n1", [1; 32]).unwrap());
}

#[test]
fn payment_condition() {
    let mut f = fixture(&["n1"]);
    let cond = Condition::PaymentObserved { payer: "bob".into(), payee: "alice".into(), min_amount: 30 };
    let id = f.deploy_with("n1", 1, cond).unwrap();
    assert_eq!(f.roundtrip("n1", id), Err(NodeError::ConditionFalse));
    f.net.lock().genesis_credit("bob", 100);
    f.net.submit(LedgerTx::Payment { payer: "bob".into(), payee: "alice".into(), amount: 29 }).unwrap();
    assert_eq!(f.roundtrip("n1", id), Err(NodeError::ConditionFalse));
    f.net.submit(LedgerTx::Payment { payer: "bob".into(), payee: "alice".into(), amount: 30 }).unwrap();
    assert!(f.roundtrip("n1", id).unwrap());
}

#[test]
fn revocation() {
    let mut f = fixture(&["n1"]);
    let id = f.deploy("n1", 1);
    let node = f.net.handle("n1", "o").unwrap();
    let stranger = SigningIdentity::generate(&mut f.rng);
    assert_eq!(node.revoke(&RevokeRequest::new(&stranger, id, 1)), Err(NodeError::BadAuth));
    assert_eq!(node.revoke(&RevokeRequest::new(&f.owner, id, 0)), Err(NodeError::BadAuth));

    let before = f.net.lock().balance("alice");
    let payout = node.revoke(&RevokeRequest::new(&f.owner, id, 1)).unwrap().unwrap();
    // Revoked in the block it was deployed: nothing has been served.
    assert_eq!(payout.owner, FEE);
    assert_eq!(payout.miner, COLLATERAL);
    assert_eq!(f.net.lock().balance("alice"), before + FEE);
    assert_eq!(f.roundtrip("n1", id), Err(NodeError::Revoked));
    f.net.nodes["n1"].with_store(|s| assert!(s.get(&id).unwrap().material.is_none()));
    assert_eq!(node.revoke(&RevokeRequest::new(&f.owner, id, 2)), Err(NodeError::UnknownPolicy));
    f.net.lock().check_conservation().unwrap();
}

#[test]
fn revocation_midway_matches_formula() {
    let mut f = fixture(&["n1"]);
    let id = f.deploy("n1", 1);
    f.net.advance_blocks(80);
    let node = f.net.handle("n1", "o").unwrap();
    let payout = node.revoke(&RevokeRequest::new(&f.owner, id, 1)).unwrap().unwrap();
    assert_eq!((payout.owner, payout.miner), (60, 90));
}

#[test]
fn renewal() {
    let mut f = fixture(&["n1"]);
    let id = f.deploy("n1", 1);
    let node = f.net.handle("n1", "o").unwrap();
    assert_eq!(node.renew(&RenewRequest::new(&f.owner, id, DURATION - 1, 0, 1)), Err(NodeError::WindowShrink));
    let before = f.net.lock().balance("alice");
    node.renew(&RenewRequest::new(&f.owner, id, DURATION + 50, 25, 2)).unwrap();
    assert_eq!(f.net.lock().balance("alice"), before - 25);
    let escrow = f.net.nodes["n1"].with_store(|s| s.get(&id).unwrap().escrow_ref);
    assert_eq!(f.net.lock().escrow(escrow).unwrap().fee, FEE + 25);
    assert_eq!(f.net.lock().escrow(escrow).unwrap().duration, DURATION + 50);
    // Replaying the nonce fails even with a fresh signature.
    assert_eq!(node.renew(&RenewRequest::new(&f.owner, id, DURATION + 60, 0, 2)), Err(NodeError::BadAuth));
    f.net.advance_blocks(DURATION + 10);
    assert!(f.roundtrip("n1", id).unwrap());

    node.revoke(&RevokeRequest::new(&f.owner, id, 3)).unwrap();
    assert_eq!(node.renew(&RenewRequest::new(&f.owner, id, DURATION + 90, 0, 4)), Err(NodeError::UnknownPolicy));
}

#[test]
fn renewal_after_expiry_is_refused() {
    let mut f = fixture(&["n1"]);
    let id = f.deploy("n1", 1);
    for _ in 0..=DURATION {
        f.net.lock().advance_block();
    }
    let node = f.net.handle("n1", "o").unwrap();
    assert_eq!(node.renew(&RenewRequest::new(&f.owner, id, DURATION + 100, 0, 1)), Err(NodeError::UnknownPolicy));
    f.net.nodes["n1"].with_store(|s| assert!(s.get(&id).unwrap().material.is_none()));
}

#[test]
fn listing_is_per_owner() {
    let mut f = fixture(&["n1"]);
    let a = f.deploy("n1", 1);
    let b = f.deploy("n1", 2);
    let other = SigningIdentity::generate(&mut f.rng);
    let node = f.net.handle("n1", "o").unwrap();
    node.revoke(&RevokeRequest::new(&f.owner, b, 1)).unwrap();
    let listed = node.policies(&ListRequest::new(&f.owner, 1)).unwrap();
    assert_eq!(listed.len(), 2);
    let status = |id| listed.iter().find(|m| m.policy_id == id).unwrap().status;
    assert_eq!(status(a), PolicyStatus::Active);
    assert_eq!(status(b), PolicyStatus::Revoked);
    assert!(node.policies(&ListRequest::new(&other, 1)).unwrap().is_empty());
    let mut forged = ListRequest::new(&other, 1);
    forged.owner = f.owner.verifying_key().to_bytes();
    assert_eq!(node.policies(&forged), Err(NodeError::BadAuth));
}

#[test]
fn offline_node_refuses_everything() {
    let mut f = fixture(&["n1"]);
    let id = f.deploy("n1", 1);
    f.net.nodes["n1"].set_behavior(Behavior::Offline);
    assert_eq!(f.roundtrip("n1", id), Err(NodeError::Offline));
    assert_eq!(f.net.handle("n1", "o").unwrap().ping(), Err(NodeError::Offline));
    f.net.nodes["n1"].set_behavior(Behavior::Honest);
    assert!(f.roundtrip("n1", id).unwrap());
}

#[test]
fn cheating_behaviors() {
    let mut f = fixture(&["n1"]);
    let id = f.deploy("n1", 1);
    f.net.nodes["n1"].set_behavior(Behavior::RandomOutput);
    assert!(!f.roundtrip("n1", id).unwrap());
    f.net.nodes["n1"].set_behavior(Behavior::CheatExcept("bob".into()));
    assert!(f.roundtrip("n1", id).unwrap());
    let m = crate::group::Element::<Ristretto>::random(&mut f.rng);
    let ct = encrypt_elem(&f.alice.public, &m, &mut f.rng);
    let out = f.net.handle("n1", "auditor").unwrap().reencrypt(&ReencryptRequest::new(id, &ct)).unwrap();
    assert_ne!(decrypt_elem(&f.bob.secret, &out.ciphertext().unwrap()), m);
}

#[test]
fn colluder_keeps_material() {
    let mut f = fixture(&["n1"]);
    let id = f.deploy("n1", 1);
    let node = f.net.nodes["n1"].clone();
    node.set_behavior(Behavior::Retain);
    f.net.handle("n1", "o").unwrap().revoke(&RevokeRequest::new(&f.owner, id, 1)).unwrap();
    assert_eq!(f.roundtrip("n1", id), Err(NodeError::Revoked));
    let m = crate::group::Element::<Ristretto>::random(&mut f.rng);
    let ct = encrypt_elem(&f.alice.public, &m, &mut f.rng);
    let out = node.collude_reencrypt(&ReencryptRequest::new(id, &ct)).unwrap();
    assert_eq!(decrypt_elem(&f.bob.secret, &out.ciphertext().unwrap()), m);
    assert!(node.leak_material(&id).is_some());
}

#[test]
fn honest_node_forgets_revoked_material() {
    let mut f = fixture(&["n1"]);
    let id = f.deploy("n1", 1);
    let node = f.net.nodes["n1"].clone();
    assert!(node.leak_material(&id).is_some());
    f.net.handle("n1", "o").unwrap().revoke(&RevokeRequest::new(&f.owner, id, 1)).unwrap();
    assert!(node.leak_material(&id).is_none());
    let ct = encrypt_elem(&f.alice.public, &crate::group::Element::generator(), &mut f.rng);
    assert!(node.collude_reencrypt(&ReencryptRequest::new(id, &ct)).is_none());
}

fn persistent_fixture(dir: &std::path::Path) -> Fixture {
    let mut f = fixture(&[]);
    let pk = node_key(0);
    {
        let mut l = f.net.lock();
        l.register_node("n1", &pk).unwrap();
        l.genesis_credit("n1", 10_000);
        l.deposit_stake("n1", 1_000, 100).unwrap();
    }
    f.net.add_node(Node::new("n1", pk, PolicyStore::open(dir).unwrap()));
    f
}

fn files_contain(dir: &std::path::Path, needle: &[u8]) -> bool {
    std::fs::read_dir(dir).unwrap().any(|e| {
        let bytes = std::fs::read(e.unwrap().path()).unwrap();
        bytes.windows(needle.len()).any(|w| w == needle)
    })
}

#[test]
fn persisted_store_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let mut f = persistent_fixture(dir.path());
    let a = f.deploy("n1", 1);
    let b = f.deploy("n1", 2);
    f.net.handle("n1", "o").unwrap().renew(&RenewRequest::new(&f.owner, a, DURATION + 5, 0, 3)).unwrap();
    drop(f.net.nodes.remove("n1"));

    let store = PolicyStore::open(dir.path()).unwrap();
    assert_eq!(store.get(&a).unwrap().window.t_end, DURATION + 5);
    assert_eq!(store.get(&a).unwrap().last_nonce, 3);
    assert!(store.get(&b).unwrap().material.is_some());
}

#[test]
fn revoked_material_is_gone_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let mut f = persistent_fixture(dir.path());
    let id = f.deploy("n1", 1);
    let material = f.net.nodes["n1"].leak_material(&id).unwrap();
    let encoded = base64::Engine::encode(&base64::engine::general_purpose::STANDARD, &material);
    assert!(files_contain(dir.path(), encoded.as_bytes()));
    f.net.handle("n1", "o").unwrap().revoke(&RevokeRequest::new(&f.owner, id, 1)).unwrap();
    assert!(!files_contain(dir.path(), encoded.as_bytes()));
    let store = PolicyStore::open(dir.path()).unwrap();
    assert_eq!(store.get(&id).unwrap().status, PolicyStatus::Revoked);
}

#[test]
fn torn_log_tail_is_ignored() {
    let dir = tempfile::tempdir().unwrap();
    let mut f = persistent_fixture(dir.path());
    let a = f.deploy("n1", 1);
    drop(f.net.nodes.remove("n1"));
    let wal = dir.path().join("wal.ndjson");
    let mut text = std::fs::read_to_string(&wal).unwrap();
    assert!(!text.is_empty());
    text.push_str("{\"op\":\"deploy\",\"rec");
    std::fs::write(&wal, text).unwrap();
    let store = PolicyStore::open(dir.path()).unwrap();
    assert!(store.get(&a).is_some());
    assert_eq!(std::fs::read_to_string(&wal).unwrap(), "");

    std::fs::write(&wal, "garbage\n{}\n").unwrap();
    assert!(matches!(PolicyStore::open(dir.path()), Err(StoreError::Corrupt(_))));
}

#[test]
fn error_codes_round_trip() {
    let all = [
        NodeError::UnknownPolicy,
        NodeError::OutsideWindow,
        NodeError::ConditionFalse,
        NodeError::Revoked,
        NodeError::BadAuth,
        NodeError::QuotaExceeded,
        NodeError::DuplicatePolicy,
        NodeError::NoEscrow,
        NodeError::WindowShrink,
        NodeError::Offline,
        NodeError::Malformed("m".into()),
        NodeError::Storage("m".into()),
        NodeError::Network("m".into()),
        NodeError::Ledger { code: "UnknownEscrow".into(), message: "m".into() },
    ];
    for e in all {
        assert_eq!(NodeError::from_code(e.code(), "m".into()), e);
    }
}

#[test]
fn http_round_trip() {
    let mut f = fixture(&["n1", "n2"]);
    let id = f.deploy("n1", 1);
    let server = Server::start(network_router(f.net.clone(), None), "127.0.0.1:0").unwrap();
    let base = format!("{}/nodes/n1", server.url());
    let remote = HttpNode::new("n1", &base, "bob");
    assert_eq!(remote.ping().unwrap().node_id, "n1");

    let m = crate::group::Element::<Ristretto>::random(&mut f.rng);
    let ct = encrypt_elem(&f.alice.public, &m, &mut f.rng);
    let out = remote.reencrypt(&ReencryptRequest::new(id, &ct)).unwrap();
    assert_eq!(decrypt_elem(&f.bob.secret, &out.ciphertext().unwrap()), m);
    assert_eq!(remote.reencrypt(&ReencryptRequest::new([5; 32], &ct)), Err(NodeError::UnknownPolicy));
    assert_eq!(remote.policies(&ListRequest::new(&f.owner, 1)).unwrap().len(), 1);

    let ledger = HttpLedger::new(server.url());
    let outcome = ledger
        .submit(LedgerTx::Escrow {
            owner: "alice".into(),
            miner: "n2".into(),
            fee: FEE,
            duration: DURATION,
            collateral: 0,
        })
        .unwrap();
    let TxOutcome::Escrow { id: escrow } = outcome else { panic!("unexpected {outcome:?}") };
    let req = DeployRequest {
        policy_id: [3; 32],
        owner: f.owner.verifying_key().to_bytes(),
        material: PolicyMaterial::ReKey(rekey(&f.alice.secret, &f.bob.secret)),
        window: Window { t_start: 0, t_end: DURATION },
        condition: Condition::Always,
        escrow_ref: escrow,
    };
    let n2 = HttpNode::new("n2", format!("{}/nodes/n2", server.url()), "bob");
    n2.deploy(&req).unwrap();
    assert_eq!(n2.deploy(&req), Err(NodeError::DuplicatePolicy));
    assert_eq!(ledger.submit(LedgerTx::AdvanceBlocks { count: 3 }).unwrap(), TxOutcome::Height { height: 3 });
    let snap = ledger.snapshot().unwrap();
    assert_eq!(snap.height(), 3);
    assert_eq!(snap.node("n2").unwrap().deployed, 1);
    let payout = n2.revoke(&RevokeRequest::new(&f.owner, [3; 32], 1)).unwrap().unwrap();
    assert_eq!(payout.owner + payout.miner + payout.seized, FEE);
    assert!(matches!(
        ledger.submit(LedgerTx::WithdrawStake { node: "n1".into() }),
        Err(NodeError::Ledger { code, .. }) if code == "StillLocked"
    ));
}

#[test]
fn http_single_node_and_status_codes() {
    let mut f = fixture(&["n1"]);
    let id = f.deploy("n1", 1);
    let dir = tempfile::tempdir().unwrap();
    let ledger_path = dir.path().join("ledger.json");
    let server = Server::start(node_router(f.net.clone(), "n1", Some(ledger_path.clone())), "127.0.0.1:0").unwrap();
    let remote = HttpNode::new("n1", server.url(), "bob");
    let m = crate::group::Element::<Ristretto>::random(&mut f.rng);
    let ct = encrypt_elem(&f.alice.public, &m, &mut f.rng);
    assert!(remote.reencrypt(&ReencryptRequest::new(id, &ct)).is_ok());
    remote.revoke(&RevokeRequest::new(&f.owner, id, 1)).unwrap();
    assert!(Ledger::from_json(&std::fs::read_to_string(&ledger_path).unwrap()).is_ok());

    let client = reqwest::blocking::Client::new();
    let status = |resp: reqwest::blocking::Response| resp.status().as_u16();
    let body = serde_json::to_value(ReencryptRequest::new(id, &ct)).unwrap();
    assert_eq!(status(client.post(format!("{}/reencrypt", server.url())).json(&body).send().unwrap()), 403);
    let unknown = serde_json::to_value(ReencryptRequest::new([8; 32], &ct)).unwrap();
    assert_eq!(status(client.post(format!("{}/reencrypt", server.url())).json(&unknown).send().unwrap()), 404);
    let resp = client.post(format!("{}/reencrypt", server.url())).body("not json").send().unwrap();
    assert_eq!(resp.status().as_u16(), 400);
    let err: serde_json::Value = resp.json().unwrap();
    assert_eq!(err["error"], "Malformed");
    let stranger = SigningIdentity::generate(&mut f.rng);
    let resp = client.get(format!("{}/policies", server.url())).query(&[("owner", "zz")]).send().unwrap();
    assert_eq!(status(resp), 400);
    let bad = ListRequest { owner: f.owner.verifying_key().to_bytes(), auth: ListRequest::new(&stranger, 1).auth };
    assert_eq!(remote.policies(&bad), Err(NodeError::BadAuth));
    f.net.nodes["n1"].set_behavior(Behavior::Offline);
    assert_eq!(status(client.get(format!("{}/ping", server.url())).send().unwrap()), 503);
}
