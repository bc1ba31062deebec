use super::*;
use crate::ledger::{EconomicsParams, Ledger, LedgerTx};
use crate::node::{Behavior, LocalNetwork, Node, PolicyStatus, PolicyStore};
use crate::storage::MemStore;
use crate::sym::sha256;

struct World {
    net: LocalNetwork,
    store: MemStore,
}

impl World {
    fn new(nodes: usize) -> Self {
        let mut ledger = Ledger::new(EconomicsParams::default(), 3).unwrap();
        for who in ["alice", "bob", "carol"] {
            ledger.genesis_credit(who, 1_000_000);
        }
        let mut list = Vec::new();
        for i in 0..nodes {
            let id = format!("n{i}");
            let pk = sha256(&[id.as_bytes()]);
            ledger.register_node(&id, &pk).unwrap();
            ledger.genesis_credit(&id, 10_000);
            ledger.deposit_stake(&id, 1_000, 1_000_000).unwrap();
            list.push(Node::new(id, pk, PolicyStore::in_memory()));
        }
        let mut net = LocalNetwork::new(ledger);
        for n in list {
            net.add_node(n);
        }
        World { net, store: MemStore::new() }
    }

    fn conn(&self) -> Connection<'_> {
        Connection { ledger: &self.net, nodes: &self.net, store: &self.store }
    }

    fn set(&self, node: &str, b: Behavior) {
        self.net.nodes[node].set_behavior(b);
    }
}

fn client(name: &str, seed: u8) -> Client {
    let mut rng = ChaCha20Rng::from_seed([seed; 32]);
    Client::new(Identity::generate(name, &mut rng), [seed.wrapping_add(100); 32])
}

fn short(duration: u64) -> ShareOptions {
    ShareOptions { duration, ..Default::default() }
}

#[test]
fn owner_reads_own_files_without_nodes() {
    let w = World::new(0);
    let mut alice = client("alice", 1);
    let at = alice.write(&w.conn(), "docs/a.txt", b"hello").unwrap();
    assert_eq!(alice.read(&w.conn(), "docs/a.txt").unwrap(), b"hello");
    assert_eq!(alice.read(&w.conn(), &at.to_string()).unwrap(), b"hello");
    let raw = w.store.get(&at).unwrap();
    assert!(!raw.windows(5).any(|s| s == b"hello"));
    assert_eq!(alice.decrypt(&raw, None).unwrap(), b"hello");
    assert_eq!(alice.decrypt(&raw, Some("docs/a.txt")).unwrap(), b"hello");
    assert!(alice.decrypt(&raw, Some("docs")).is_err());
    assert_eq!(alice.write(&w.conn(), "docs", b"x").unwrap_err().exit_code(), 2);
    assert_eq!(alice.write(&w.conn(), "/", b"x").unwrap_err().exit_code(), 2);
}

#[test]
fn share_file_to_recipient_through_node() {
    let w = World::new(3);
    let mut alice = client("alice", 1);
    let mut bob = client("bob", 2);
    let data: Vec<u8> = (0..100_000u32).map(|i| (i * 7) as u8).collect();
    alice.write(&w.conn(), "big.bin", &data).unwrap();
    let grant = alice.share(&w.conn(), &bob.identity().enc.public, "big.bin", &short(100)).unwrap();
    bob.import_grant(grant.clone());
    assert_eq!(bob.read(&w.conn(), "big.bin").unwrap(), data);
    let Access::Single { node, .. } = &grant.access else { panic!("single access") };
    assert!(w.net.nodes.contains_key(node));

    let json = serde_json::to_string(&grant).unwrap();
    assert_eq!(serde_json::from_str::<Grant>(&json).unwrap(), grant);

    // carol holds bob's grant but not bob's key
    let mut carol = client("carol", 3);
    carol.import_grant(grant);
    assert_eq!(carol.read(&w.conn(), "big.bin").unwrap_err().exit_code(), 3);
}

#[test]
fn read_without_any_policy_is_denied() {
    let w = World::new(3);
    let mut alice = client("alice", 1);
    let bob = client("bob", 2);
    let at = alice.write(&w.conn(), "a", b"secret").unwrap();
    for target in ["a".to_string(), at.to_string()] {
        let err = bob.read(&w.conn(), &target).unwrap_err();
        assert_eq!(err.exit_code(), 3, "{err}");
    }
}

#[test]
fn directory_share_covers_descendants_only() {
    let w = World::new(3);
    let mut alice = client("alice", 1);
    let mut bob = client("bob", 2);
    alice.write(&w.conn(), "proj/a.txt", b"A").unwrap();
    alice.write(&w.conn(), "proj/sub/b.txt", b"B").unwrap();
    alice.write(&w.conn(), "other/c.txt", b"C").unwrap();
    let grant = alice.share(&w.conn(), &bob.identity().enc.public, "proj", &short(100)).unwrap();
    assert_eq!(grant.files.keys().collect::<Vec<_>>(), ["proj/a.txt", "proj/sub/b.txt"]);
    bob.import_grant(grant.clone());
    assert_eq!(bob.read(&w.conn(), "proj/a.txt").unwrap(), b"A");
    assert_eq!(bob.read(&w.conn(), "/proj//sub/b.txt").unwrap(), b"B");
    assert_eq!(bob.read(&w.conn(), "other/c.txt").unwrap_err().exit_code(), 3);
    let c_ref = alice.state().files["other/c.txt"].clone();
    assert_eq!(bob.read_granted(&w.conn(), &grant, "other/c.txt", &c_ref).unwrap_err().exit_code(), 3);
    // a path inside the directory but claimed for the wrong object fails integrity
    let a_ref = alice.state().files["proj/a.txt"].clone();
    assert!(bob.read_granted(&w.conn(), &grant, "proj/sub/b.txt", &a_ref).is_err());
}

#[test]
fn split_schemes() {
    let w = World::new(5);
    let mut alice = client("alice", 1);
    let bob = client("bob", 2);
    alice.write(&w.conn(), "f", b"split me").unwrap();

    let opts = ShareOptions { scheme: SplitScheme::Additive { total: 3 }, ..short(100) };
    let additive = alice.share(&w.conn(), &bob.identity().enc.public, "f", &opts).unwrap();
    let opts = ShareOptions { scheme: SplitScheme::Threshold { threshold: 2, total: 3 }, ..short(100) };
    let threshold = alice.share(&w.conn(), &bob.identity().enc.public, "f", &opts).unwrap();
    let at = alice.state().files["f"].clone();

    for g in [&additive, &threshold] {
        let Access::Split { shares, .. } = &g.access else { panic!("split access") };
        let nodes: BTreeSet<_> = shares.iter().map(|s| &s.node).collect();
        assert_eq!(nodes.len(), 3, "shares on distinct nodes");
        assert_eq!(bob.read_granted(&w.conn(), g, "f", &at).unwrap(), b"split me");
    }

    let Access::Split { shares, .. } = &threshold.access else { unreachable!() };
    w.set(&shares[0].node, Behavior::Offline);
    assert_eq!(bob.read_granted(&w.conn(), &threshold, "f", &at).unwrap(), b"split me");
    w.set(&shares[1].node, Behavior::Offline);
    assert_eq!(bob.read_granted(&w.conn(), &threshold, "f", &at).unwrap_err().exit_code(), 4);
    w.set(&shares[0].node, Behavior::Honest);
    w.set(&shares[1].node, Behavior::Honest);

    let Access::Split { shares, .. } = &additive.access else { unreachable!() };
    w.set(&shares[2].node, Behavior::Offline);
    assert!(bob.read_granted(&w.conn(), &additive, "f", &at).is_err());
}

#[test]
fn pinned_nodes_are_used() {
    let w = World::new(3);
    let mut alice = client("alice", 1);
    let bob = client("bob", 2);
    alice.write(&w.conn(), "f", b"x").unwrap();
    let opts = ShareOptions { nodes: vec!["n2".into()], ..short(10) };
    let g = alice.share(&w.conn(), &bob.identity().enc.public, "f", &opts).unwrap();
    assert!(matches!(g.access, Access::Single { ref node, .. } if node == "n2"));
    let opts = ShareOptions { nodes: vec!["nope".into()], ..short(10) };
    assert_eq!(alice.share(&w.conn(), &bob.identity().enc.public, "f", &opts).unwrap_err().exit_code(), 4);
    assert_eq!(alice.share(&w.conn(), &bob.identity().enc.public, "missing", &short(10)).unwrap_err().exit_code(), 2);
}

#[test]
fn failed_split_deployment_is_rolled_back() {
    let w = World::new(3);
    let mut alice = client("alice", 1);
    let bob = client("bob", 2);
    alice.write(&w.conn(), "f", b"x").unwrap();
    let opts = ShareOptions {
        scheme: SplitScheme::Additive { total: 3 },
        nodes: vec!["n0".into(), "n1".into(), "ghost".into()],
        ..short(10)
    };
    assert!(alice.share(&w.conn(), &bob.identity().enc.public, "f", &opts).is_err());
    assert!(alice.state().policies.is_empty());
    let live: usize = w.net.nodes.values().map(|n| n.with_store(|s| s.active_ids().len())).sum();
    assert_eq!(live, 0);
}

#[test]
fn revoke_then_read_fails() {
    let w = World::new(3);
    let mut alice = client("alice", 1);
    let mut bob = client("bob", 2);
    alice.write(&w.conn(), "f", b"data").unwrap();
    let g = alice.share(&w.conn(), &bob.identity().enc.public, "f", &short(100)).unwrap();
    bob.import_grant(g.clone());
    w.net.advance_blocks(40);
    let revoked = alice.revoke(&w.conn(), &g.id).unwrap();
    assert_eq!(revoked.len(), 1);
    // fee 100 over 100 blocks, 40 elapsed
    let payout = revoked[0].payout.unwrap();
    assert_eq!((payout.owner, payout.miner), (60, 50 + 40));
    let err = bob.read(&w.conn(), "f").unwrap_err();
    assert!(matches!(err, ClientError::Node(NodeError::Revoked)), "{err}");
    assert_eq!(err.exit_code(), 3);
    assert!(alice.state().policies.is_empty());
    assert_eq!(alice.revoke(&w.conn(), &g.id).unwrap_err().exit_code(), 2);
}

#[test]
fn expiry_and_renewal() {
    let w = World::new(3);
    let mut alice = client("alice", 1);
    let mut bob = client("bob", 2);
    alice.write(&w.conn(), "f", b"data").unwrap();
    let g = alice.share(&w.conn(), &bob.identity().enc.public, "f", &short(10)).unwrap();
    bob.import_grant(g.clone());
    w.net.advance_blocks(8);
    assert_eq!(alice.renew(&w.conn(), "f", 20, 5).unwrap(), 1);
    w.net.advance_blocks(10);
    assert_eq!(bob.read(&w.conn(), "f").unwrap(), b"data");
    w.net.advance_blocks(15);
    assert_eq!(bob.read(&w.conn(), "f").unwrap_err().exit_code(), 3);
    // expired policies count as gone when revoked
    let r = alice.revoke(&w.conn(), "all").unwrap();
    assert_eq!(r[0].payout, None);
}

#[test]
fn payment_condition() {
    let w = World::new(3);
    let mut alice = client("alice", 1);
    let mut bob = client("bob", 2);
    alice.write(&w.conn(), "song.mp3", b"la la").unwrap();
    let condition = Condition::PaymentObserved { payer: "bob".into(), payee: "alice".into(), min_amount: 25 };
    let g = alice
        .share(&w.conn(), &bob.identity().enc.public, "song.mp3", &ShareOptions { condition, ..short(50) })
        .unwrap();
    bob.import_grant(g);
    let err = bob.read(&w.conn(), "song.mp3").unwrap_err();
    assert!(matches!(err, ClientError::Node(NodeError::ConditionFalse)));
    assert_eq!(err.exit_code(), 3);
    w.net.submit(LedgerTx::Payment { payer: "bob".into(), payee: "alice".into(), amount: 25 }).unwrap();
    assert_eq!(bob.read(&w.conn(), "song.mp3").unwrap(), b"la la");
}

#[test]
fn policy_listing() {
    let w = World::new(3);
    let mut alice = client("alice", 1);
    let bob = client("bob", 2);
    assert!(alice.list_policies(&w.conn()).unwrap().is_empty());
    alice.write(&w.conn(), "f", b"x").unwrap();
    alice.share(&w.conn(), &bob.identity().enc.public, "f", &short(10)).unwrap();
    let rows = alice.list_policies(&w.conn()).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].meta.status, PolicyStatus::Active);
    assert_eq!(rows[0].path.as_deref(), Some("f"));
    alice
        .share(
            &w.conn(),
            &bob.identity().enc.public,
            "f",
            &ShareOptions { scheme: SplitScheme::Additive { total: 2 }, ..short(10) },
        )
        .unwrap();
    assert_eq!(alice.list_policies(&w.conn()).unwrap().len(), 3);
    assert_eq!(alice.revoke(&w.conn(), "all").unwrap().len(), 3);
    assert!(alice.list_policies(&w.conn()).unwrap().is_empty());
}

#[test]
fn delete_removes_object_and_policies() {
    let w = World::new(3);
    let mut alice = client("alice", 1);
    let mut bob = client("bob", 2);
    alice.write(&w.conn(), "d/a", b"A").unwrap();
    alice.write(&w.conn(), "d/b", b"B").unwrap();
    alice.write(&w.conn(), "keep", b"K").unwrap();
    let g = alice.share(&w.conn(), &bob.identity().enc.public, "d/a", &short(10)).unwrap();
    alice.share(&w.conn(), &bob.identity().enc.public, "keep", &short(10)).unwrap();
    bob.import_grant(g);
    let report = alice.delete(&w.conn(), "d").unwrap();
    assert_eq!(report.objects.len(), 2);
    assert_eq!(report.revoked.len(), 1);
    assert_eq!(w.store.len(), 1);
    assert_eq!(alice.state().policies.len(), 1);
    assert!(alice.read(&w.conn(), "d/a").is_err());
    assert!(bob.read(&w.conn(), "d/a").is_err());
    assert_eq!(alice.read(&w.conn(), "keep").unwrap(), b"K");
    assert_eq!(alice.delete(&w.conn(), "d").unwrap_err().exit_code(), 2);
}

#[test]
fn rewrite_replaces_object() {
    let w = World::new(0);
    let mut alice = client("alice", 1);
    let first = alice.write(&w.conn(), "f", b"v1").unwrap();
    let second = alice.write(&w.conn(), "f", b"v2").unwrap();
    assert_ne!(first, second);
    assert_eq!(w.store.len(), 1);
    assert_eq!(alice.read(&w.conn(), "f").unwrap(), b"v2");
}

#[test]
fn secrets_share_by_subtree() {
    let w = World::new(3);
    let mut alice = client("alice", 1);
    let mut bob = client("bob", 2);
    alice.secret_set(&w.conn(), "db/user", b"admin").unwrap();
    alice.secret_set(&w.conn(), "db/pass", b"hunter2").unwrap();
    alice.secret_set(&w.conn(), "api/key", b"sk-123").unwrap();
    assert_eq!(alice.secret_get(&w.conn(), "db/pass").unwrap(), b"hunter2");
    assert_eq!(alice.secret_get(&w.conn(), "nope").unwrap_err().exit_code(), 2);
    let g = alice.share(&w.conn(), &bob.identity().enc.public, &secret_path("db/").unwrap(), &short(10)).unwrap();
    bob.import_grant(g);
    assert_eq!(bob.secret_get(&w.conn(), "db/user").unwrap(), b"admin");
    assert_eq!(bob.secret_get(&w.conn(), "db/pass").unwrap(), b"hunter2");
    assert!(bob.secret_get(&w.conn(), "api/key").is_err());
    assert!(secret_path("/").is_err());
}

#[test]
fn misbehaving_node_output_is_rejected() {
    let w = World::new(3);
    let mut alice = client("alice", 1);
    let mut bob = client("bob", 2);
    alice.write(&w.conn(), "f", b"data").unwrap();
    let g = alice.share(&w.conn(), &bob.identity().enc.public, "f", &short(10)).unwrap();
    bob.import_grant(g.clone());
    let Access::Single { node, .. } = &g.access else { unreachable!() };
    w.set(node, Behavior::RandomOutput);
    assert_eq!(bob.read(&w.conn(), "f").unwrap_err().exit_code(), 5);
}

#[test]
fn tampered_object_is_an_integrity_error() {
    let w = World::new(0);
    let mut alice = client("alice", 1);
    let at = alice.write(&w.conn(), "f", b"data").unwrap();
    w.store.tamper(&at, |b| *b.last_mut().unwrap() ^= 1);
    assert_eq!(alice.read(&w.conn(), "f").unwrap_err().exit_code(), 5);
}

#[test]
fn aont_files_round_trip() {
    let w = World::new(3);
    let mut alice = client("alice", 1);
    let mut bob = client("bob", 2);
    alice.set_aont(true);
    let data = vec![9u8; 10_000];
    let at = alice.write(&w.conn(), "f", &data).unwrap();
    assert!(Envelope::<Ristretto>::from_bytes(&w.store.get(&at).unwrap()).unwrap().is_aont());
    let g = alice.share(&w.conn(), &bob.identity().enc.public, "f", &short(10)).unwrap();
    bob.import_grant(g);
    assert_eq!(bob.read(&w.conn(), "f").unwrap(), data);
}

#[test]
fn state_survives_save_and_load() {
    let w = World::new(3);
    let mut alice = client("alice", 1);
    let bob = client("bob", 2);
    alice.write(&w.conn(), "a/b", b"persisted").unwrap();
    alice.share(&w.conn(), &bob.identity().enc.public, "a", &short(10)).unwrap();
    alice.add_contact(bob.identity().card());
    let json = alice.save();
    assert!(!json.contains("persisted"));
    let mut rng = ChaCha20Rng::from_seed([1; 32]);
    let identity = Identity::generate("alice", &mut rng);
    let mut back = Client::load(identity, &json, [5; 32]).unwrap();
    assert_eq!(back.read(&w.conn(), "a/b").unwrap(), b"persisted");
    assert_eq!(back.state().policies.len(), 1);
    assert_eq!(back.resolve_recipient("bob").unwrap(), bob.identity().enc.public);
    // nonces keep increasing across sessions
    assert_eq!(back.revoke(&w.conn(), "a").unwrap().len(), 1);

    let other = Identity::generate("mallory", &mut rng);
    assert!(Client::load(other, &json, [5; 32]).is_err());
}

#[test]
fn scheme_parsing() {
    assert_eq!(SplitScheme::parse("single").unwrap(), SplitScheme::Single);
    assert_eq!(SplitScheme::parse("additive:4").unwrap(), SplitScheme::Additive { total: 4 });
    assert_eq!(SplitScheme::parse("threshold:2:3").unwrap(), SplitScheme::Threshold { threshold: 2, total: 3 });
    for bad in ["", "additive:0", "threshold:4:3", "threshold:0:3", "split"] {
        assert!(SplitScheme::parse(bad).is_err(), "{bad}");
    }
    assert_eq!(SplitScheme::Threshold { threshold: 3, total: 5 }.nodes(), 5);
}
