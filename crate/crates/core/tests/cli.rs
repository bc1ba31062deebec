//! Drives the `prekms` binary against a network directory in a temp dir.

use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use std::io::Write;

struct Env {
    root: tempfile::TempDir,
}

impl Env {
    fn new() -> Self {
        let env = Env { root: tempfile::tempdir().unwrap() };
        env.ok("alice", &["node", "init", "--count", "3"]);
        for user in ["alice", "bob", "carol"] {
            let card = env.ok(user, &["keygen", "--name", user]);
            std::fs::write(env.path(&format!("{user}.card")), card.stdout).unwrap();
            env.ok("alice", &["ledger", "fund", user, "1000000"]);
        }
        env
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.path().join(name)
    }

    fn cmd(&self, user: &str, args: &[&str]) -> Command {
        let mut c = Command::new(env!("CARGO_BIN_EXE_prekms"));
        c.env_clear()
            .env("PREKMS_HOME", self.path(user))
            .env("PREKMS_NETWORK", self.path("alice/network"))
            .env("PREKMS_STORE", self.path("store"))
            .env("PREKMS_PASSPHRASE", format!("{user}-pass"))
            .args(args);
        c
    }

    fn run(&self, user: &str, args: &[&str]) -> Output {
        self.cmd(user, args).output().unwrap()
    }

    fn run_stdin(&self, user: &str, args: &[&str], input: &[u8]) -> Output {
        let mut child =
            self.cmd(user, args).stdin(Stdio::piped()).stdout(Stdio::piped()).stderr(Stdio::piped()).spawn().unwrap();
        child.stdin.take().unwrap().write_all(input).unwrap();
        child.wait_with_output().unwrap()
    }

    fn ok(&self, user: &str, args: &[&str]) -> Output {
        let out = self.run(user, args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        out
    }

    fn code(&self, user: &str, args: &[&str]) -> i32 {
        self.run(user, args).status.code().unwrap()
    }

    fn p(&self, name: &str) -> String {
        self.path(name).to_str().unwrap().to_string()
    }
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn write_share_read_revoke() {
    let env = Env::new();
    let data: Vec<u8> = (0..150_000u32).map(|i| (i * 7 % 251) as u8).collect();
    std::fs::write(env.path("in.bin"), &data).unwrap();
    env.ok("alice", &["contacts", "add", &env.p("bob.card")]);

    let at = stdout(&env.ok("alice", &["write", "/docs/in.bin", &env.p("in.bin")]));
    assert!(at.trim().starts_with("local://"));
    assert_eq!(env.ok("alice", &["read", "/docs/in.bin"]).stdout, data);
    assert_eq!(env.ok("alice", &["read", at.trim()]).stdout, data);

    // No grant yet.
    assert_eq!(env.code("bob", &["read", "/docs/in.bin"]), 3);

    let grant = env.p("grant.json");
    env.ok("alice", &["share", "/docs", "--to", "bob", "--duration", "86400", "-o", &grant]);
    let g: serde_json::Value = serde_json::from_slice(&std::fs::read(&grant).unwrap()).unwrap();
    assert_eq!(g["path"], "docs");
    env.ok("bob", &["grants", "import", &grant]);
    assert_eq!(env.ok("bob", &["read", "/docs/in.bin"]).stdout, data);

    let rows: serde_json::Value =
        serde_json::from_slice(&env.ok("alice", &["policies", "list", "--json"]).stdout).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 1);
    let w = &rows[0]["window"];
    assert_eq!(w["t_end"].as_u64().unwrap() - w["t_start"].as_u64().unwrap(), 3600);

    // Carol holds bob's grant file but not bob's key.
    env.ok("carol", &["grants", "import", &grant]);
    assert_eq!(env.code("carol", &["read", "/docs/in.bin"]), 3);

    env.ok("alice", &["ledger", "advance", "5"]);
    env.ok("alice", &["revoke", "/docs"]);
    assert_eq!(env.code("bob", &["read", "/docs/in.bin"]), 3);
}

#[test]
fn policies_table_update_and_delete_all() {
    let env = Env::new();
    let empty = stdout(&env.ok("alice", &["policies", "list"]));
    assert_eq!(empty.lines().count(), 1, "{empty}");

    let bob_pk = serde_json::from_slice::<serde_json::Value>(&std::fs::read(env.path("bob.card")).unwrap()).unwrap()
        ["enc_pk"]
        .as_str()
        .unwrap()
        .to_string();
    env.run_stdin("alice", &["write", "/a/x"], b"x");
    env.run_stdin("alice", &["write", "/b/y"], b"y");
    env.ok("alice", &["share", "/a", "--to", &bob_pk, "--blocks", "100"]);
    env.ok("alice", &["share", "/b/y", "--to", &bob_pk, "--blocks", "100", "--scheme", "additive:2"]);
    let table = stdout(&env.ok("alice", &["policies", "list"]));
    assert_eq!(table.lines().count(), 4, "{table}");

    env.ok("alice", &["policies", "update", "/a", "--blocks", "50"]);
    let rows: serde_json::Value =
        serde_json::from_slice(&env.ok("alice", &["policies", "list", "--json"]).stdout).unwrap();
    let a = rows.as_array().unwrap().iter().find(|r| r["path"] == "a").unwrap();
    assert_eq!(a["window"]["t_end"], 150);

    env.ok("alice", &["policies", "delete", "--all"]);
    let rows: serde_json::Value =
        serde_json::from_slice(&env.ok("alice", &["policies", "list", "--json"]).stdout).unwrap();
    assert!(rows.as_array().unwrap().iter().all(|r| r["status"] == "revoked"));
    assert_eq!(env.code("alice", &["policies", "delete"]), 2);
}

#[test]
fn secrets_subtree_sharing() {
    let env = Env::new();
    env.ok("alice", &["contacts", "add", &env.p("bob.card")]);
    env.ok("alice", &["secret", "set", "db/user", "admin"]);
    env.ok("alice", &["secret", "set", "db/pass", "hunter2"]);
    env.run_stdin("alice", &["secret", "set", "api/key"], b"k-123");
    assert_eq!(env.ok("alice", &["secret", "get", "api/key"]).stdout, b"k-123");
    assert_eq!(env.code("alice", &["secret", "get", "nope"]), 2);

    let grant = env.p("g.json");
    env.ok("alice", &["share", "secrets/db", "--to", "bob", "-o", &grant]);
    env.ok("bob", &["grants", "import", &grant]);
    assert_eq!(env.ok("bob", &["secret", "get", "db/user"]).stdout, b"admin");
    assert_eq!(env.ok("bob", &["secret", "get", "db/pass"]).stdout, b"hunter2");
    assert_ne!(env.code("bob", &["secret", "get", "api/key"]), 0);
}

#[test]
fn contacts_resolve_by_address() {
    let env = Env::new();
    let out = env.ok("alice", &["contacts", "add", &env.p("carol.card")]);
    let line = String::from_utf8(out.stderr).unwrap();
    let addr = line.split(['(', ')']).nth(1).unwrap().to_string();
    assert!(addr.starts_with("0x") && addr.len() == 42);
    std::fs::write(env.path("bob.whoami"), env.ok("bob", &["whoami"]).stdout).unwrap();
    let out = env.ok("alice", &["contacts", "add", &env.p("bob.whoami")]);
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("added bob"));
    env.run_stdin("alice", &["write", "/f"], b"for carol");
    env.ok("alice", &["share", "/f", "--to", &addr, "-o", &env.p("g.json")]);
    env.ok("carol", &["grants", "import", &env.p("g.json")]);
    assert_eq!(env.ok("carol", &["read", "/f"]).stdout, b"for carol");
    assert_eq!(env.code("alice", &["share", "/f", "--to", "0x00"]), 2);
}

#[test]
fn decrypt_split_edek_and_delete() {
    let env = Env::new();
    let at = stdout(&env.run_stdin("alice", &["write", "/d/e"], b"envelope body"));
    let cid = at.trim().strip_prefix("local://").unwrap();
    let object = env.path("store").join(&cid[..2]).join(&cid[2..]);
    let split: serde_json::Value = serde_json::from_slice(
        &env.ok("alice", &["split-edek", object.to_str().unwrap(), "--body", &env.p("body")]).stdout,
    )
    .unwrap();
    assert_eq!(split["body_len"].as_u64().unwrap(), std::fs::metadata(env.path("body")).unwrap().len());
    assert!(!std::fs::read(env.path("body")).unwrap().windows(13).any(|w| w == b"envelope body"));
    assert_eq!(env.ok("alice", &["decrypt", object.to_str().unwrap()]).stdout, b"envelope body");
    assert_eq!(env.code("bob", &["decrypt", object.to_str().unwrap()]), 3);

    // Flip one byte of the stored object.
    let mut bytes = std::fs::read(&object).unwrap();
    let n = bytes.len();
    bytes[n - 1] ^= 1;
    std::fs::write(&object, bytes).unwrap();
    assert_eq!(env.code("alice", &["read", "/d/e"]), 5);

    env.ok("alice", &["delete", "/d"]);
    assert!(!object.exists());
    assert_eq!(env.code("alice", &["read", "/d/e"]), 3);
}

#[test]
fn keys_at_rest() {
    let env = Env::new();
    env.run_stdin("alice", &["write", "/k"], b"k");
    let id = env.path("alice/identity.json");
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        assert_eq!(std::fs::metadata(&id).unwrap().permissions().mode() & 0o777, 0o600);
        assert_eq!(std::fs::metadata(env.path("alice/state.json")).unwrap().permissions().mode() & 0o777, 0o600);
    }
    let mut c = env.cmd("alice", &["read", "/x"]);
    c.env("PREKMS_PASSPHRASE", "wrong");
    assert_eq!(c.output().unwrap().status.code(), Some(3));
    assert_eq!(env.code("alice", &["keygen", "--name", "alice"]), 2);
    let who: serde_json::Value = serde_json::from_slice(&env.ok("alice", &["whoami"]).stdout).unwrap();
    assert_eq!(who["card"]["name"], "alice");
}

#[test]
fn config_file_and_env() {
    let env = Env::new();
    let cfg = env.path("cfg.toml");
    std::fs::write(&cfg, format!("store = {:?}\nduration = 240\n", env.p("other-store"))).unwrap();
    std::fs::write(env.path("c.txt"), b"c").unwrap();
    let mut c = env.cmd("alice", &["--config", cfg.to_str().unwrap(), "write", "/c", &env.p("c.txt")]);
    c.env_remove("PREKMS_STORE");
    assert!(c.output().unwrap().status.success());
    assert!(env.path("other-store").exists());

    std::fs::write(&cfg, "bogus = 1\n").unwrap();
    assert_eq!(env.code("alice", &["--config", cfg.to_str().unwrap(), "whoami"]), 2);
    let mut c = env.cmd("alice", &["whoami"]);
    c.env("PREKMS_FEE", "lots");
    assert_eq!(c.output().unwrap().status.code(), Some(2));
}

#[test]
fn usage_errors_exit_2() {
    let env = Env::new();
    assert_eq!(env.code("alice", &["frobnicate"]), 2);
    assert_eq!(env.code("alice", &["share", "/x"]), 2);
    assert_eq!(env.code("alice", &["share", "/nothing", "--to", "bob", "--scheme", "threshold:4:3"]), 2);
    assert_eq!(env.code("alice", &["node", "init"]), 2);
}

#[test]
fn endpoint_unreachable_exits_4() {
    let env = Env::new();
    let mut c = env.cmd("alice", &["--endpoint", "http://127.0.0.1:9", "read", "/x"]);
    c.env_remove("PREKMS_NETWORK");
    assert_eq!(c.output().unwrap().status.code(), Some(4));
}

#[test]
fn sim_and_ledger_inspection() {
    let env = Env::new();
    let log = env.p("sim.ndjson");
    let out = env.ok("alice", &["sim", "leaker", "--log", &log]);
    let m: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let summary: serde_json::Value = serde_json::from_slice(&env.ok("alice", &["ledger", "log", &log]).stdout).unwrap();
    assert_eq!(summary["hash"], m["event_log_hash"]);
    assert_eq!(summary["events"], m["events"]);
    assert!(stdout(&env.ok("alice", &["sim", "--list"])).contains("cheater"));
    assert_eq!(env.code("alice", &["sim", "no-such-scenario"]), 2);

    let shown: serde_json::Value = serde_json::from_slice(&env.ok("alice", &["ledger", "show"]).stdout).unwrap();
    assert_eq!(shown["nodes"].as_array().unwrap().len(), 3);
    let file = env.path("alice/network/ledger.json");
    assert!(Path::new(&file).exists());
    env.ok("alice", &["ledger", "show", "--file", file.to_str().unwrap()]);
    assert_eq!(stdout(&env.ok("alice", &["ledger", "balance", "bob"])).trim(), "1000000");
}
