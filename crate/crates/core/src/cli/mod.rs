pub mod config;
pub mod daemon;
pub mod session;

use std::fmt;
use std::io::{IsTerminal, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use prekms::client::identity::KDF_ITERATIONS;
use prekms::client::{ClientError, ContactCard, Grant, Identity, ShareOptions, SplitScheme};
use prekms::envelope::split_edek;
use prekms::group::Ristretto;
use prekms::ledger::{EconomicsParams, LedgerTx};
use prekms::netsim::{self, Scenario, Transport};
use prekms::node::http::{network_router, Server};
use prekms::node::Condition;

use config::{Backend, GlobalArgs, Settings};
use session::{node_err, write_private, NetworkDir, Session};

/// Error with the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError { code: 2, message: message.into() }
    }

    pub fn integrity(message: impl Into<String>) -> Self {
        CliError { code: 5, message: message.into() }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError { code: 1, message: format!("{}: {e}", path.display()) }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<ClientError> for CliError {
    fn from(e: ClientError) -> Self {
        CliError { code: e.exit_code(), message: e.to_string() }
    }
}

#[derive(Debug, Parser)]
#[command(name = "prekms", version, about = "Encrypt, store and share data through re-encryption nodes")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create and seal a new identity
    Keygen {
        #[arg(long)]
        name: String,
        /// Replace an existing identity file
        #[arg(long)]
        force: bool,
    },
    /// Print this identity's contact card
    Whoami,
    /// Manage the contact book used to resolve recipients
    #[command(subcommand)]
    Contacts(ContactsCmd),
    /// Encrypt a file (or stdin) to a logical path and store it
    Write {
        path: String,
        /// Input file; `-` or absent reads stdin
        file: Option<PathBuf>,
    },
    /// Fetch and decrypt a logical path or `scheme://cid`
    Read {
        target: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Remove a path from storage and revoke the policies sharing it
    Delete { path: String },
    /// Decrypt raw envelope bytes with the owner's keys
    Decrypt {
        file: PathBuf,
        /// Logical path the envelope was written to, if known
        #[arg(long)]
        path: Option<String>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Split an envelope into its EDEK and the keyless body
    SplitEdek {
        file: PathBuf,
        /// Write the body bytes here
        #[arg(long)]
        body: Option<PathBuf>,
    },
    /// Grant a recipient read access to a file or directory
    Share(ShareArgs),
    /// Import or list grants received from other users
    #[command(subcommand)]
    Grants(GrantsCmd),
    /// Extend policies matching a selector (path, grant id, policy id or `all`)
    Renew(RenewArgs),
    /// Revoke policies matching a selector (path, grant id, policy id or `all`)
    Revoke { selector: String },
    /// List, update or delete the policies this identity created
    #[command(subcommand)]
    Policies(PoliciesCmd),
    /// Short secrets stored under `secrets/`
    #[command(subcommand)]
    Secret(SecretCmd),
    /// Create, inspect and serve a network of re-encryption nodes
    #[command(subcommand)]
    Node(NodeCmd),
    /// Run a simulator scenario and print its metrics
    Sim(SimArgs),
    /// Inspect the ledger
    #[command(subcommand)]
    Ledger(LedgerCmd),
    /// Serve the client operations on a loopback HTTP API
    Daemon {
        #[arg(long, default_value = "127.0.0.1:7420")]
        listen: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum ContactsCmd {
    /// Add a contact card (a file, or `-` for stdin)
    Add {
        card: PathBuf,
    },
    List,
}

#[derive(Debug, Subcommand)]
pub enum GrantsCmd {
    /// Import a grant file (or `-` for stdin)
    Import {
        file: PathBuf,
    },
    List,
}

#[derive(Debug, clap::Args)]
pub struct ShareArgs {
    pub path: String,
    /// Contact name, `0x` address or hex public key
    #[arg(long)]
    pub to: String,
    /// Policy lifetime in seconds [default: from config]
    #[arg(long, conflicts_with = "blocks")]
    pub duration: Option<u64>,
    /// Policy lifetime in blocks
    #[arg(long)]
    pub blocks: Option<u64>,
    #[arg(long)]
    pub fee: Option<u64>,
    #[arg(long)]
    pub collateral: Option<u64>,
    /// `always`, `never`, `after:H`, `before:H`, `paid:PAYER:PAYEE:MIN` or JSON
    #[arg(long)]
    pub condition: Option<String>,
    /// `single`, `additive:M` or `threshold:T:N`
    #[arg(long, default_value = "single")]
    pub scheme: String,
    /// Pin shares to these nodes, in order
    #[arg(long = "node")]
    pub nodes: Vec<String>,
    /// Write the grant here instead of stdout
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct RenewArgs {
    pub selector: String,
    /// Extension in seconds
    #[arg(long, conflicts_with = "blocks")]
    pub duration: Option<u64>,
    #[arg(long)]
    pub blocks: Option<u64>,
    /// Extra fee paid into each escrow
    #[arg(long, default_value_t = 0)]
    pub fee: u64,
}

#[derive(Debug, Subcommand)]
pub enum PoliciesCmd {
    List {
        #[arg(long)]
        json: bool,
    },
    /// Same as `renew`
    Update(RenewArgs),
    /// Same as `revoke`; `--all` revokes everything
    Delete {
        #[arg(required_unless_present = "all")]
        selector: Option<String>,
        #[arg(long)]
        all: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum SecretCmd {
    Set {
        name: String,
        /// Value; read from stdin when absent
        value: Option<String>,
    },
    Get {
        name: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum NodeCmd {
    /// Create a network directory with `count` staked nodes
    Init {
        #[arg(long, default_value_t = 3)]
        count: u32,
        #[arg(long, default_value_t = 1_000)]
        stake: u64,
        /// Free balance per node, for collateral
        #[arg(long, default_value_t = 10_000)]
        balance: u64,
        #[arg(long, default_value = "n")]
        prefix: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Economics parameters as JSON, merged over the defaults
        #[arg(long)]
        params: Option<String>,
    },
    /// Add one staked node to the network directory
    Add {
        id: String,
        #[arg(long, default_value_t = 1_000)]
        stake: u64,
        #[arg(long, default_value_t = 10_000)]
        balance: u64,
    },
    List,
    /// Serve the network directory over HTTP
    Serve {
        #[arg(long, default_value = "127.0.0.1:7400")]
        listen: String,
        /// Seal a block every this many seconds; 0 leaves it to `ledger advance`
        #[arg(long, default_value_t = 0)]
        block_interval: u64,
    },
}

#[derive(Debug, clap::Args)]
pub struct SimArgs {
    /// Bundled scenario name or a scenario JSON file
    #[arg(required_unless_present = "list")]
    pub scenario: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub blocks: Option<u64>,
    /// Write the NDJSON event log here
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Reach nodes over loopback sockets instead of in-process calls
    #[arg(long)]
    pub sockets: bool,
    /// List bundled scenarios
    #[arg(long)]
    pub list: bool,
}

#[derive(Debug, Subcommand)]
pub enum LedgerCmd {
    /// Summarize a ledger state file, or the configured network
    Show {
        #[arg(long)]
        file: Option<PathBuf>,
        /// Print the whole state document
        #[arg(long)]
        full: bool,
    },
    Balance {
        account: Option<String>,
    },
    /// Credit an account in a local network directory
    Fund {
        account: String,
        amount: u64,
    },
    /// Seal blocks
    Advance {
        blocks: u64,
    },
    /// Transfer tokens (visible to payment conditions)
    Pay {
        to: String,
        amount: u64,
    },
    /// Summarize a simulator event log
    Log {
        file: PathBuf,
    },
}

fn print_json<T: serde::Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn read_input(file: Option<&Path>) -> Result<Vec<u8>, CliError> {
    match file {
        Some(p) if p != Path::new("-") => std::fs::read(p).map_err(|e| CliError::io(p, e)),
        _ => {
            let mut buf = Vec::new();
            std::io::stdin().read_to_end(&mut buf).map_err(|e| CliError::io(Path::new("<stdin>"), e))?;
            Ok(buf)
        }
    }
}

fn write_output(output: Option<&Path>, data: &[u8]) -> Result<(), CliError> {
    match output {
        Some(p) if p != Path::new("-") => std::fs::write(p, data).map_err(|e| CliError::io(p, e)),
        _ => {
            let mut out = std::io::stdout().lock();
            out.write_all(data).and_then(|_| out.flush()).map_err(|e| CliError::io(Path::new("<stdout>"), e))
        }
    }
}

fn duration_blocks(s: &Session, seconds: Option<u64>, blocks: Option<u64>) -> Result<u64, CliError> {
    match blocks {
        Some(0) => Err(CliError::usage("duration must be positive")),
        Some(b) => Ok(b),
        None => s.network.blocks_for_seconds(seconds.unwrap_or(s.settings.duration)),
    }
}

pub fn share_options(s: &Session, a: &ShareArgs) -> Result<ShareOptions, CliError> {
    Ok(ShareOptions {
        duration: duration_blocks(s, a.duration, a.blocks)?,
        fee: a.fee.unwrap_or(s.settings.fee),
        collateral: a.collateral.unwrap_or(s.settings.collateral),
        condition: a
            .condition
            .as_deref()
            .map(Condition::parse)
            .transpose()
            .map_err(CliError::usage)?
            .unwrap_or_default(),
        scheme: SplitScheme::parse(&a.scheme).map_err(CliError::usage)?,
        nodes: a.nodes.clone(),
    })
}

fn renew(s: &mut Session, a: &RenewArgs) -> Result<(), CliError> {
    let extra = duration_blocks(s, a.duration, a.blocks)?;
    let (client, conn) = s.parts();
    let n = client.renew(&conn, &a.selector, extra, a.fee)?;
    s.save()?;
    eprintln!("renewed {n} policies by {extra} blocks");
    Ok(())
}

fn revoke(s: &mut Session, selector: &str) -> Result<(), CliError> {
    let (client, conn) = s.parts();
    let done = client.revoke(&conn, selector)?;
    s.save()?;
    print_json(&done);
    Ok(())
}

fn policy_table(rows: &[prekms::client::PolicyRow]) -> String {
    let mut out = format!(
        "{:<16} {:<10} {:<8} {:>8} {:>8}  {:<24} {}\n",
        "POLICY", "NODE", "STATUS", "START", "END", "PATH", "RECIPIENT"
    );
    for r in rows {
        let id = hex::encode(r.meta.policy_id);
        out.push_str(&format!(
            "{:<16} {:<10} {:<8} {:>8} {:>8}  {:<24} {}\n",
            &id[..16],
            r.node,
            format!("{:?}", r.meta.status).to_lowercase(),
            r.meta.window.t_start,
            r.meta.window.t_end,
            r.path.as_deref().map(|p| format!("/{p}")).unwrap_or_else(|| "-".into()),
            r.recipient.as_deref().map(|p| &p[..p.len().min(16)]).unwrap_or("-"),
        ));
    }
    out
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let settings = Settings::resolve(&cli.global)?;
    match cli.command {
        Command::Keygen { name, force } => keygen(&settings, &name, force),
        Command::Whoami => {
            let json = std::fs::read_to_string(&settings.identity).map_err(|e| CliError::io(&settings.identity, e))?;
            let card = Identity::card_of_sealed(&json)?;
            print_json(&serde_json::json!({ "card": card, "address": card.address() }));
            Ok(())
        }
        Command::Sim(a) => sim(a),
        Command::Node(cmd) => node(&settings, cmd),
        Command::Ledger(LedgerCmd::Log { file }) => ledger_log(&file),
        Command::Ledger(LedgerCmd::Show { file: Some(file), full }) => {
            let json = std::fs::read_to_string(&file).map_err(|e| CliError::io(&file, e))?;
            let ledger = prekms::ledger::Ledger::from_json(&json).map_err(|e| CliError::integrity(e.to_string()))?;
            show_ledger(&ledger, full);
            Ok(())
        }
        Command::Ledger(cmd @ (LedgerCmd::Show { .. } | LedgerCmd::Fund { .. } | LedgerCmd::Advance { .. })) => {
            ledger_admin(&settings, cmd)
        }
        Command::Daemon { listen } => daemon::serve(Session::open(settings)?, &listen),
        cmd => client_command(Session::open(settings)?, cmd),
    }
}

fn client_command(mut s: Session, cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Contacts(ContactsCmd::Add { card }) => {
            let mut doc: serde_json::Value = serde_json::from_slice(&read_input(Some(&card))?)
                .map_err(|e| CliError::usage(format!("contact card: {e}")))?;
            // `whoami` output wraps the card next to its address
            if let Some(inner) = doc.get_mut("card") {
                doc = inner.take();
            }
            let card: ContactCard =
                serde_json::from_value(doc).map_err(|e| CliError::usage(format!("contact card: {e}")))?;
            card.public_key()?;
            eprintln!("added {} ({})", card.name, card.address());
            s.client.add_contact(card);
            s.save()
        }
        Command::Contacts(ContactsCmd::List) => {
            for c in s.client.state().contacts.contacts.values() {
                println!("{:<16} {}  {}", c.name, c.address(), hex::encode(c.enc_pk));
            }
            Ok(())
        }
        Command::Write { path, file } => {
            let data = read_input(file.as_deref())?;
            let (client, conn) = s.parts();
            let at = client.write(&conn, &path, &data)?;
            s.save()?;
            println!("{at}");
            Ok(())
        }
        Command::Read { target, output } => {
            let data = s.client.read(&s.conn(), &target)?;
            write_output(output.as_deref(), &data)
        }
        Command::Delete { path } => {
            let (client, conn) = s.parts();
            let report = client.delete(&conn, &path)?;
            s.save()?;
            print_json(&report);
            Ok(())
        }
        Command::Decrypt { file, path, output } => {
            let bytes = read_input(Some(&file))?;
            let data = s.client.decrypt(&bytes, path.as_deref())?;
            write_output(output.as_deref(), &data)
        }
        Command::SplitEdek { file, body } => {
            let bytes = read_input(Some(&file))?;
            let (edek, opaque) = split_edek::<Ristretto>(&bytes).map_err(ClientError::from)?;
            if let Some(p) = body {
                std::fs::write(&p, &opaque.bytes).map_err(|e| CliError::io(&p, e))?;
            }
            print_json(&serde_json::json!({
                "edek": hex::encode(edek.to_bytes()),
                "suite": opaque.suite,
                "flags": opaque.flags,
                "body_len": opaque.bytes.len(),
            }));
            Ok(())
        }
        Command::Share(a) => {
            let opts = share_options(&s, &a)?;
            let recipient = s.client.resolve_recipient(&a.to)?;
            let (client, conn) = s.parts();
            let grant = client.share(&conn, &recipient, &a.path, &opts)?;
            s.save()?;
            let json = serde_json::to_string_pretty(&grant).expect("serializable");
            eprintln!("grant {} for /{} ({} blocks)", grant.id, grant.path, opts.duration);
            write_output(a.output.as_deref(), format!("{json}\n").as_bytes())
        }
        Command::Grants(GrantsCmd::Import { file }) => {
            let grant: Grant = serde_json::from_slice(&read_input(Some(&file))?)
                .map_err(|e| CliError::usage(format!("grant: {e}")))?;
            eprintln!(
                "imported grant {} from {} for /{} ({} files)",
                grant.id,
                grant.owner.name,
                grant.path,
                grant.files.len()
            );
            s.client.add_contact(grant.owner.clone());
            s.client.import_grant(grant);
            s.save()
        }
        Command::Grants(GrantsCmd::List) => {
            for g in &s.client.state().grants {
                println!("{:<16} {:<12} /{:<24} {} files", g.id, g.owner.name, g.path, g.files.len());
            }
            Ok(())
        }
        Command::Renew(a) | Command::Policies(PoliciesCmd::Update(a)) => renew(&mut s, &a),
        Command::Revoke { selector } => revoke(&mut s, &selector),
        Command::Policies(PoliciesCmd::Delete { selector, all }) => {
            let selector = if all { "all".to_string() } else { selector.expect("required by clap") };
            revoke(&mut s, &selector)
        }
        Command::Policies(PoliciesCmd::List { json }) => {
            let (client, conn) = s.parts();
            let rows = client.list_policies(&conn)?;
            s.save()?;
            if json {
                print_json(&rows);
            } else {
                print!("{}", policy_table(&rows));
            }
            Ok(())
        }
        Command::Secret(SecretCmd::Set { name, value }) => {
            let value = match value {
                Some(v) => v.into_bytes(),
                None => read_input(None)?,
            };
            let (client, conn) = s.parts();
            let at = client.secret_set(&conn, &name, &value)?;
            s.save()?;
            println!("{at}");
            Ok(())
        }
        Command::Secret(SecretCmd::Get { name }) => {
            let value = s.client.secret_get(&s.conn(), &name)?;
            write_output(None, &value)?;
            if std::io::stdout().is_terminal() {
                println!();
            }
            Ok(())
        }
        Command::Ledger(LedgerCmd::Balance { account }) => {
            let account = account.unwrap_or_else(|| s.client.identity().account.clone());
            let ledger = s.network.ledger.snapshot().map_err(node_err)?;
            println!("{}", ledger.balance(&account));
            Ok(())
        }
        Command::Ledger(LedgerCmd::Pay { to, amount }) => {
            let payer = s.client.identity().account.clone();
            let out = s.network.ledger.submit(LedgerTx::Payment { payer, payee: to, amount }).map_err(node_err)?;
            s.network.save()?;
            print_json(&out);
            Ok(())
        }
        _ => unreachable!("dispatched in run"),
    }
}

fn keygen(settings: &Settings, name: &str, force: bool) -> Result<(), CliError> {
    if name.is_empty() || name.contains(char::is_whitespace) {
        return Err(CliError::usage("name must be a non-empty word"));
    }
    if settings.identity.exists() && !force {
        return Err(CliError::usage(format!("{} exists; pass --force to replace it", settings.identity.display())));
    }
    let passphrase = settings.passphrase(true)?;
    let mut rng = rand::rngs::OsRng;
    let identity = Identity::generate(name, &mut rng);
    write_private(&settings.identity, identity.seal(&passphrase, KDF_ITERATIONS, &mut rng).as_bytes())?;
    print_json(&identity.card());
    Ok(())
}

fn sim(a: SimArgs) -> Result<(), CliError> {
    if a.list {
        for name in netsim::BUNDLED {
            println!("{name}");
        }
        return Ok(());
    }
    let name = a.scenario.expect("required by clap");
    let mut scenario = match netsim::bundled(&name) {
        Some(s) => s,
        None => {
            let json = std::fs::read_to_string(&name)
                .map_err(|e| CliError::usage(format!("{name}: not a bundled scenario and not readable: {e}")))?;
            Scenario::from_json(&json).map_err(|e| CliError::usage(format!("{name}: {e}")))?
        }
    };
    if let Some(seed) = a.seed {
        scenario.seed = seed;
    }
    if let Some(blocks) = a.blocks {
        scenario.blocks = blocks;
    }
    let transport = if a.sockets { Transport::Sockets } else { Transport::InProcess };
    let out = netsim::run_with(&scenario, transport).map_err(|e| match e {
        netsim::SimError::Invalid(m) => CliError::usage(m),
        other => CliError { code: 1, message: other.to_string() },
    })?;
    if let Some(p) = &a.log {
        std::fs::write(p, out.ndjson()).map_err(|e| CliError::io(p, e))?;
    }
    print_json(&out.metrics);
    Ok(())
}

fn ledger_log(file: &Path) -> Result<(), CliError> {
    let text = std::fs::read_to_string(file).map_err(|e| CliError::io(file, e))?;
    let lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut counts = std::collections::BTreeMap::<String, u64>::new();
    let mut last_height = 0;
    for (i, line) in lines.iter().enumerate() {
        let v: serde_json::Value =
            serde_json::from_str(line).map_err(|e| CliError::integrity(format!("line {}: {e}", i + 1)))?;
        *counts.entry(v["event"].as_str().unwrap_or("?").to_string()).or_default() += 1;
        last_height = v["h"].as_u64().unwrap_or(last_height);
    }
    print_json(&serde_json::json!({
        "events": lines.len(),
        "final_height": last_height,
        "hash": netsim::log_hash(&lines),
        "by_kind": counts,
    }));
    Ok(())
}

fn show_ledger(ledger: &prekms::ledger::Ledger, full: bool) {
    if full {
        println!("{}", ledger.to_json());
        return;
    }
    let mut by_state = std::collections::BTreeMap::<String, u64>::new();
    for e in ledger.escrows() {
        *by_state.entry(format!("{:?}", e.state).to_lowercase()).or_default() += 1;
    }
    let nodes: Vec<_> = ledger
        .nodes()
        .map(|(id, n)| serde_json::json!({ "id": id, "stake": n.stake, "deployed": n.deployed, "healthy": n.healthy, "rewards": n.rewards_total }))
        .collect();
    let head = ledger.block();
    print_json(&serde_json::json!({
        "height": head.height,
        "head": hex::encode(head.hash),
        "seconds": head.timestamp,
        "supply": ledger.total_supply(),
        "seized_pool": ledger.seized_pool(),
        "reward_pool": ledger.reward_pool(),
        "escrows": by_state,
        "nodes": nodes,
    }));
}

fn ledger_admin(settings: &Settings, cmd: LedgerCmd) -> Result<(), CliError> {
    let network = session::Network::open(&settings.backend)?;
    match cmd {
        LedgerCmd::Show { full, .. } => {
            show_ledger(&network.ledger.snapshot().map_err(node_err)?, full);
            Ok(())
        }
        LedgerCmd::Advance { blocks } => {
            let out = network.ledger.submit(LedgerTx::AdvanceBlocks { count: blocks }).map_err(node_err)?;
            network.save()?;
            print_json(&out);
            Ok(())
        }
        LedgerCmd::Fund { account, amount } => {
            let Some(dir) = &network.dir else {
                return Err(CliError::usage("funding needs a local network directory (--network)"));
            };
            dir.net.lock().genesis_credit(&account, amount);
            dir.save()?;
            println!("{}", dir.net.lock().balance(&account));
            Ok(())
        }
        _ => unreachable!("dispatched in run"),
    }
}

fn network_dir(settings: &Settings) -> Result<&Path, CliError> {
    match &settings.backend {
        Backend::Dir(p) => Ok(p),
        Backend::Http(_) => {
            Err(CliError::usage("this command needs a local network directory (--network), not --endpoint"))
        }
    }
}

fn node(settings: &Settings, cmd: NodeCmd) -> Result<(), CliError> {
    match cmd {
        NodeCmd::Init { count, stake, balance, prefix, seed, params } => {
            let params = match params {
                None => EconomicsParams::default(),
                Some(json) => {
                    let mut base = serde_json::to_value(EconomicsParams::default()).expect("serializable");
                    let patch: serde_json::Value =
                        serde_json::from_str(&json).map_err(|e| CliError::usage(format!("--params: {e}")))?;
                    let (Some(b), Some(p)) = (base.as_object_mut(), patch.as_object()) else {
                        return Err(CliError::usage("--params must be a JSON object"));
                    };
                    b.extend(p.clone());
                    serde_json::from_value(base).map_err(|e| CliError::usage(format!("--params: {e}")))?
                }
            };
            let mut dir = NetworkDir::create(network_dir(settings)?, params, seed)?;
            for i in 0..count {
                dir.add_node(&format!("{prefix}{i}"), stake, balance, u64::MAX / 2)?;
            }
            dir.save()?;
            eprintln!("created {} with {count} nodes", dir.root.display());
            Ok(())
        }
        NodeCmd::Add { id, stake, balance } => {
            let mut dir = NetworkDir::open(network_dir(settings)?)?;
            dir.add_node(&id, stake, balance, u64::MAX / 2)?;
            dir.save()
        }
        NodeCmd::List => {
            let network = session::Network::open(&settings.backend)?;
            let ledger = network.ledger.snapshot().map_err(node_err)?;
            for (id, n) in ledger.nodes() {
                let up = network.nodes.node(id, "").map(|h| h.ping().is_ok()).unwrap_or(false);
                println!("{id:<12} stake {:<8} deployed {:<6} {}", n.stake, n.deployed, if up { "up" } else { "down" });
            }
            Ok(())
        }
        NodeCmd::Serve { listen, block_interval } => {
            let dir = NetworkDir::open(network_dir(settings)?)?;
            let server = Server::start(network_router(dir.net.clone(), Some(dir.ledger_path())), &listen)
                .map_err(|e| CliError { code: 4, message: format!("listen on {listen}: {e}") })?;
            eprintln!("serving {} nodes at {}", dir.net.nodes.len(), server.url());
            if block_interval > 0 {
                loop {
                    std::thread::sleep(std::time::Duration::from_secs(block_interval));
                    dir.net.advance_block();
                    if let Err(e) = dir.save() {
                        eprintln!("saving ledger: {e}");
                    }
                }
            }
            server.wait().map_err(|e| CliError { code: 4, message: e.to_string() })
        }
    }
}
