use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use prekms::client::{os_seed, Client, Connection, Identity};
use prekms::ledger::{EconomicsParams, Ledger};
use prekms::node::{HttpDirectory, HttpLedger, LedgerApi, LocalNetwork, Node, NodeDirectory, NodeError, PolicyStore};
use prekms::storage::LocalDirStore;

use super::config::{Backend, Settings};
use super::CliError;

const LEDGER_FILE: &str = "ledger.json";
const NODES_FILE: &str = "nodes.json";

/// Writes `contents` atomically with owner-only permissions.
pub fn write_private(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file().set_permissions(std::fs::Permissions::from_mode(0o600)).map_err(|e| CliError::io(path, e))?;
    }
    tmp.write_all(contents).map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

/// A network kept in a directory: `ledger.json`, `nodes.json` (node ids
/// and public keys) and one policy store per node under `nodes/`.
pub struct NetworkDir {
    pub root: PathBuf,
    pub net: LocalNetwork,
}

impl NetworkDir {
    pub fn create(root: &Path, params: EconomicsParams, seed: u64) -> Result<Self, CliError> {
        if root.join(LEDGER_FILE).exists() {
            return Err(CliError::usage(format!("{} already holds a network", root.display())));
        }
        let ledger = Ledger::new(params, seed).map_err(|e| CliError::usage(e.to_string()))?;
        let dir = NetworkDir { root: root.to_path_buf(), net: LocalNetwork::new(ledger) };
        dir.save()?;
        Ok(dir)
    }

    pub fn open(root: &Path) -> Result<Self, CliError> {
        let ledger_path = root.join(LEDGER_FILE);
        let json = std::fs::read_to_string(&ledger_path).map_err(|e| {
            CliError::usage(format!("{}: {e} (create a network with `prekms node init`)", ledger_path.display()))
        })?;
        let ledger =
            Ledger::from_json(&json).map_err(|e| CliError::integrity(format!("{}: {e}", ledger_path.display())))?;
        let mut net = LocalNetwork::new(ledger);
        for (id, pk) in Self::read_keys(root)? {
            let store = PolicyStore::open(root.join("nodes").join(&id))
                .map_err(|e| CliError::integrity(format!("node {id}: {e}")))?;
            net.add_node(Node::new(id, pk, store));
        }
        Ok(NetworkDir { root: root.to_path_buf(), net })
    }

    fn read_keys(root: &Path) -> Result<BTreeMap<String, [u8; 32]>, CliError> {
        let path = root.join(NODES_FILE);
        if !path.exists() {
            return Ok(BTreeMap::new());
        }
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        let hexes: BTreeMap<String, String> =
            serde_json::from_str(&text).map_err(|e| CliError::integrity(format!("{NODES_FILE}: {e}")))?;
        hexes
            .into_iter()
            .map(|(id, h)| {
                let pk = hex::decode(&h).ok().and_then(|b| <[u8; 32]>::try_from(b).ok());
                pk.map(|pk| (id.clone(), pk))
                    .ok_or_else(|| CliError::integrity(format!("{NODES_FILE}: bad key for {id}")))
            })
            .collect()
    }

    pub fn ledger_path(&self) -> PathBuf {
        self.root.join(LEDGER_FILE)
    }

    /// Registers a node with its own policy store, stakes it and leaves it
    /// `balance` tokens for collateral.
    pub fn add_node(&mut self, id: &str, stake: u64, balance: u64, lock_blocks: u64) -> Result<(), CliError> {
        let pk = prekms::sym::sha256(&[b"prekms/node", id.as_bytes(), &nonce_bytes()]);
        {
            let mut ledger = self.net.lock();
            ledger.register_node(id, &pk).map_err(|e| CliError::usage(e.to_string()))?;
            ledger.genesis_credit(id, stake + balance);
            ledger.deposit_stake(id, stake, lock_blocks).map_err(|e| CliError::usage(e.to_string()))?;
        }
        let store =
            PolicyStore::open(self.root.join("nodes").join(id)).map_err(|e| CliError::integrity(e.to_string()))?;
        self.net.add_node(Node::new(id, pk, store));
        Ok(())
    }

    pub fn save(&self) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.root).map_err(|e| CliError::io(&self.root, e))?;
        let keys: BTreeMap<&str, String> =
            self.net.nodes.iter().map(|(id, n)| (id.as_str(), hex::encode(n.public_key()))).collect();
        write_private(
            &self.root.join(NODES_FILE),
            serde_json::to_string_pretty(&keys).expect("serializable").as_bytes(),
        )?;
        let json = self.net.lock().to_json();
        write_private(&self.ledger_path(), json.as_bytes())
    }
}

fn nonce_bytes() -> [u8; 16] {
    let mut b = [0u8; 16];
    b.copy_from_slice(&os_seed()[..16]);
    b
}

/// The ledger and nodes a command talks to.
pub struct Network {
    pub dir: Option<NetworkDir>,
    pub ledger: Box<dyn LedgerApi>,
    pub nodes: Box<dyn NodeDirectory>,
}

impl Network {
    pub fn open(backend: &Backend) -> Result<Self, CliError> {
        match backend {
            Backend::Dir(root) => {
                let dir = NetworkDir::open(root)?;
                Ok(Network { ledger: Box::new(dir.net.clone()), nodes: Box::new(dir.net.clone()), dir: Some(dir) })
            }
            Backend::Http(url) => {
                let ledger = HttpLedger::new(url.clone());
                ledger.head().map_err(|e| CliError::from(prekms::client::ClientError::Node(e)))?;
                Ok(Network {
                    ledger: Box::new(ledger),
                    nodes: Box::new(HttpDirectory::new(url.clone(), None)),
                    dir: None,
                })
            }
        }
    }

    pub fn save(&self) -> Result<(), CliError> {
        match &self.dir {
            Some(d) => d.save(),
            None => Ok(()),
        }
    }

    pub fn blocks_for_seconds(&self, seconds: u64) -> Result<u64, CliError> {
        let params = self.ledger.snapshot().map_err(node_err)?.params().clone();
        Ok(params.blocks_for_seconds(seconds).max(1))
    }
}

pub fn node_err(e: NodeError) -> CliError {
    prekms::client::ClientError::Node(e).into()
}

/// Everything a client command needs: settings, the unlocked identity,
/// client state, the store and the network.
pub struct Session {
    pub settings: Settings,
    pub client: Client,
    pub store: LocalDirStore,
    pub network: Network,
}

impl Session {
    pub fn open(settings: Settings) -> Result<Self, CliError> {
        let identity = load_identity(&settings)?;
        let client = match std::fs::read_to_string(&settings.state) {
            Ok(json) => Client::load(identity, &json, os_seed())?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Client::new(identity, os_seed()),
            Err(e) => return Err(CliError::io(&settings.state, e)),
        };
        let store = LocalDirStore::open(&settings.store)
            .map_err(|e| CliError::from(prekms::client::ClientError::Storage(e)))?;
        let network = Network::open(&settings.backend)?;
        Ok(Session { settings, client, store, network })
    }

    pub fn conn(&self) -> Connection<'_> {
        Connection { ledger: self.network.ledger.as_ref(), nodes: self.network.nodes.as_ref(), store: &self.store }
    }

    /// The client and a connection borrowing the rest of the session.
    pub fn parts(&mut self) -> (&mut Client, Connection<'_>) {
        let conn =
            Connection { ledger: self.network.ledger.as_ref(), nodes: self.network.nodes.as_ref(), store: &self.store };
        (&mut self.client, conn)
    }

    /// Persists client state and, for a local network, the ledger.
    pub fn save(&mut self) -> Result<(), CliError> {
        let json = self.client.save();
        write_private(&self.settings.state, json.as_bytes())?;
        self.network.save()
    }
}

pub fn load_identity(settings: &Settings) -> Result<Identity, CliError> {
    let json = std::fs::read_to_string(&settings.identity).map_err(|e| {
        CliError::usage(format!("{}: {e} (create one with `prekms keygen`)", settings.identity.display()))
    })?;
    Ok(Identity::unseal(&json, &settings.passphrase(false)?)?)
}
