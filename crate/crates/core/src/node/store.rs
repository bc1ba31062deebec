//! Policy store: in memory, optionally backed by a directory holding a
//! snapshot and an append-only NDJSON write-ahead log.
//!
//! Revocation and expiry rewrite the snapshot and truncate the log, so the
//! erased material disappears from the persisted files as well.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::types::{PolicyId, PolicyRecord, PolicyStatus};
use crate::util::hex32;

const SNAPSHOT: &str = "snapshot.json";
const WAL: &str = "wal.ndjson";
const SNAPSHOT_VERSION: u32 = 1;
/// Log length at which the log is folded into a fresh snapshot.
const COMPACT_AFTER: usize = 512;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("store I/O: {0}")]
    Io(#[from] io::Error),
    #[error("store is corrupt: {0}")]
    Corrupt(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
enum WalEntry {
    Deploy {
        record: Box<PolicyRecord>,
    },
    Revoke {
        #[serde(with = "hex32")]
        policy_id: PolicyId,
        nonce: u64,
    },
    Renew {
        #[serde(with = "hex32")]
        policy_id: PolicyId,
        t_end: u64,
        nonce: u64,
    },
    Expire {
        #[serde(with = "hex32")]
        policy_id: PolicyId,
    },
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    version: u32,
    records: Vec<PolicyRecord>,
}

#[derive(Debug, Default)]
pub struct PolicyStore {
    records: BTreeMap<PolicyId, PolicyRecord>,
    dir: Option<PathBuf>,
    wal: Option<File>,
    wal_len: usize,
}

impl PolicyStore {
    pub fn in_memory() -> Self {
        PolicyStore::default()
    }

    /// Opens (creating if needed) a persistent store. A torn final log line
    /// from an interrupted append is ignored.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let mut records = BTreeMap::new();
        let snap_path = dir.join(SNAPSHOT);
        if snap_path.exists() {
            let snap: Snapshot = serde_json::from_slice(&fs::read(&snap_path)?)
                .map_err(|e| StoreError::Corrupt(format!("snapshot: {e}")))?;
            if snap.version != SNAPSHOT_VERSION {
                return Err(StoreError::Corrupt(format!("snapshot version {}", snap.version)));
            }
            records.extend(snap.records.into_iter().map(|r| (r.policy_id, r)));
        }
        let mut store = PolicyStore { records, dir: Some(dir.clone()), wal: None, wal_len: 0 };
        let wal_path = dir.join(WAL);
        if wal_path.exists() {
            let text = fs::read_to_string(&wal_path)?;
            let complete = text.ends_with('\n');
            let lines: Vec<&str> = text.lines().collect();
            for (i, line) in lines.iter().enumerate() {
                match serde_json::from_str::<WalEntry>(line) {
                    Ok(entry) => store.apply(entry),
                    Err(_) if i + 1 == lines.len() && !complete => break,
                    Err(e) => return Err(StoreError::Corrupt(format!("log line {}: {e}", i + 1))),
                }
            }
        }
        // Rewrite so that a torn tail never precedes new entries.
        store.compact()?;
        Ok(store)
    }

    pub fn get(&self, id: &PolicyId) -> Option<&PolicyRecord> {
        self.records.get(id)
    }

    pub fn records(&self) -> impl Iterator<Item = &PolicyRecord> {
        self.records.values()
    }

    pub fn active_ids(&self) -> Vec<PolicyId> {
        self.records.values().filter(|r| r.status == PolicyStatus::Active).map(|r| r.policy_id).collect()
    }

    fn apply(&mut self, entry: WalEntry) {
        match entry {
            WalEntry::Deploy { record } => {
                self.records.insert(record.policy_id, *record);
            }
            WalEntry::Revoke { policy_id, nonce } => {
                if let Some(r) = self.records.get_mut(&policy_id) {
                    r.status = PolicyStatus::Revoked;
                    r.material = None;
                    r.last_nonce = nonce;
                }
            }
            WalEntry::Renew { policy_id, t_end, nonce } => {
                if let Some(r) = self.records.get_mut(&policy_id) {
                    r.window.t_end = t_end;
                    r.last_nonce = nonce;
                }
            }
            WalEntry::Expire { policy_id } => {
                if let Some(r) = self.records.get_mut(&policy_id) {
                    r.status = PolicyStatus::Expired;
                    r.material = None;
                }
            }
        }
    }

    fn append(&mut self, entry: &WalEntry) -> Result<(), StoreError> {
        let Some(wal) = self.wal.as_mut() else { return Ok(()) };
        let mut line = serde_json::to_vec(entry).expect("serializable");
        line.push(b'\n');
        wal.write_all(&line)?;
        wal.sync_data()?;
        self.wal_len += 1;
        if self.wal_len >= COMPACT_AFTER {
            self.compact()?;
        }
        Ok(())
    }

    fn commit(&mut self, entry: WalEntry, erases: bool) -> Result<(), StoreError> {
        if erases {
            self.apply(entry);
            self.compact()
        } else {
            self.append(&entry)?;
            self.apply(entry);
            Ok(())
        }
    }

    pub fn insert(&mut self, record: PolicyRecord) -> Result<(), StoreError> {
        self.commit(WalEntry::Deploy { record: Box::new(record) }, false)
    }

    pub fn revoke(&mut self, policy_id: PolicyId, nonce: u64) -> Result<(), StoreError> {
        self.commit(WalEntry::Revoke { policy_id, nonce }, true)
    }

    pub fn renew(&mut self, policy_id: PolicyId, t_end: u64, nonce: u64) -> Result<(), StoreError> {
        self.commit(WalEntry::Renew { policy_id, t_end, nonce }, false)
    }

    pub fn expire(&mut self, policy_id: PolicyId) -> Result<(), StoreError> {
        self.commit(WalEntry::Expire { policy_id }, true)
    }

    /// Writes the full state as a new snapshot and starts an empty log. Both
    /// files are replaced by rename, so a crash leaves either the old or the
    /// new version.
    pub fn compact(&mut self) -> Result<(), StoreError> {
        let Some(dir) = self.dir.clone() else { return Ok(()) };
        let snap = Snapshot { version: SNAPSHOT_VERSION, records: self.records.values().cloned().collect() };
        replace_file(&dir.join(SNAPSHOT), &serde_json::to_vec(&snap).expect("serializable"))?;
        replace_file(&dir.join(WAL), b"")?;
        self.wal = Some(OpenOptions::new().append(true).open(dir.join(WAL))?);
        self.wal_len = 0;
        Ok(())
    }
}

fn replace_file(path: &Path, contents: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    if let Some(parent) = path.parent() {
        File::open(parent)?.sync_all()?;
    }
    Ok(())
}
