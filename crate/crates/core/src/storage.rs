//! Content-addressed blob storage for envelopes. Objects are named by the
//! hex SHA-256 of their bytes and only ever hold ciphertext.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;

use crate::sym::sha256;

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum StorageError {
    #[error("object {0} not found")]
    NotFound(String),
    #[error("object {0} does not match its content id")]
    Corrupt(String),
    #[error("bad path reference {0:?}")]
    BadRef(String),
    #[error("storage i/o: {0}")]
    Io(String),
}

pub fn content_id(bytes: &[u8]) -> String {
    hex::encode(sha256(&[bytes]))
}

fn valid_cid(cid: &str) -> bool {
    cid.len() == 64 && cid.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase())
}

/// `scheme://content-id`, e.g. `local://3f1c…`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PathRef {
    pub scheme: String,
    pub cid: String,
}

impl fmt::Display for PathRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}://{}", self.scheme, self.cid)
    }
}

impl FromStr for PathRef {
    type Err = StorageError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (scheme, cid) = s.split_once("://").ok_or_else(|| StorageError::BadRef(s.to_string()))?;
        if scheme.is_empty() || !scheme.bytes().all(|b| b.is_ascii_lowercase()) || !valid_cid(cid) {
            return Err(StorageError::BadRef(s.to_string()));
        }
        Ok(PathRef { scheme: scheme.to_string(), cid: cid.to_string() })
    }
}

impl serde::Serialize for PathRef {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for PathRef {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub trait ContentStore: Send + Sync {
    fn scheme(&self) -> &str;
    fn put(&self, bytes: &[u8]) -> Result<PathRef, StorageError>;
    /// Returns the object after checking it against its content id.
    fn get(&self, r: &PathRef) -> Result<Vec<u8>, StorageError>;
    fn delete(&self, r: &PathRef) -> Result<(), StorageError>;

    fn check_scheme(&self, r: &PathRef) -> Result<(), StorageError> {
        if r.scheme == self.scheme() {
            Ok(())
        } else {
            Err(StorageError::BadRef(r.to_string()))
        }
    }
}

fn verified(r: &PathRef, bytes: Vec<u8>) -> Result<Vec<u8>, StorageError> {
    if content_id(&bytes) == r.cid {
        Ok(bytes)
    } else {
        Err(StorageError::Corrupt(r.cid.clone()))
    }
}

#[derive(Default)]
pub struct MemStore {
    objects: Mutex<BTreeMap<String, Vec<u8>>>,
}

impl MemStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.objects.lock().expect("store lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Overwrites an object in place; for tests of corruption handling.
    pub fn tamper(&self, r: &PathRef, f: impl FnOnce(&mut Vec<u8>)) {
        if let Some(obj) = self.objects.lock().expect("store lock").get_mut(&r.cid) {
            f(obj);
        }
    }
}

impl ContentStore for MemStore {
    fn scheme(&self) -> &str {
        "mem"
    }

    fn put(&self, bytes: &[u8]) -> Result<PathRef, StorageError> {
        let cid = content_id(bytes);
        self.objects.lock().expect("store lock").entry(cid.clone()).or_insert_with(|| bytes.to_vec());
        Ok(PathRef { scheme: "mem".into(), cid })
    }

    fn get(&self, r: &PathRef) -> Result<Vec<u8>, StorageError> {
        self.check_scheme(r)?;
        let obj = self.objects.lock().expect("store lock").get(&r.cid).cloned();
        verified(r, obj.ok_or_else(|| StorageError::NotFound(r.cid.clone()))?)
    }

    fn delete(&self, r: &PathRef) -> Result<(), StorageError> {
        self.check_scheme(r)?;
        self.objects
            .lock()
            .expect("store lock")
            .remove(&r.cid)
            .map(|_| ())
            .ok_or_else(|| StorageError::NotFound(r.cid.clone()))
    }
}

/// Objects as files `root/ab/cdef…`.
pub struct LocalDirStore {
    root: PathBuf,
}

fn io(e: std::io::Error) -> StorageError {
    StorageError::Io(e.to_string())
}

impl LocalDirStore {
    pub fn open(root: impl AsRef<Path>) -> Result<Self, StorageError> {
        fs::create_dir_all(root.as_ref()).map_err(io)?;
        Ok(LocalDirStore { root: root.as_ref().to_path_buf() })
    }

    fn object_path(&self, cid: &str) -> PathBuf {
        self.root.join(&cid[..2]).join(&cid[2..])
    }
}

impl ContentStore for LocalDirStore {
    fn scheme(&self) -> &str {
        "local"
    }

    fn put(&self, bytes: &[u8]) -> Result<PathRef, StorageError> {
        let cid = content_id(bytes);
        let path = self.object_path(&cid);
        if !path.exists() {
            let dir = path.parent().expect("object paths have a parent");
            fs::create_dir_all(dir).map_err(io)?;
            let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
            tmp.write_all(bytes).map_err(io)?;
            tmp.as_file().sync_all().map_err(io)?;
            tmp.persist(&path).map_err(|e| io(e.error))?;
        }
        Ok(PathRef { scheme: "local".into(), cid })
    }

    fn get(&self, r: &PathRef) -> Result<Vec<u8>, StorageError> {
        self.check_scheme(r)?;
        match fs::read(self.object_path(&r.cid)) {
            Ok(bytes) => verified(r, bytes),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(StorageError::NotFound(r.cid.clone())),
            Err(e) => Err(io(e)),
        }
    }

    fn delete(&self, r: &PathRef) -> Result<(), StorageError> {
        self.check_scheme(r)?;
        match fs::remove_file(self.object_path(&r.cid)) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(StorageError::NotFound(r.cid.clone())),
            Err(e) => Err(io(e)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn round_trip(store: &dyn ContentStore) {
        let r = store.put(b"ciphertext").unwrap();
        assert_eq!(r.scheme, store.scheme());
        assert_eq!(r.cid, content_id(b"ciphertext"));
        assert_eq!(store.get(&r).unwrap(), b"ciphertext");
        assert_eq!(store.put(b"ciphertext").unwrap(), r);
        store.delete(&r).unwrap();
        assert_eq!(store.get(&r), Err(StorageError::NotFound(r.cid.clone())));
        assert!(store.delete(&r).is_err());
    }

    #[test]
    fn mem_store() {
        round_trip(&MemStore::new());
    }

    #[test]
    fn local_store() {
        let dir = tempfile::tempdir().unwrap();
        let store = LocalDirStore::open(dir.path()).unwrap();
        round_trip(&store);
        let r = store.put(b"abc").unwrap();
        fs::write(store.object_path(&r.cid), b"abd").unwrap();
        assert_eq!(store.get(&r), Err(StorageError::Corrupt(r.cid.clone())));
    }

    #[test]
    fn path_refs() {
        let cid = content_id(b"x");
        let r: PathRef = format!("local://{cid}").parse().unwrap();
        assert_eq!(r.to_string(), format!("local://{cid}"));
        assert_eq!(serde_json::to_string(&r).unwrap(), format!("\"local://{cid}\""));
        for bad in ["local:/x", "://abc", "local://abc", "LOCAL://{cid}", "docs/a.txt"] {
            assert!(bad.parse::<PathRef>().is_err(), "{bad}");
        }
        let mem = MemStore::new();
        assert!(matches!(mem.get(&r), Err(StorageError::BadRef(_))));
    }
}
