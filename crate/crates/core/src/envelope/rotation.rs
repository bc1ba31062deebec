//! Key rotation: re-encrypting stored EDEKs from an old key version to a new
//! one, i.e. sharing with one's future self.

use std::collections::BTreeMap;

use super::Edek;
use crate::group::PrimeGroup;
use crate::pre::{reencrypt, rekey, PublicKey, ReKey, SecretKey};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StoredEdek<G: PrimeGroup> {
    /// Public key the EDEK is currently encrypted under.
    pub owner: PublicKey<G>,
    pub edek: Edek<G>,
}

/// EDEKs by object id. Rotation needs `&mut`, i.e. exclusive access.
#[derive(Clone, Debug, Default)]
pub struct EdekStore<G: PrimeGroup> {
    entries: BTreeMap<String, StoredEdek<G>>,
}

impl<G: PrimeGroup> EdekStore<G> {
    pub fn new() -> Self {
        EdekStore { entries: BTreeMap::new() }
    }

    pub fn insert(&mut self, id: impl Into<String>, owner: PublicKey<G>, edek: Edek<G>) {
        self.entries.insert(id.into(), StoredEdek { owner, edek });
    }

    pub fn get(&self, id: &str) -> Option<&StoredEdek<G>> {
        self.entries.get(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &StoredEdek<G>)> {
        self.entries.iter()
    }
}

pub fn rotate_keys<G: PrimeGroup>(old: &SecretKey<G>, new: &SecretKey<G>) -> ReKey<G> {
    rekey(old, new)
}

/// Replaces every EDEK under `from` by its re-encryption under `to`; the old
/// ciphertexts are overwritten. Returns how many were rewritten.
pub fn rotate_edeks<G: PrimeGroup>(
    store: &mut EdekStore<G>,
    from: &PublicKey<G>,
    to: &PublicKey<G>,
    rk: &ReKey<G>,
) -> usize {
    let mut count = 0;
    for entry in store.entries.values_mut().filter(|e| e.owner == *from) {
        entry.edek = Edek(reencrypt(rk, &entry.edek.0));
        entry.owner = *to;
        count += 1;
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envelope::generate_dek;
    use crate::group::Ristretto;
    use crate::pre::keygen;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn empty_store_rewrites_nothing() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let v1 = keygen::<Ristretto, _>(&mut rng);
        let v2 = keygen::<Ristretto, _>(&mut rng);
        let rk = rotate_keys(&v1.secret, &v2.secret);
        assert_eq!(rotate_edeks(&mut EdekStore::new(), &v1.public, &v2.public, &rk), 0);
    }

    #[test]
    fn rotation_moves_only_matching_entries() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let v1 = keygen::<Ristretto, _>(&mut rng);
        let v2 = keygen::<Ristretto, _>(&mut rng);
        let other = keygen::<Ristretto, _>(&mut rng);
        let mut store = EdekStore::new();
        let (dek_a, edek_a) = generate_dek(&v1.public, &mut rng);
        let (_, edek_b) = generate_dek(&other.public, &mut rng);
        store.insert("a", v1.public, edek_a);
        store.insert("b", other.public, edek_b);
        let rk = rotate_keys(&v1.secret, &v2.secret);
        assert_eq!(rotate_edeks(&mut store, &v1.public, &v2.public, &rk), 1);
        assert_eq!(store.get("a").unwrap().edek.open(&v2.secret), dek_a);
        assert_ne!(store.get("a").unwrap().edek.open(&v1.secret), dek_a);
        assert_eq!(store.get("b").unwrap().edek, edek_b);
    }
}
