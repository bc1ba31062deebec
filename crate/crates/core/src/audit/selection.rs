//! Deterministic choice of the nodes checked in a round and of the
//! committee that checks them, both driven by the round's anchor hash.

use crate::ledger::{AccountId, Ledger};
use crate::sym::sha256;
use crate::util::{ceil_sqrt, hamming};

/// Registered nodes holding at least the minimum stake, sorted by id, with
/// the hash of their public key.
pub fn registry(ledger: &Ledger) -> Vec<(AccountId, [u8; 32])> {
    let s_min = ledger.params().s_min;
    ledger.nodes().filter(|(_, n)| n.stake >= s_min).map(|(id, n)| (id.clone(), n.key_hash)).collect()
}

/// Indices of `⌈√n⌉` distinct registry positions: `H(anchor ‖ i)` for
/// `i = 0, 1, …`, reduced modulo `n`, skipping repeats.
pub fn checked_indices(n: usize, anchor: &[u8; 32]) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    let k = ceil_sqrt(n as u64) as usize;
    let mut seen = vec![false; n];
    let mut out = Vec::with_capacity(k);
    let mut i: u64 = 0;
    while out.len() < k {
        let h = sha256(&[anchor, &i.to_be_bytes()]);
        let idx = (u64::from_be_bytes(h[..8].try_into().expect("8 bytes")) % n as u64) as usize;
        if !seen[idx] {
            seen[idx] = true;
            out.push(idx);
        }
        i += 1;
    }
    out
}

/// `registry` must be sorted; the result is in selection order.
pub fn select_checked_set(registry: &[AccountId], anchor: &[u8; 32]) -> Vec<AccountId> {
    checked_indices(registry.len(), anchor).into_iter().map(|i| registry[i].clone()).collect()
}

/// The `⌈√N⌉` nodes whose key hash is closest to the anchor in Hamming
/// distance. Ties go to the smaller key hash, then the smaller id.
pub fn select_committee(registry: &[(AccountId, [u8; 32])], anchor: &[u8; 32]) -> Vec<AccountId> {
    let k = ceil_sqrt(registry.len() as u64) as usize;
    let mut ranked: Vec<_> = registry.iter().map(|(id, kh)| (hamming(kh, anchor), *kh, id)).collect();
    ranked.sort();
    ranked.into_iter().take(k).map(|(_, _, id)| id.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<AccountId> {
        (0..n).map(|i| format!("n{i:05}")).collect()
    }

    #[test]
    fn checked_set_size_and_distinctness() {
        let anchor = sha256(&[b"a"]);
        for n in [1usize, 2, 3, 4, 10, 99, 100, 101, 1000] {
            let set = checked_indices(n, &anchor);
            assert_eq!(set.len() as u64, ceil_sqrt(n as u64));
            let mut sorted = set.clone();
            sorted.sort();
            sorted.dedup();
            assert_eq!(sorted.len(), set.len());
            assert!(set.iter().all(|&i| i < n));
        }
        assert_eq!(checked_indices(100_000, &anchor).len(), 317);
        assert_eq!(select_checked_set(&ids(1), &anchor), ids(1));
        assert!(checked_indices(0, &anchor).is_empty());
    }

    #[test]
    fn checked_set_follows_hash_iteration() {
        // Independent recomputation of the first pick.
        let anchor = [7u8; 32];
        let h = sha256(&[&anchor, &0u64.to_be_bytes()]);
        let first = u64::from_be_bytes(h[..8].try_into().unwrap()) % 50;
        assert_eq!(checked_indices(50, &anchor)[0], first as usize);
        assert_eq!(checked_indices(50, &anchor), checked_indices(50, &anchor));
        assert_ne!(checked_indices(50, &anchor), checked_indices(50, &[8u8; 32]));
    }

    #[test]
    fn committee_is_closest_by_hamming() {
        let anchor = [0u8; 32];
        let mut k1 = [0u8; 32];
        k1[0] = 0b1;
        let mut k2 = [0u8; 32];
        k2[0] = 0b11;
        let mut k5 = [0u8; 32];
        k5[0] = 0b11111;
        let reg = vec![("c".to_string(), k5), ("a".to_string(), k2), ("b".to_string(), k1)];
        // ⌈√3⌉ = 2: the nodes at distance 1 and 2.
        assert_eq!(select_committee(&reg, &anchor), vec!["b".to_string(), "a".to_string()]);
        let tied = vec![("y".to_string(), k1), ("x".to_string(), k1)];
        assert_eq!(select_committee(&tied, &anchor), vec!["x".to_string(), "y".to_string()]);
    }

    #[test]
    fn committee_size() {
        let reg: Vec<_> = ids(50)
            .into_iter()
            .map(|id| {
                let kh = sha256(&[id.as_bytes()]);
                (id, kh)
            })
            .collect();
        let c = select_committee(&reg, &sha256(&[b"x"]));
        assert_eq!(c.len(), 8);
        let best = reg.iter().map(|(_, kh)| hamming(kh, &sha256(&[b"x"]))).min().unwrap();
        let first = reg.iter().find(|(id, _)| *id == c[0]).unwrap();
        assert_eq!(hamming(&first.1, &sha256(&[b"x"])), best);
    }
}
