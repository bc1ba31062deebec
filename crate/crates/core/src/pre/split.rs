//! Split-key re-encryption. A re-encryption key is divided among several
//! nodes; each applies its share to `c2` and the client combines the parts.

use std::collections::BTreeSet;

use rand::{CryptoRng, RngCore};

use super::{PreCiphertext, PreError, ReKey};
use crate::group::{Element, PrimeGroup, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShareScheme {
    /// All `total` shares are needed; values sum to the factor.
    Additive { total: u32 },
    /// Any `threshold` of `total` Shamir shares suffice.
    Threshold { threshold: u32, total: u32 },
}

impl ShareScheme {
    pub fn needed(&self) -> u32 {
        match *self {
            ShareScheme::Additive { total } => total,
            ShareScheme::Threshold { threshold, .. } => threshold,
        }
    }

    pub fn total(&self) -> u32 {
        match *self {
            ShareScheme::Additive { total } | ShareScheme::Threshold { total, .. } => total,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReKeyShare<G: PrimeGroup> {
    /// 1-based; for threshold shares this is the evaluation point.
    pub index: u32,
    pub value: Scalar<G>,
    pub scheme: ShareScheme,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PartialReencryption<G: PrimeGroup> {
    pub index: u32,
    pub c2_part: Element<G>,
    /// Hop count of the input ciphertext.
    pub hops: u8,
}

/// `m` shares; the first `m-1` are uniform and the last makes the sum equal
/// the factor.
pub fn split_rekey_additive<G: PrimeGroup, R: RngCore + CryptoRng>(
    rk: &ReKey<G>,
    m: u32,
    rng: &mut R,
) -> Result<Vec<ReKeyShare<G>>, PreError> {
    if m == 0 {
        return Err(PreError::NoShares);
    }
    let scheme = ShareScheme::Additive { total: m };
    let mut shares = Vec::with_capacity(m as usize);
    let mut acc = Scalar::zero();
    for index in 1..m {
        let value = Scalar::random(rng);
        acc = acc + value;
        shares.push(ReKeyShare { index, value, scheme });
    }
    shares.push(ReKeyShare { index: m, value: *rk.factor() - acc, scheme });
    Ok(shares)
}

/// Shamir shares `(i, P(i))`, `i = 1..=n`, of a random degree-`m-1`
/// polynomial with `P(0)` equal to the factor.
pub fn split_rekey_threshold<G: PrimeGroup, R: RngCore + CryptoRng>(
    rk: &ReKey<G>,
    m: u32,
    n: u32,
    rng: &mut R,
) -> Result<Vec<ReKeyShare<G>>, PreError> {
    if m == 0 || m > n {
        return Err(PreError::InvalidThreshold { threshold: m, total: n });
    }
    let mut coeffs = vec![*rk.factor()];
    coeffs.extend((1..m).map(|_| Scalar::<G>::random(rng)));
    Ok(threshold_shares(&coeffs, n))
}

pub(crate) fn threshold_shares<G: PrimeGroup>(coeffs: &[Scalar<G>], n: u32) -> Vec<ReKeyShare<G>> {
    let scheme = ShareScheme::Threshold { threshold: coeffs.len() as u32, total: n };
    (1..=n)
        .map(|index| {
            let x = Scalar::from_u64(u64::from(index));
            // Horner
            let value = coeffs.iter().rev().fold(Scalar::zero(), |acc, c| acc * x + *c);
            ReKeyShare { index, value, scheme }
        })
        .collect()
}

/// `c2^value`. Node-side and stateless; Lagrange weighting happens at combine.
pub fn apply_share<G: PrimeGroup>(share: &ReKeyShare<G>, ct: &PreCiphertext<G>) -> PartialReencryption<G> {
    PartialReencryption { index: share.index, c2_part: ct.c2.pow(&share.value), hops: ct.hops }
}

/// Lagrange coefficient at zero for `index` over the set `indices`.
fn lagrange_at_zero<G: PrimeGroup>(index: u32, indices: &[u32]) -> Scalar<G> {
    let xi = Scalar::<G>::from_u64(u64::from(index));
    let (num, den) =
        indices.iter().filter(|&&j| j != index).fold((Scalar::<G>::one(), Scalar::<G>::one()), |(num, den), &j| {
            let xj = Scalar::<G>::from_u64(u64::from(j));
            (num * xj, den * (xj - xi))
        });
    num * den.invert().expect("distinct nonzero indices below q")
}

pub fn combine_shares<G: PrimeGroup>(
    c1: &Element<G>,
    parts: &[PartialReencryption<G>],
    scheme: ShareScheme,
) -> Result<PreCiphertext<G>, PreError> {
    let mut seen = BTreeSet::new();
    for p in parts {
        if p.index == 0 || p.index > scheme.total() {
            return Err(PreError::SchemeMismatch);
        }
        if !seen.insert(p.index) {
            return Err(PreError::DuplicateShareIndex(p.index));
        }
    }
    let needed = scheme.needed();
    if (parts.len() as u32) < needed {
        return Err(PreError::InsufficientShares { needed, got: parts.len() as u32 });
    }
    let hops = parts.first().map(|p| p.hops).unwrap_or(0).saturating_add(1);
    let c2 = match scheme {
        ShareScheme::Additive { .. } => parts.iter().fold(Element::identity(), |acc, p| acc.op(&p.c2_part)),
        ShareScheme::Threshold { threshold, .. } => {
            let used = &parts[..threshold as usize];
            let indices: Vec<u32> = used.iter().map(|p| p.index).collect();
            used.iter()
                .fold(Element::identity(), |acc, p| acc.op(&p.c2_part.pow(&lagrange_at_zero::<G>(p.index, &indices))))
        }
    };
    Ok(PreCiphertext { c1: *c1, c2, hops })
}
