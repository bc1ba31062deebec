//! BBS98-style proxy re-encryption over any [`PrimeGroup`].
//!
//! A ciphertext of group element `m` under `pk = g^sk` is
//! `(c1, c2) = (m·g^r, pk^r)`. A re-encryption key from `a` to `b` is the
//! scalar `sk_b / sk_a`; re-encryption raises `c2` to it. The scheme is
//! interactive, bidirectional and unbounded multi-hop, and re-encryption
//! is deterministic, which the challenge protocol relies on.
//!
//! Public-key delegation goes through an ephemeral key pair whose secret is
//! wrapped to the recipient ([`delegate`]).

mod challenge;
mod codec;
mod delegation;
mod split;

use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::group::{Element, GroupError, PrimeGroup, Scalar};

pub use challenge::{make_challenge_pack, verify_challenge_entry, ChallengeEntry, ChallengePack, ChallengeVerdict};
pub use delegation::{
    decrypt_delegated, delegate, reencrypt_delegated, unwrap_ephemeral, DelegationBundle, ReencryptedMessage,
};
pub use split::{
    apply_share, combine_shares, split_rekey_additive, split_rekey_threshold, PartialReencryption, ReKeyShare,
    ShareScheme,
};

/// Version byte of the canonical ciphertext encoding.
pub const CIPHERTEXT_VERSION: u8 = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PreError {
    #[error("secret key or re-encryption factor is zero")]
    ZeroKey,
    #[error("zero encryption randomness is not allowed in group {0}")]
    DegenerateRandomness(&'static str),
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error("ciphertext belongs to group {got:#04x}, expected {expected:#04x}")]
    GroupMismatch { expected: u8, got: u8 },
    #[error("unsupported encoding version {0}")]
    UnsupportedVersion(u8),
    #[error("malformed encoding: {0}")]
    Malformed(&'static str),
    #[error("wrapped ephemeral key does not open for this recipient")]
    WrongRecipient,
    #[error("share count must be at least one")]
    NoShares,
    #[error("threshold {threshold} is not within 1..={total}")]
    InvalidThreshold { threshold: u32, total: u32 },
    #[error("need {needed} shares, got {got}")]
    InsufficientShares { needed: u32, got: u32 },
    #[error("share index {0} appears more than once")]
    DuplicateShareIndex(u32),
    #[error("share does not belong to the stated scheme")]
    SchemeMismatch,
    #[error("a challenge pack needs at least one entry")]
    EmptyChallengePack,
}

/// A nonzero secret exponent.
#[derive(Clone, PartialEq, Eq)]
pub struct SecretKey<G: PrimeGroup>(Scalar<G>);

impl<G: PrimeGroup> SecretKey<G> {
    pub fn new(scalar: Scalar<G>) -> Result<Self, PreError> {
        if scalar.is_zero() {
            Err(PreError::ZeroKey)
        } else {
            Ok(Self(scalar))
        }
    }

    pub fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        Self(Scalar::random_nonzero(rng))
    }

    pub fn scalar(&self) -> &Scalar<G> {
        &self.0
    }

    pub fn public_key(&self) -> PublicKey<G> {
        PublicKey(Element::base_pow(&self.0))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.0.to_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PreError> {
        Self::new(Scalar::from_bytes(bytes)?)
    }
}

impl<G: PrimeGroup> std::fmt::Debug for SecretKey<G> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SecretKey(..)")
    }
}

impl<G: PrimeGroup> Drop for SecretKey<G> {
    fn drop(&mut self) {
        self.0 = Scalar::zero();
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PublicKey<G: PrimeGroup>(pub Element<G>);

impl<G: PrimeGroup> PublicKey<G> {
    pub fn element(&self) -> &Element<G> {
        &self.0
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.0.to_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PreError> {
        Ok(Self(Element::from_bytes(bytes)?))
    }
}

#[derive(Clone, Debug)]
pub struct KeyPair<G: PrimeGroup> {
    pub secret: SecretKey<G>,
    pub public: PublicKey<G>,
}

impl<G: PrimeGroup> KeyPair<G> {
    pub fn from_secret(secret: SecretKey<G>) -> Self {
        let public = secret.public_key();
        Self { secret, public }
    }
}

/// Fresh key pair with a uniform nonzero secret.
pub fn keygen<G: PrimeGroup, R: RngCore + CryptoRng>(rng: &mut R) -> KeyPair<G> {
    KeyPair::from_secret(SecretKey::random(rng))
}

/// `(m·g^r, pk^r)` plus a hop counter that re-encryption increments.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PreCiphertext<G: PrimeGroup> {
    pub c1: Element<G>,
    pub c2: Element<G>,
    pub hops: u8,
}

impl<G: PrimeGroup> PreCiphertext<G> {
    /// Encoded length: version, group id, two elements, hop count.
    pub const fn encoded_len() -> usize {
        3 + 2 * G::ELEMENT_LEN
    }
}

/// The proxy's transformation token: `sk_dst · sk_src⁻¹ mod q`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReKey<G: PrimeGroup> {
    factor: Scalar<G>,
}

impl<G: PrimeGroup> ReKey<G> {
    pub fn from_factor(factor: Scalar<G>) -> Result<Self, PreError> {
        if factor.is_zero() {
            Err(PreError::ZeroKey)
        } else {
            Ok(Self { factor })
        }
    }

    pub fn factor(&self) -> &Scalar<G> {
        &self.factor
    }
}

/// Encrypts with fresh nonzero randomness.
pub fn encrypt_elem<G: PrimeGroup, R: RngCore + CryptoRng>(
    pk: &PublicKey<G>,
    m: &Element<G>,
    rng: &mut R,
) -> PreCiphertext<G> {
    let r = Scalar::random_nonzero(rng);
    encrypt_with_randomness(pk, m, &r).expect("nonzero randomness is always accepted")
}

/// Encrypts with caller-supplied randomness. Zero randomness leaks `m` and is
/// refused except in groups built for exhaustive testing.
pub fn encrypt_with_randomness<G: PrimeGroup>(
    pk: &PublicKey<G>,
    m: &Element<G>,
    r: &Scalar<G>,
) -> Result<PreCiphertext<G>, PreError> {
    if r.is_zero() && !G::ALLOWS_DEGENERATE_RANDOMNESS {
        return Err(PreError::DegenerateRandomness(G::NAME));
    }
    Ok(PreCiphertext { c1: m.op(&Element::base_pow(r)), c2: pk.0.pow(r), hops: 0 })
}

/// `c1 / c2^(sk⁻¹)`.
pub fn decrypt_elem<G: PrimeGroup>(sk: &SecretKey<G>, ct: &PreCiphertext<G>) -> Element<G> {
    let inv = sk.0.invert().expect("secret keys are nonzero");
    ct.c1.op(&ct.c2.pow(&inv).inverse())
}

pub fn rekey<G: PrimeGroup>(src: &SecretKey<G>, dst: &SecretKey<G>) -> ReKey<G> {
    let inv = src.0.invert().expect("secret keys are nonzero");
    ReKey { factor: dst.0 * inv }
}

/// Deterministic: no randomness is consumed, so identical inputs give
/// identical outputs.
pub fn reencrypt<G: PrimeGroup>(rk: &ReKey<G>, ct: &PreCiphertext<G>) -> PreCiphertext<G> {
    PreCiphertext { c1: ct.c1, c2: ct.c2.pow(&rk.factor), hops: ct.hops.saturating_add(1) }
}

/// `rk_ac = rk_ab · rk_bc`.
pub fn compose_rekeys<G: PrimeGroup>(ab: &ReKey<G>, bc: &ReKey<G>) -> ReKey<G> {
    ReKey { factor: ab.factor * bc.factor }
}

/// `rk_ba = rk_ab⁻¹`.
pub fn invert_rekey<G: PrimeGroup>(rk: &ReKey<G>) -> ReKey<G> {
    ReKey { factor: rk.factor.invert().expect("rekey factors are nonzero") }
}
