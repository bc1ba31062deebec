//! Prime-order group backends.
//!
//! All proxy re-encryption math is written against [`PrimeGroup`], using
//! multiplicative notation: the group operation is [`Element::op`] and
//! exponentiation is [`Element::pow`]. Two backends exist:
//!
//! * [`Ristretto`], the production group (ristretto255, 32-byte encodings);
//! * [`TestGroup`], the order-11 subgroup of `Z*_23` generated by 2, small
//!   enough that every property can be checked exhaustively.

use std::fmt;
use std::hash::Hash;

use curve25519_dalek::ristretto::{CompressedRistretto, RistrettoPoint};
use curve25519_dalek::scalar::Scalar as DalekScalar;
use curve25519_dalek::traits::Identity;
use rand::{CryptoRng, RngCore};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GroupError {
    #[error("encoding has length {got}, expected {expected}")]
    BadLength { expected: usize, got: usize },
    #[error("scalar encoding is not reduced modulo the group order")]
    NonCanonicalScalar,
    #[error("encoding is not an element of the prime-order subgroup")]
    NotInGroup,
}

/// A cyclic group of prime order `q` with a fixed generator.
pub trait PrimeGroup: Copy + Clone + fmt::Debug + PartialEq + Eq + Send + Sync + 'static {
    type ScalarRepr: Copy + Clone + fmt::Debug + PartialEq + Eq + Send + Sync;
    type ElementRepr: Copy + Clone + fmt::Debug + PartialEq + Eq + Send + Sync;

    /// Identifier written into every serialized ciphertext.
    const ID: u8;
    const NAME: &'static str;
    const SCALAR_LEN: usize;
    const ELEMENT_LEN: usize;
    /// Whether zero encryption randomness may be used (exhaustive oracles only).
    const ALLOWS_DEGENERATE_RANDOMNESS: bool;

    fn scalar_from_u64(v: u64) -> Self::ScalarRepr;
    fn scalar_random<R: RngCore + CryptoRng>(rng: &mut R) -> Self::ScalarRepr;
    fn scalar_add(a: &Self::ScalarRepr, b: &Self::ScalarRepr) -> Self::ScalarRepr;
    fn scalar_sub(a: &Self::ScalarRepr, b: &Self::ScalarRepr) -> Self::ScalarRepr;
    fn scalar_mul(a: &Self::ScalarRepr, b: &Self::ScalarRepr) -> Self::ScalarRepr;
    fn scalar_invert(a: &Self::ScalarRepr) -> Option<Self::ScalarRepr>;
    fn scalar_is_zero(a: &Self::ScalarRepr) -> bool;
    /// Big-endian fixed-length encoding.
    fn scalar_encode(a: &Self::ScalarRepr) -> Vec<u8>;
    fn scalar_decode(bytes: &[u8]) -> Result<Self::ScalarRepr, GroupError>;

    fn generator() -> Self::ElementRepr;
    fn identity() -> Self::ElementRepr;
    fn element_op(a: &Self::ElementRepr, b: &Self::ElementRepr) -> Self::ElementRepr;
    fn element_inverse(a: &Self::ElementRepr) -> Self::ElementRepr;
    fn element_pow(a: &Self::ElementRepr, e: &Self::ScalarRepr) -> Self::ElementRepr;
    fn element_random<R: RngCore + CryptoRng>(rng: &mut R) -> Self::ElementRepr;
    fn element_encode(a: &Self::ElementRepr) -> Vec<u8>;
    /// Decodes and checks membership in the order-`q` subgroup.
    fn element_decode(bytes: &[u8]) -> Result<Self::ElementRepr, GroupError>;
}

/// An integer modulo the group order.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Scalar<G: PrimeGroup>(pub(crate) G::ScalarRepr);

/// An element of the prime-order group.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Element<G: PrimeGroup>(pub(crate) G::ElementRepr);

impl<G: PrimeGroup> Scalar<G> {
    pub fn zero() -> Self {
        Self(G::scalar_from_u64(0))
    }

    pub fn one() -> Self {
        Self(G::scalar_from_u64(1))
    }

    pub fn from_u64(v: u64) -> Self {
        Self(G::scalar_from_u64(v))
    }

    /// Uniform in `[0, q)`; may be zero.
    pub fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        Self(G::scalar_random(rng))
    }

    /// Uniform in `[1, q)`.
    pub fn random_nonzero<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        loop {
            let s = Self::random(rng);
            if !s.is_zero() {
                return s;
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        G::scalar_is_zero(&self.0)
    }

    pub fn invert(&self) -> Option<Self> {
        G::scalar_invert(&self.0).map(Self)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        G::scalar_encode(&self.0)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, GroupError> {
        G::scalar_decode(bytes).map(Self)
    }
}

impl<G: PrimeGroup> std::ops::Add for Scalar<G> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self(G::scalar_add(&self.0, &rhs.0))
    }
}

impl<G: PrimeGroup> std::ops::Sub for Scalar<G> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self(G::scalar_sub(&self.0, &rhs.0))
    }
}

impl<G: PrimeGroup> std::ops::Mul for Scalar<G> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Self(G::scalar_mul(&self.0, &rhs.0))
    }
}

impl<G: PrimeGroup> std::iter::Sum for Scalar<G> {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::zero(), |acc, s| acc + s)
    }
}

impl<G: PrimeGroup> fmt::Debug for Scalar<G> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Scalar({})", hex::encode(self.to_bytes()))
    }
}

impl<G: PrimeGroup> Element<G> {
    pub fn generator() -> Self {
        Self(G::generator())
    }

    pub fn identity() -> Self {
        Self(G::identity())
    }

    /// The group operation.
    pub fn op(&self, other: &Self) -> Self {
        Self(G::element_op(&self.0, &other.0))
    }

    pub fn inverse(&self) -> Self {
        Self(G::element_inverse(&self.0))
    }

    pub fn pow(&self, e: &Scalar<G>) -> Self {
        Self(G::element_pow(&self.0, &e.0))
    }

    /// `g^e` for the fixed generator.
    pub fn base_pow(e: &Scalar<G>) -> Self {
        Self::generator().pow(e)
    }

    pub fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        Self(G::element_random(rng))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        G::element_encode(&self.0)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, GroupError> {
        G::element_decode(bytes).map(Self)
    }
}

impl<G: PrimeGroup> fmt::Debug for Element<G> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Element({})", hex::encode(self.to_bytes()))
    }
}

impl<G: PrimeGroup> Hash for Element<G> {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.to_bytes().hash(state)
    }
}

fn check_len(bytes: &[u8], expected: usize) -> Result<(), GroupError> {
    if bytes.len() == expected {
        Ok(())
    } else {
        Err(GroupError::BadLength { expected, got: bytes.len() })
    }
}

/// ristretto255: prime order `2^252 + 27742317777372353535851937790883648493`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct Ristretto;

impl PrimeGroup for Ristretto {
    type ScalarRepr = DalekScalar;
    type ElementRepr = RistrettoPoint;

    const ID: u8 = 0x01;
    const NAME: &'static str = "ristretto255";
    const SCALAR_LEN: usize = 32;
    const ELEMENT_LEN: usize = 32;
    const ALLOWS_DEGENERATE_RANDOMNESS: bool = false;

    fn scalar_from_u64(v: u64) -> DalekScalar {
        DalekScalar::from(v)
    }

    fn scalar_random<R: RngCore + CryptoRng>(rng: &mut R) -> DalekScalar {
        let mut wide = [0u8; 64];
        rng.fill_bytes(&mut wide);
        DalekScalar::from_bytes_mod_order_wide(&wide)
    }

    fn scalar_add(a: &DalekScalar, b: &DalekScalar) -> DalekScalar {
        a + b
    }

    fn scalar_sub(a: &DalekScalar, b: &DalekScalar) -> DalekScalar {
        a - b
    }

    fn scalar_mul(a: &DalekScalar, b: &DalekScalar) -> DalekScalar {
        a * b
    }

    fn scalar_invert(a: &DalekScalar) -> Option<DalekScalar> {
        if *a == DalekScalar::ZERO {
            None
        } else {
            Some(a.invert())
        }
    }

    fn scalar_is_zero(a: &DalekScalar) -> bool {
        *a == DalekScalar::ZERO
    }

    fn scalar_encode(a: &DalekScalar) -> Vec<u8> {
        let mut out = a.to_bytes().to_vec();
        out.reverse();
        out
    }

    fn scalar_decode(bytes: &[u8]) -> Result<DalekScalar, GroupError> {
        check_len(bytes, 32)?;
        let mut le = [0u8; 32];
        le.copy_from_slice(bytes);
        le.reverse();
        Option::from(DalekScalar::from_canonical_bytes(le)).ok_or(GroupError::NonCanonicalScalar)
    }

    fn generator() -> RistrettoPoint {
        curve25519_dalek::constants::RISTRETTO_BASEPOINT_POINT
    }

    fn identity() -> RistrettoPoint {
        RistrettoPoint::identity()
    }

    fn element_op(a: &RistrettoPoint, b: &RistrettoPoint) -> RistrettoPoint {
        a + b
    }

    fn element_inverse(a: &RistrettoPoint) -> RistrettoPoint {
        -a
    }

    fn element_pow(a: &RistrettoPoint, e: &DalekScalar) -> RistrettoPoint {
        a * e
    }

    fn element_random<R: RngCore + CryptoRng>(rng: &mut R) -> RistrettoPoint {
        let mut wide = [0u8; 64];
        rng.fill_bytes(&mut wide);
        RistrettoPoint::from_uniform_bytes(&wide)
    }

    fn element_encode(a: &RistrettoPoint) -> Vec<u8> {
        a.compress().to_bytes().to_vec()
    }

    fn element_decode(bytes: &[u8]) -> Result<RistrettoPoint, GroupError> {
        check_len(bytes, 32)?;
        CompressedRistretto::from_slice(bytes)
            .map_err(|_| GroupError::NotInGroup)?
            .decompress()
            .ok_or(GroupError::NotInGroup)
    }
}

/// The subgroup of quadratic residues of `Z*_23`: order 11, generator 2.
///
/// Useless for security; every scalar/element/message combination can be
/// enumerated, so it backs the exhaustive correctness tests.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct TestGroup;

impl TestGroup {
    pub const P: u64 = 23;
    pub const Q: u64 = 11;
    pub const G: u64 = 2;

    /// All eleven subgroup members, in generator-power order `g^0 .. g^10`.
    pub fn members() -> Vec<Element<TestGroup>> {
        (0..Self::Q).map(|e| Element::base_pow(&Scalar::from_u64(e))).collect()
    }

    pub fn element(v: u64) -> Result<Element<TestGroup>, GroupError> {
        Element::from_bytes(&[u8::try_from(v).map_err(|_| GroupError::NotInGroup)?])
    }

    pub fn value(e: &Element<TestGroup>) -> u64 {
        u64::from(e.0)
    }

    pub fn scalar_value(s: &Scalar<TestGroup>) -> u64 {
        u64::from(s.0)
    }

    fn modpow(mut base: u64, mut exp: u64, m: u64) -> u64 {
        let mut acc = 1 % m;
        base %= m;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = acc * base % m;
            }
            base = base * base % m;
            exp >>= 1;
        }
        acc
    }
}

impl PrimeGroup for TestGroup {
    type ScalarRepr = u8;
    type ElementRepr = u8;

    const ID: u8 = 0xF0;
    const NAME: &'static str = "test-z23-q11";
    const SCALAR_LEN: usize = 1;
    const ELEMENT_LEN: usize = 1;
    const ALLOWS_DEGENERATE_RANDOMNESS: bool = true;

    fn scalar_from_u64(v: u64) -> u8 {
        (v % Self::Q) as u8
    }

    fn scalar_random<R: RngCore + CryptoRng>(rng: &mut R) -> u8 {
        // rejection sampling from a byte keeps the draw exactly uniform
        loop {
            let b = (rng.next_u32() & 0xFF) as u8;
            if u64::from(b) < 253 {
                return (u64::from(b) % Self::Q) as u8;
            }
        }
    }

    fn scalar_add(a: &u8, b: &u8) -> u8 {
        ((u64::from(*a) + u64::from(*b)) % Self::Q) as u8
    }

    fn scalar_sub(a: &u8, b: &u8) -> u8 {
        ((u64::from(*a) + Self::Q - u64::from(*b)) % Self::Q) as u8
    }

    fn scalar_mul(a: &u8, b: &u8) -> u8 {
        (u64::from(*a) * u64::from(*b) % Self::Q) as u8
    }

    fn scalar_invert(a: &u8) -> Option<u8> {
        if *a == 0 {
            None
        } else {
            Some(Self::modpow(u64::from(*a), Self::Q - 2, Self::Q) as u8)
        }
    }

    fn scalar_is_zero(a: &u8) -> bool {
        *a == 0
    }

    fn scalar_encode(a: &u8) -> Vec<u8> {
        vec![*a]
    }

    fn scalar_decode(bytes: &[u8]) -> Result<u8, GroupError> {
        check_len(bytes, 1)?;
        if u64::from(bytes[0]) < Self::Q {
            Ok(bytes[0])
        } else {
            Err(GroupError::NonCanonicalScalar)
        }
    }

    fn generator() -> u8 {
        Self::G as u8
    }

    fn identity() -> u8 {
        1
    }

    fn element_op(a: &u8, b: &u8) -> u8 {
        (u64::from(*a) * u64::from(*b) % Self::P) as u8
    }

    fn element_inverse(a: &u8) -> u8 {
        Self::modpow(u64::from(*a), Self::P - 2, Self::P) as u8
    }

    fn element_pow(a: &u8, e: &u8) -> u8 {
        Self::modpow(u64::from(*a), u64::from(*e), Self::P) as u8
    }

    fn element_random<R: RngCore + CryptoRng>(rng: &mut R) -> u8 {
        Self::element_pow(&Self::generator(), &Self::scalar_random(rng))
    }

    fn element_encode(a: &u8) -> Vec<u8> {
        vec![*a]
    }

    fn element_decode(bytes: &[u8]) -> Result<u8, GroupError> {
        check_len(bytes, 1)?;
        let v = u64::from(bytes[0]);
        if v == 0 || v >= Self::P || Self::modpow(v, Self::Q, Self::P) != 1 {
            return Err(GroupError::NotInGroup);
        }
        Ok(bytes[0])
    }
}
