//! Hybrid encryption of bulk data.
//!
//! Each envelope gets a fresh random group element `m`; the data key is
//! `DEK = HKDF(encode(m))` and the EDEK is the PRE ciphertext of `m`. The
//! body is ChaCha20-Poly1305 under the DEK. Re-encrypting only the EDEK is
//! enough to hand the whole envelope to someone else.
//!
//! On-disk layout (big-endian):
//!
//! ```text
//! "NKMS" | version u8 | suite u8 | flags u8 | edek_len u16 | edek | nonce[12] | body_len u64 | body
//! ```
//!
//! Everything up to and including the EDEK parses without keys.

pub mod aont;
pub mod hierarchy;
pub mod rotation;
pub mod stream;

use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use rand::{CryptoRng, RngCore};
use thiserror::Error;
use zeroize::{Zeroize, ZeroizeOnDrop};

use crate::group::{Element, PrimeGroup};
use crate::pre::{
    decrypt_delegated, decrypt_elem, encrypt_elem, PreCiphertext, PreError, PublicKey, ReencryptedMessage, SecretKey,
};
use crate::sym;

pub const MAGIC: &[u8; 4] = b"NKMS";
pub const FORMAT_VERSION: u8 = 1;
pub const SUITE_CHACHA20_POLY1305: u8 = 1;

pub const FLAG_AONT: u8 = 0b01;
pub const FLAG_SIGNED: u8 = 0b10;

const DEK_INFO: &[u8] = b"prekms/dek/v1";
const FIXED_HEADER_LEN: usize = 4 + 1 + 1 + 1 + 2;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EnvelopeError {
    #[error("malformed envelope: {0}")]
    MalformedHeader(&'static str),
    #[error("unsupported cipher suite {0}")]
    UnsupportedSuite(u8),
    #[error("body failed authentication")]
    BadAuth,
    #[error("embedded signature does not verify")]
    BadSignature,
    #[error("refusing to encrypt empty data")]
    EmptyData,
    #[error(transparent)]
    Pre(#[from] PreError),
    #[error(transparent)]
    Aont(#[from] aont::AontError),
}

/// Symmetric data-encryption key. Zeroized on drop and never serialized.
#[derive(Clone, PartialEq, Eq, Zeroize, ZeroizeOnDrop)]
pub struct Dek([u8; sym::KEY_LEN]);

impl Dek {
    pub fn from_seed<G: PrimeGroup>(seed: &Element<G>) -> Self {
        Dek(sym::derive_key(DEK_INFO, &seed.to_bytes()))
    }

    pub fn as_bytes(&self) -> &[u8; sym::KEY_LEN] {
        &self.0
    }
}

impl std::fmt::Debug for Dek {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("Dek(..)")
    }
}

/// A PRE ciphertext of the group element the DEK was derived from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Edek<G: PrimeGroup>(pub PreCiphertext<G>);

impl<G: PrimeGroup> Edek<G> {
    pub fn to_bytes(&self) -> Vec<u8> {
        self.0.to_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PreError> {
        PreCiphertext::from_bytes(bytes).map(Edek)
    }

    pub fn open(&self, sk: &SecretKey<G>) -> Dek {
        Dek::from_seed(&decrypt_elem(sk, &self.0))
    }
}

/// Fresh DEK plus its EDEK under `pk`.
pub fn generate_dek<G: PrimeGroup, R: RngCore + CryptoRng>(pk: &PublicKey<G>, rng: &mut R) -> (Dek, Edek<G>) {
    let seed = Element::<G>::random(rng);
    (Dek::from_seed(&seed), Edek(encrypt_elem(pk, &seed, rng)))
}

/// Signing key, deliberately a different type from the PRE key pair so the
/// two can never be mixed up.
#[derive(Clone)]
pub struct SigningIdentity(SigningKey);

impl SigningIdentity {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        SigningIdentity(SigningKey::generate(rng))
    }

    pub fn from_bytes(bytes: &[u8; 32]) -> Self {
        SigningIdentity(SigningKey::from_bytes(bytes))
    }

    pub fn to_bytes(&self) -> [u8; 32] {
        self.0.to_bytes()
    }

    pub fn verifying_key(&self) -> VerifyingKey {
        self.0.verifying_key()
    }

    pub fn sign(&self, msg: &[u8]) -> Signature {
        self.0.sign(msg)
    }
}

impl std::fmt::Debug for SigningIdentity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SigningIdentity({})", hex::encode(self.verifying_key().as_bytes()))
    }
}

/// Data with a signature carried inside the encrypted plaintext, so it is
/// only checkable after decryption. Layout: `signer_pk[32] | sig[64] | data`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignedPayload {
    pub data: Vec<u8>,
    pub signer: VerifyingKey,
    pub signature: Signature,
}

impl SignedPayload {
    pub fn sign(identity: &SigningIdentity, data: &[u8]) -> Self {
        SignedPayload { data: data.to_vec(), signer: identity.verifying_key(), signature: identity.sign(data) }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(96 + self.data.len());
        out.extend(self.signer.as_bytes());
        out.extend(self.signature.to_bytes());
        out.extend(&self.data);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EnvelopeError> {
        if bytes.len() < 96 {
            return Err(EnvelopeError::BadSignature);
        }
        let signer =
            VerifyingKey::from_bytes(bytes[..32].try_into().unwrap()).map_err(|_| EnvelopeError::BadSignature)?;
        let signature = Signature::from_bytes(bytes[32..96].try_into().unwrap());
        Ok(SignedPayload { data: bytes[96..].to_vec(), signer, signature })
    }

    pub fn verify(&self) -> Result<(), EnvelopeError> {
        self.signer.verify(&self.data, &self.signature).map_err(|_| EnvelopeError::BadSignature)
    }
}

#[derive(Default, Clone, Copy)]
pub struct EncryptOptions<'a> {
    pub aont: bool,
    pub signer: Option<&'a SigningIdentity>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Envelope<G: PrimeGroup> {
    pub suite: u8,
    pub flags: u8,
    pub edek: Edek<G>,
    /// `nonce | body_len | ciphertext`, opaque without the DEK.
    pub body: Vec<u8>,
}

/// The keyless part of an envelope once the EDEK has been taken out.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OpaqueBody {
    pub suite: u8,
    pub flags: u8,
    pub bytes: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Opened {
    pub data: Vec<u8>,
    /// Present when the envelope carried a (verified) signature.
    pub signer: Option<VerifyingKey>,
}

fn aad(suite: u8, flags: u8) -> [u8; 7] {
    let mut a = [0u8; 7];
    a[..4].copy_from_slice(MAGIC);
    a[4] = FORMAT_VERSION;
    a[5] = suite;
    a[6] = flags;
    a
}

impl<G: PrimeGroup> Envelope<G> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let edek = self.edek.to_bytes();
        let mut out = Vec::with_capacity(FIXED_HEADER_LEN + edek.len() + self.body.len());
        out.extend(MAGIC);
        out.push(FORMAT_VERSION);
        out.push(self.suite);
        out.push(self.flags);
        out.extend((edek.len() as u16).to_be_bytes());
        out.extend(edek);
        out.extend(&self.body);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EnvelopeError> {
        let (edek, body) = split_edek::<G>(bytes)?;
        Ok(join_parts(edek, body))
    }

    pub fn is_signed(&self) -> bool {
        self.flags & FLAG_SIGNED != 0
    }

    pub fn is_aont(&self) -> bool {
        self.flags & FLAG_AONT != 0
    }
}

fn join_parts<G: PrimeGroup>(edek: Edek<G>, body: OpaqueBody) -> Envelope<G> {
    Envelope { suite: body.suite, flags: body.flags, edek, body: body.bytes }
}

/// Separates the EDEK from an encoded envelope without any key material.
pub fn split_edek<G: PrimeGroup>(bytes: &[u8]) -> Result<(Edek<G>, OpaqueBody), EnvelopeError> {
    if bytes.len() < FIXED_HEADER_LEN {
        return Err(EnvelopeError::MalformedHeader("truncated header"));
    }
    if &bytes[..4] != MAGIC {
        return Err(EnvelopeError::MalformedHeader("bad magic"));
    }
    if bytes[4] != FORMAT_VERSION {
        return Err(EnvelopeError::MalformedHeader("unsupported version"));
    }
    let suite = bytes[5];
    let flags = bytes[6];
    if flags & !(FLAG_AONT | FLAG_SIGNED) != 0 {
        return Err(EnvelopeError::MalformedHeader("unknown flags"));
    }
    let edek_len = u16::from_be_bytes([bytes[7], bytes[8]]) as usize;
    let rest = &bytes[FIXED_HEADER_LEN..];
    if rest.len() < edek_len {
        return Err(EnvelopeError::MalformedHeader("truncated edek"));
    }
    let edek = Edek::from_bytes(&rest[..edek_len]).map_err(|_| EnvelopeError::MalformedHeader("bad edek"))?;
    Ok((edek, OpaqueBody { suite, flags, bytes: rest[edek_len..].to_vec() }))
}

/// Inverse of [`split_edek`]; bit-identical to the original when given its parts.
pub fn join_edek<G: PrimeGroup>(edek: &Edek<G>, body: &OpaqueBody) -> Vec<u8> {
    join_parts(*edek, body.clone()).to_bytes()
}

pub fn encrypt_data<G: PrimeGroup, R: RngCore + CryptoRng>(
    pk: &PublicKey<G>,
    data: &[u8],
    rng: &mut R,
    opts: EncryptOptions<'_>,
) -> Result<Envelope<G>, EnvelopeError> {
    if data.is_empty() {
        return Err(EnvelopeError::EmptyData);
    }
    let (dek, edek) = generate_dek(pk, rng);
    let mut flags = 0;
    let mut plaintext = match opts.signer {
        Some(id) => {
            flags |= FLAG_SIGNED;
            SignedPayload::sign(id, data).to_bytes()
        }
        None => data.to_vec(),
    };
    if opts.aont {
        flags |= FLAG_AONT;
        plaintext = aont::encode(&plaintext, rng);
    }
    let body = seal_body(&dek, SUITE_CHACHA20_POLY1305, flags, &plaintext, rng);
    plaintext.zeroize();
    Ok(Envelope { suite: SUITE_CHACHA20_POLY1305, flags, edek, body })
}

pub(crate) fn seal_body<R: RngCore + CryptoRng>(
    dek: &Dek,
    suite: u8,
    flags: u8,
    plaintext: &[u8],
    rng: &mut R,
) -> Vec<u8> {
    let nonce = sym::random_nonce(rng);
    let ct = sym::seal(dek.as_bytes(), &nonce, &aad(suite, flags), plaintext);
    let mut body = Vec::with_capacity(sym::NONCE_LEN + 8 + ct.len());
    body.extend(nonce);
    body.extend((ct.len() as u64).to_be_bytes());
    body.extend(ct);
    body
}

/// Opens an envelope body with an already-recovered DEK: authenticates,
/// reverses the AONT pass and verifies any embedded signature.
pub fn open_with_dek(dek: &Dek, suite: u8, flags: u8, body: &[u8]) -> Result<Opened, EnvelopeError> {
    if suite != SUITE_CHACHA20_POLY1305 {
        return Err(EnvelopeError::UnsupportedSuite(suite));
    }
    if body.len() < sym::NONCE_LEN + 8 {
        return Err(EnvelopeError::MalformedHeader("truncated body"));
    }
    let nonce: [u8; sym::NONCE_LEN] = body[..sym::NONCE_LEN].try_into().unwrap();
    let len = u64::from_be_bytes(body[sym::NONCE_LEN..sym::NONCE_LEN + 8].try_into().unwrap());
    let ct = &body[sym::NONCE_LEN + 8..];
    if ct.len() as u64 != len {
        return Err(EnvelopeError::MalformedHeader("body length mismatch"));
    }
    let mut plaintext =
        sym::open(dek.as_bytes(), &nonce, &aad(suite, flags), ct).map_err(|_| EnvelopeError::BadAuth)?;
    if flags & FLAG_AONT != 0 {
        plaintext = aont::decode(&plaintext)?;
    }
    if flags & FLAG_SIGNED != 0 {
        let signed = SignedPayload::from_bytes(&plaintext)?;
        signed.verify()?;
        return Ok(Opened { data: signed.data, signer: Some(signed.signer) });
    }
    Ok(Opened { data: plaintext, signer: None })
}

pub fn decrypt_data<G: PrimeGroup>(sk: &SecretKey<G>, env: &Envelope<G>) -> Result<Opened, EnvelopeError> {
    open_with_dek(&env.edek.open(sk), env.suite, env.flags, &env.body)
}

/// Like [`decrypt_data`] but additionally requires a signature by `signer`.
pub fn decrypt_data_from<G: PrimeGroup>(
    sk: &SecretKey<G>,
    env: &Envelope<G>,
    signer: &VerifyingKey,
) -> Result<Vec<u8>, EnvelopeError> {
    let opened = decrypt_data(sk, env)?;
    match opened.signer {
        Some(s) if s == *signer => Ok(opened.data),
        _ => Err(EnvelopeError::BadSignature),
    }
}

/// Recipient side of a delegated read: `msg` is the node's re-encryption of
/// the envelope's EDEK.
pub fn decrypt_delegated_data<G: PrimeGroup>(
    sk: &SecretKey<G>,
    msg: &ReencryptedMessage<G>,
    body: &OpaqueBody,
) -> Result<Opened, EnvelopeError> {
    let seed = decrypt_delegated(sk, msg)?;
    open_with_dek(&Dek::from_seed(&seed), body.suite, body.flags, &body.bytes)
}

#[cfg(test)]
mod tests;
