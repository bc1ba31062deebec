use rand::{CryptoRng, RngCore};

use super::{decrypt_elem, keygen, reencrypt, rekey, PreCiphertext, PreError, PublicKey, ReKey, SecretKey};
use crate::group::{Element, PrimeGroup, Scalar};
use crate::sym;

const WRAP_INFO: &[u8] = b"prekms/wrap-ephemeral/v1";

/// What a node holds to re-encrypt from `A` to `B` when only `pk_B` is known:
/// a re-encryption key towards an ephemeral key pair plus that pair's secret
/// sealed to `B`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DelegationBundle<G: PrimeGroup> {
    pub rekey: ReKey<G>,
    pub ephemeral_pk: PublicKey<G>,
    pub wrapped_eph: Vec<u8>,
}

/// Output of a delegated re-encryption: the ciphertext under the ephemeral
/// key and the sealed ephemeral secret, attached verbatim.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReencryptedMessage<G: PrimeGroup> {
    pub c_e: PreCiphertext<G>,
    pub wrapped_eph: Vec<u8>,
}

/// Seals a scalar to `pk`: fresh `r`, shared secret `pk^r`, HKDF, then
/// ChaCha20-Poly1305 over the fixed-length scalar encoding. The key is single
/// use, so a constant nonce is safe. Layout: `g^r ‖ ciphertext ‖ tag`.
fn wrap_scalar<G: PrimeGroup, R: RngCore + CryptoRng>(pk: &PublicKey<G>, secret: &Scalar<G>, rng: &mut R) -> Vec<u8> {
    let r = Scalar::<G>::random_nonzero(rng);
    let eph = Element::<G>::base_pow(&r);
    let key = wrap_key(&pk.0.pow(&r), &eph);
    let mut out = eph.to_bytes();
    out.extend(sym::seal(&key, &[0u8; sym::NONCE_LEN], &[G::ID], &secret.to_bytes()));
    out
}

fn wrap_key<G: PrimeGroup>(shared: &Element<G>, eph: &Element<G>) -> [u8; sym::KEY_LEN] {
    let mut ikm = shared.to_bytes();
    ikm.extend(eph.to_bytes());
    sym::derive_key(WRAP_INFO, &ikm)
}

/// Opens a wrapped ephemeral secret. Any failure, including a wrong
/// recipient key or a modified byte, is reported as `WrongRecipient`.
pub fn unwrap_ephemeral<G: PrimeGroup>(sk: &SecretKey<G>, wrapped: &[u8]) -> Result<SecretKey<G>, PreError> {
    if wrapped.len() != G::ELEMENT_LEN + G::SCALAR_LEN + sym::TAG_LEN {
        return Err(PreError::WrongRecipient);
    }
    let (eph_bytes, ct) = wrapped.split_at(G::ELEMENT_LEN);
    let eph = Element::<G>::from_bytes(eph_bytes).map_err(|_| PreError::WrongRecipient)?;
    let key = wrap_key(&eph.pow(sk.scalar()), &eph);
    let raw = sym::open(&key, &[0u8; sym::NONCE_LEN], &[G::ID], ct).map_err(|_| PreError::WrongRecipient)?;
    SecretKey::from_bytes(&raw).map_err(|_| PreError::WrongRecipient)
}

/// Builds a delegation from `sk_a` to the holder of `pk_b`. The ephemeral
/// secret is dropped (and zeroized) before returning.
pub fn delegate<G: PrimeGroup, R: RngCore + CryptoRng>(
    sk_a: &SecretKey<G>,
    pk_b: &PublicKey<G>,
    rng: &mut R,
) -> DelegationBundle<G> {
    let eph = keygen::<G, R>(rng);
    let rekey = rekey(sk_a, &eph.secret);
    let wrapped_eph = wrap_scalar(pk_b, eph.secret.scalar(), rng);
    DelegationBundle { rekey, ephemeral_pk: eph.public, wrapped_eph }
}

pub fn reencrypt_delegated<G: PrimeGroup>(
    bundle: &DelegationBundle<G>,
    ct: &PreCiphertext<G>,
) -> ReencryptedMessage<G> {
    ReencryptedMessage { c_e: reencrypt(&bundle.rekey, ct), wrapped_eph: bundle.wrapped_eph.clone() }
}

pub fn decrypt_delegated<G: PrimeGroup>(
    sk_b: &SecretKey<G>,
    msg: &ReencryptedMessage<G>,
) -> Result<Element<G>, PreError> {
    let sk_e = unwrap_ephemeral(sk_b, &msg.wrapped_eph)?;
    Ok(decrypt_elem(&sk_e, &msg.c_e))
}
