//! Package transform (all-or-nothing): recovering any of the data requires
//! every block of the package.
//!
//! The input is zero-padded to whole 4 KiB blocks and masked with a ChaCha20
//! keystream under a random inner key `K`. A trailing key block carries
//! `K ⊕ SHA256(len ‖ masked blocks)`, the true length, and a check value
//! `SHA256(tag ‖ K)`. Dropping or altering any block changes the digest, so
//! the wrong `K` is recovered and the check fails.
//!
//! ```text
//! masked_0 | ... | masked_{n-1} | key_block
//! key_block = masked_key[32] | len u64 | check[32] | zero padding
//! ```

use chacha20::cipher::{KeyIvInit, StreamCipher};
use chacha20::ChaCha20;
use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const BLOCK_SIZE: usize = 4096;

const CHECK_TAG: &[u8] = b"prekms/aont-check/v1";

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum AontError {
    #[error("package length is not a whole number of blocks")]
    Misaligned,
    #[error("package is incomplete or was modified")]
    Incomplete,
}

/// Length of the package for `len` bytes of input.
pub fn encoded_len(len: usize) -> usize {
    len.div_ceil(BLOCK_SIZE) * BLOCK_SIZE + BLOCK_SIZE
}

fn keystream_xor(key: &[u8; 32], buf: &mut [u8]) {
    ChaCha20::new(key.into(), &[0u8; 12].into()).apply_keystream(buf);
}

fn digest(len: u64, masked: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(len.to_be_bytes());
    h.update(masked);
    h.finalize().into()
}

fn check_value(key: &[u8; 32]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(CHECK_TAG);
    h.update(key);
    h.finalize().into()
}

pub fn encode<R: RngCore + CryptoRng>(data: &[u8], rng: &mut R) -> Vec<u8> {
    let mut key = [0u8; 32];
    rng.fill_bytes(&mut key);

    let mut out = vec![0u8; encoded_len(data.len())];
    let body_len = out.len() - BLOCK_SIZE;
    out[..data.len()].copy_from_slice(data);
    keystream_xor(&key, &mut out[..body_len]);

    let len = data.len() as u64;
    let d = digest(len, &out[..body_len]);
    let trailer = &mut out[body_len..];
    for i in 0..32 {
        trailer[i] = key[i] ^ d[i];
    }
    trailer[32..40].copy_from_slice(&len.to_be_bytes());
    trailer[40..72].copy_from_slice(&check_value(&key));
    key.fill(0);
    out
}

pub fn decode(package: &[u8]) -> Result<Vec<u8>, AontError> {
    if package.len() < BLOCK_SIZE || !package.len().is_multiple_of(BLOCK_SIZE) {
        return Err(AontError::Misaligned);
    }
    let body_len = package.len() - BLOCK_SIZE;
    let trailer = &package[body_len..];
    let len = u64::from_be_bytes(trailer[32..40].try_into().unwrap());
    if encoded_len(len as usize) != package.len() || trailer[72..].iter().any(|&b| b != 0) {
        return Err(AontError::Incomplete);
    }
    let d = digest(len, &package[..body_len]);
    let mut key = [0u8; 32];
    for i in 0..32 {
        key[i] = trailer[i] ^ d[i];
    }
    if check_value(&key) != trailer[40..72] {
        return Err(AontError::Incomplete);
    }
    let mut data = package[..body_len].to_vec();
    keystream_xor(&key, &mut data);
    data.truncate(len as usize);
    key.fill(0);
    Ok(data)
}
