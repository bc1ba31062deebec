//! Encrypted streams. Every block has its own random DEK; block `i` carries
//! the EDEK for block `i+1`, so a consumer can request the next key while
//! still playing the current block. Block 0 also carries its own EDEK.
//! Block bodies are AONT-packaged before encryption.

use std::iter::Peekable;

use rand::{CryptoRng, RngCore};

use super::{
    aont, generate_dek, open_with_dek, seal_body, Dek, Edek, EnvelopeError, FLAG_AONT, SUITE_CHACHA20_POLY1305,
};
use crate::group::PrimeGroup;
use crate::pre::{PublicKey, SecretKey};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StreamBlock<G: PrimeGroup> {
    pub seq: u64,
    /// Only on block 0.
    pub edek_self: Option<Edek<G>>,
    /// `None` on the final block.
    pub edek_next: Option<Edek<G>>,
    pub body: Vec<u8>,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum StreamError {
    #[error("block {got} arrived but block {expected} was expected")]
    MissingPredecessor { expected: u64, got: u64 },
    #[error("stream ended before block {0} was announced")]
    UnexpectedEnd(u64),
    #[error(transparent)]
    Envelope(#[from] EnvelopeError),
}

/// Turns an EDEK into a DEK: directly for the channel owner, or through a
/// re-encryption node for a subscriber.
pub trait DekSource<G: PrimeGroup> {
    fn open_edek(&mut self, edek: &Edek<G>) -> Result<Dek, EnvelopeError>;
}

/// The channel owner's secret key.
pub struct OwnerKey<'a, G: PrimeGroup>(pub &'a SecretKey<G>);

impl<G: PrimeGroup> DekSource<G> for OwnerKey<'_, G> {
    fn open_edek(&mut self, edek: &Edek<G>) -> Result<Dek, EnvelopeError> {
        Ok(edek.open(self.0))
    }
}

impl<G: PrimeGroup, F> DekSource<G> for F
where
    F: FnMut(&Edek<G>) -> Result<Dek, EnvelopeError>,
{
    fn open_edek(&mut self, edek: &Edek<G>) -> Result<Dek, EnvelopeError> {
        self(edek)
    }
}

pub struct StreamEncryptor<'r, G: PrimeGroup, I: Iterator<Item = Vec<u8>>, R> {
    pk: PublicKey<G>,
    blocks: Peekable<I>,
    rng: &'r mut R,
    seq: u64,
    current: Option<(Dek, Edek<G>)>,
}

pub fn stream_encrypt<'r, G, I, R>(
    pk: &PublicKey<G>,
    blocks: I,
    rng: &'r mut R,
) -> StreamEncryptor<'r, G, I::IntoIter, R>
where
    G: PrimeGroup,
    I: IntoIterator<Item = Vec<u8>>,
    R: RngCore + CryptoRng,
{
    StreamEncryptor { pk: *pk, blocks: blocks.into_iter().peekable(), rng, seq: 0, current: None }
}

impl<G, I, R> Iterator for StreamEncryptor<'_, G, I, R>
where
    G: PrimeGroup,
    I: Iterator<Item = Vec<u8>>,
    R: RngCore + CryptoRng,
{
    type Item = StreamBlock<G>;

    fn next(&mut self) -> Option<StreamBlock<G>> {
        let data = self.blocks.next()?;
        let first = self.current.is_none();
        let (dek, edek) = match self.current.take() {
            Some(cur) => cur,
            None => generate_dek(&self.pk, self.rng),
        };
        let edek_next = if self.blocks.peek().is_some() {
            let next = generate_dek(&self.pk, self.rng);
            let e = next.1;
            self.current = Some(next);
            Some(e)
        } else {
            None
        };
        let flags = FLAG_AONT;
        let package = aont::encode(&data, self.rng);
        let mut body = self.seq.to_be_bytes().to_vec();
        body.extend(seal_body(&dek, SUITE_CHACHA20_POLY1305, flags, &package, self.rng));
        let block = StreamBlock { seq: self.seq, edek_self: first.then_some(edek), edek_next, body };
        self.seq += 1;
        Some(block)
    }
}

fn open_block<G: PrimeGroup>(dek: &Dek, block: &StreamBlock<G>) -> Result<Vec<u8>, EnvelopeError> {
    let (seq, body) = block.body.split_at(8.min(block.body.len()));
    if seq != block.seq.to_be_bytes() {
        return Err(EnvelopeError::BadAuth);
    }
    Ok(open_with_dek(dek, SUITE_CHACHA20_POLY1305, FLAG_AONT, body)?.data)
}

/// Stateful consumer. It may join mid-stream: the first block it sees
/// (other than block 0) cannot be decrypted, but its `edek_next` unlocks the
/// following block, and so on.
pub struct StreamDecryptor<G: PrimeGroup, S: DekSource<G>> {
    source: S,
    expected: Option<u64>,
    next_edek: Option<Edek<G>>,
}

impl<G: PrimeGroup, S: DekSource<G>> StreamDecryptor<G, S> {
    pub fn new(source: S) -> Self {
        StreamDecryptor { source, expected: None, next_edek: None }
    }

    /// Returns the plaintext of `block`, or `None` for a mid-stream first
    /// block whose key was announced before the consumer joined.
    pub fn push(&mut self, block: &StreamBlock<G>) -> Result<Option<Vec<u8>>, StreamError> {
        let edek = match self.expected {
            Some(expected) if block.seq != expected => {
                return Err(StreamError::MissingPredecessor { expected, got: block.seq });
            }
            Some(_) => Some(self.next_edek.take().ok_or(StreamError::UnexpectedEnd(block.seq))?),
            None => block.edek_self,
        };
        self.expected = Some(block.seq + 1);
        self.next_edek = block.edek_next;
        match edek {
            Some(edek) => {
                let dek = self.source.open_edek(&edek)?;
                Ok(Some(open_block(&dek, block)?))
            }
            None => Ok(None),
        }
    }
}

/// Decrypts a whole stream that starts at block 0.
pub fn stream_decrypt<'a, G, S, I>(source: S, blocks: I) -> Result<Vec<u8>, StreamError>
where
    G: PrimeGroup,
    S: DekSource<G>,
    I: IntoIterator<Item = &'a StreamBlock<G>>,
{
    let mut dec = StreamDecryptor::new(source);
    let mut out = Vec::new();
    for (i, block) in blocks.into_iter().enumerate() {
        if i == 0 && block.seq != 0 {
            return Err(StreamError::MissingPredecessor { expected: 0, got: block.seq });
        }
        out.extend(dec.push(block)?.expect("block 0 carries its own key"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{Ristretto, TestGroup};
    use crate::pre::{decrypt_delegated, delegate, keygen, reencrypt_delegated};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn chunks() -> Vec<Vec<u8>> {
        vec![b"first block".to_vec(), vec![2u8; 5000], b"third".to_vec()]
    }

    #[test]
    fn three_block_round_trip() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let kp = keygen::<Ristretto, _>(&mut rng);
        let blocks: Vec<_> = stream_encrypt(&kp.public, chunks(), &mut rng).collect();
        assert_eq!(blocks.len(), 3);
        assert!(blocks[0].edek_self.is_some() && blocks[1].edek_self.is_none());
        assert!(blocks[2].edek_next.is_none());
        let out = stream_decrypt(OwnerKey(&kp.secret), &blocks).unwrap();
        assert_eq!(out, chunks().concat());
    }

    #[test]
    fn single_block_stream_is_an_envelope() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let kp = keygen::<Ristretto, _>(&mut rng);
        let blocks: Vec<_> = stream_encrypt(&kp.public, vec![b"only".to_vec()], &mut rng).collect();
        assert_eq!(blocks.len(), 1);
        assert!(blocks[0].edek_self.is_some() && blocks[0].edek_next.is_none());
        assert_eq!(stream_decrypt(OwnerKey(&kp.secret), &blocks).unwrap(), b"only");
    }

    #[test]
    fn out_of_order_block_is_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let kp = keygen::<Ristretto, _>(&mut rng);
        let blocks: Vec<_> = stream_encrypt(&kp.public, chunks(), &mut rng).collect();
        let mut dec = StreamDecryptor::new(OwnerKey(&kp.secret));
        dec.push(&blocks[0]).unwrap();
        assert_eq!(dec.push(&blocks[2]), Err(StreamError::MissingPredecessor { expected: 1, got: 2 }));
        assert!(matches!(
            stream_decrypt(OwnerKey(&kp.secret), &blocks[1..]),
            Err(StreamError::MissingPredecessor { expected: 0, got: 1 })
        ));
    }

    #[test]
    fn late_joiner_decrypts_from_next_block_via_one_reencryption_each() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let channel = keygen::<TestGroup, _>(&mut rng);
        let viewer = keygen::<TestGroup, _>(&mut rng);
        let bundle = delegate(&channel.secret, &viewer.public, &mut rng);
        let data: Vec<Vec<u8>> = (0..6u8).map(|i| vec![i; 100]).collect();
        let blocks: Vec<_> = stream_encrypt(&channel.public, data.clone(), &mut rng).collect();

        let mut reencryptions = 0;
        let source = |edek: &Edek<TestGroup>| {
            reencryptions += 1;
            let msg = reencrypt_delegated(&bundle, &edek.0);
            Ok(Dek::from_seed(&decrypt_delegated(&viewer.secret, &msg)?))
        };
        let k = 2;
        let mut dec = StreamDecryptor::new(source);
        assert_eq!(dec.push(&blocks[k]).unwrap(), None);
        for i in k + 1..blocks.len() {
            assert_eq!(dec.push(&blocks[i]).unwrap().unwrap(), data[i]);
        }
        assert_eq!(reencryptions, blocks.len() - k - 1);
    }

    #[test]
    fn each_block_needs_the_previous_announcement() {
        // A block's own key is only ever published in its predecessor.
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let kp = keygen::<Ristretto, _>(&mut rng);
        let blocks: Vec<_> = stream_encrypt(&kp.public, chunks(), &mut rng).collect();
        let wrong_dek = blocks[0].edek_self.unwrap().open(&kp.secret);
        assert_eq!(open_block(&wrong_dek, &blocks[1]), Err(EnvelopeError::BadAuth));
        let right_dek = blocks[0].edek_next.unwrap().open(&kp.secret);
        assert_eq!(open_block(&right_dek, &blocks[1]).unwrap(), chunks()[1]);
    }
}
