//! Canonical byte encodings. Every higher layer (envelopes, the node wire
//! format, the policy store log) uses only these.
//!
//! * ciphertext: `version ‖ group_id ‖ c1 ‖ c2 ‖ hops`
//! * rekey: `group_id ‖ factor`
//! * bundle: `group_id ‖ factor ‖ pk_e ‖ len(u16) ‖ wrapped`
//! * share: `group_id ‖ kind ‖ index(u32) ‖ needed(u32) ‖ total(u32) ‖ value`
//! * partial: `group_id ‖ index(u32) ‖ hops ‖ c2_part`
//! * re-encrypted message: `ciphertext ‖ len(u16) ‖ wrapped`
//!
//! Integers are big-endian.

use super::{
    DelegationBundle, PartialReencryption, PreCiphertext, PreError, PublicKey, ReKey, ReKeyShare, ReencryptedMessage,
    ShareScheme, CIPHERTEXT_VERSION,
};
use crate::group::{Element, PrimeGroup, Scalar};

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], PreError> {
        if self.buf.len() < n {
            return Err(PreError::Malformed("truncated"));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, PreError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, PreError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, PreError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn group<G: PrimeGroup>(&mut self) -> Result<(), PreError> {
        let got = self.u8()?;
        if got != G::ID {
            return Err(PreError::GroupMismatch { expected: G::ID, got });
        }
        Ok(())
    }

    fn element<G: PrimeGroup>(&mut self) -> Result<Element<G>, PreError> {
        Ok(Element::from_bytes(self.take(G::ELEMENT_LEN)?)?)
    }

    fn scalar<G: PrimeGroup>(&mut self) -> Result<Scalar<G>, PreError> {
        Ok(Scalar::from_bytes(self.take(G::SCALAR_LEN)?)?)
    }

    fn finish(self) -> Result<(), PreError> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(PreError::Malformed("trailing bytes"))
        }
    }
}

fn push_wrapped(out: &mut Vec<u8>, wrapped: &[u8]) {
    let len = u16::try_from(wrapped.len()).expect("wrapped ephemeral keys are short");
    out.extend(len.to_be_bytes());
    out.extend(wrapped);
}

impl<G: PrimeGroup> PreCiphertext<G> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::encoded_len());
        out.push(CIPHERTEXT_VERSION);
        out.push(G::ID);
        out.extend(self.c1.to_bytes());
        out.extend(self.c2.to_bytes());
        out.push(self.hops);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PreError> {
        let mut r = Reader { buf: bytes };
        let ct = Self::read(&mut r)?;
        r.finish()?;
        Ok(ct)
    }

    fn read(r: &mut Reader<'_>) -> Result<Self, PreError> {
        let version = r.u8()?;
        if version != CIPHERTEXT_VERSION {
            return Err(PreError::UnsupportedVersion(version));
        }
        r.group::<G>()?;
        let c1 = r.element()?;
        let c2 = r.element()?;
        let hops = r.u8()?;
        Ok(Self { c1, c2, hops })
    }
}

impl<G: PrimeGroup> ReKey<G> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![G::ID];
        out.extend(self.factor().to_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PreError> {
        let mut r = Reader { buf: bytes };
        r.group::<G>()?;
        let rk = ReKey::from_factor(r.scalar()?)?;
        r.finish()?;
        Ok(rk)
    }
}

impl<G: PrimeGroup> DelegationBundle<G> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.rekey.to_bytes();
        out.extend(self.ephemeral_pk.to_bytes());
        push_wrapped(&mut out, &self.wrapped_eph);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PreError> {
        let mut r = Reader { buf: bytes };
        r.group::<G>()?;
        let rekey = ReKey::from_factor(r.scalar()?)?;
        let ephemeral_pk = PublicKey(r.element()?);
        let len = r.u16()? as usize;
        let wrapped_eph = r.take(len)?.to_vec();
        r.finish()?;
        Ok(Self { rekey, ephemeral_pk, wrapped_eph })
    }
}

impl<G: PrimeGroup> ReencryptedMessage<G> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.c_e.to_bytes();
        push_wrapped(&mut out, &self.wrapped_eph);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PreError> {
        let mut r = Reader { buf: bytes };
        let c_e = PreCiphertext::read(&mut r)?;
        let len = r.u16()? as usize;
        let wrapped_eph = r.take(len)?.to_vec();
        r.finish()?;
        Ok(Self { c_e, wrapped_eph })
    }
}

const SHARE_ADDITIVE: u8 = 1;
const SHARE_THRESHOLD: u8 = 2;

impl<G: PrimeGroup> ReKeyShare<G> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let (kind, needed, total) = match self.scheme {
            ShareScheme::Additive { total } => (SHARE_ADDITIVE, total, total),
            ShareScheme::Threshold { threshold, total } => (SHARE_THRESHOLD, threshold, total),
        };
        let mut out = vec![G::ID, kind];
        out.extend(self.index.to_be_bytes());
        out.extend(needed.to_be_bytes());
        out.extend(total.to_be_bytes());
        out.extend(self.value.to_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PreError> {
        let mut r = Reader { buf: bytes };
        r.group::<G>()?;
        let kind = r.u8()?;
        let index = r.u32()?;
        let needed = r.u32()?;
        let total = r.u32()?;
        let scheme = match kind {
            SHARE_ADDITIVE if needed == total => ShareScheme::Additive { total },
            SHARE_THRESHOLD if (1..=total).contains(&needed) => ShareScheme::Threshold { threshold: needed, total },
            _ => return Err(PreError::Malformed("share scheme")),
        };
        if index == 0 || index > total {
            return Err(PreError::Malformed("share index"));
        }
        let value = r.scalar()?;
        r.finish()?;
        Ok(Self { index, value, scheme })
    }
}

impl<G: PrimeGroup> PartialReencryption<G> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![G::ID];
        out.extend(self.index.to_be_bytes());
        out.push(self.hops);
        out.extend(self.c2_part.to_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PreError> {
        let mut r = Reader { buf: bytes };
        r.group::<G>()?;
        let index = r.u32()?;
        let hops = r.u8()?;
        let c2_part = r.element()?;
        r.finish()?;
        Ok(Self { index, c2_part, hops })
    }
}
